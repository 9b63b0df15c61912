"""HTTP facade for live labeling and what-if exploration.

One server instance fronts one experiment directory. Sessions walk a
per-session task queue (Likert tasks for the pending round, comparison
tasks once pairs exist); answers are persisted in forms the pipeline
commands ingest directly. Prediction endpoints are read-only.
"""

from __future__ import annotations

import json
import secrets
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse
from fastapi.staticfiles import StaticFiles

from . import gp, preference, proactive
from .pipeline import Experiment, OrderingError, solution_id
from .render import render_spec
from .seeds import child_seed
from .space import normalize, validate


class ServiceError(Exception):
    def __init__(self, status: int, code: str, message: str, field: str | None = None):
        self.status = status
        self.code = code
        self.message = message
        self.field = field


@dataclass
class _Task:
    task_id: str
    kind: str                  # "likert" | "comparison"
    payload: dict
    answer: object = None      # set on submit


@dataclass
class _Session:
    session_id: str
    tasks: list[_Task]
    cursor: int = 0
    served: set = field(default_factory=set)


class _ModelCache:
    """Reload a JSON-backed model only when the file changes."""

    def __init__(self, path: Path, loader):
        self.path = path
        self.loader = loader
        self.mtime = None
        self.value = None

    def get(self):
        if not self.path.exists():
            return None
        mtime = self.path.stat().st_mtime_ns
        if self.value is None or mtime != self.mtime:
            self.value = self.loader(self.path)
            self.mtime = mtime
        return self.value


def _load_pairs(path: Path):
    doc = json.loads(path.read_text())
    return np.array(doc["items"], dtype=float), [tuple(p) for p in doc["pairs"]]


def build_session_tasks(exp: Experiment, session_seed: int) -> list[_Task]:
    """Task queue for a fresh session, shuffled per session.

    Pending labeling round -> Likert tasks with duplicate probes injected
    at the configured rate; otherwise pending comparison pairs -> vote
    tasks. A finished experiment yields an empty queue.
    """
    cfg = exp.config
    space = exp.space
    state = exp.state
    rng = np.random.default_rng(session_seed)
    tasks: list[_Task] = []

    r = state.get("planned_round")
    if r is not None:
        plan = json.loads(exp.plan_path(r).read_text())
        batch = np.array(plan["batch"], dtype=float)
        b = len(batch)
        order = rng.permutation(b)
        rate = float(cfg["likert_duplicate_rate"])
        n_dup = max(1, int(round(rate * b))) if rate > 0 else 0
        dups = rng.choice(b, size=min(n_dup, b), replace=False)
        presented = list(order) + list(dups)
        for pos, sol in enumerate(presented):
            sid = solution_id(r, int(sol))
            tasks.append(_Task(
                task_id=f"likert-{pos}",
                kind="likert",
                payload={
                    "solution_id": sid,
                    "round_index": r,
                    "presentation_index": pos,
                    "vector": batch[int(sol)].tolist(),
                    "render": render_spec(space, batch[int(sol)]),
                },
            ))
        return tasks

    if exp.pairs_path.exists() and not state.get("stage2_done"):
        items, pairs = _load_pairs(exp.pairs_path)
        order = rng.permutation(len(pairs))
        for pos, m in enumerate(order):
            i, j = pairs[int(m)]
            tasks.append(_Task(
                task_id=f"pair-{pos}",
                kind="comparison",
                payload={
                    "pair_index": int(m),
                    "left": {"id": int(i), "vector": items[i].tolist(),
                             "render": render_spec(space, items[i])},
                    "right": {"id": int(j), "vector": items[j].tolist(),
                              "render": render_spec(space, items[j])},
                },
            ))
    return tasks


def create_app(exp_dir, static_dir=None) -> FastAPI:
    exp = Experiment(root=Path(exp_dir))
    if not exp.config_path.exists():
        raise OrderingError(f"{exp_dir} is not an experiment directory (missing config.json)")
    experiment_id = exp.root.name
    app = FastAPI(title="feeler service")
    sessions: dict[str, _Session] = {}
    stage1 = _ModelCache(exp.stage1_path, gp.load_model)
    stage2 = _ModelCache(exp.stage2_path, preference.load_model)

    @app.exception_handler(ServiceError)
    async def _service_error(_req: Request, exc: ServiceError):
        body = {"code": exc.code, "message": exc.message}
        if exc.field:
            body["field"] = exc.field
        return JSONResponse(status_code=exc.status, content=body)

    def _get_session(session_id: str) -> _Session:
        sess = sessions.get(session_id)
        if sess is None:
            raise ServiceError(404, "unknown_session", f"no session {session_id}")
        return sess

    @app.post("/sessions")
    def create_session():
        state = exp.state
        has_work = state.get("planned_round") is not None or (
            exp.pairs_path.exists() and not state.get("stage2_done"))
        has_model = exp.stage1_path.exists()
        if not has_work and not has_model:
            raise ServiceError(409, "no_work",
                               "experiment has no pending labeling work and no model yet")
        session_id = secrets.token_hex(16)
        seed = child_seed(exp.config["seed"], f"session-{session_id}")
        sessions[session_id] = _Session(session_id=session_id,
                                        tasks=build_session_tasks(exp, seed))
        return {"session_id": session_id, "tasks": len(sessions[session_id].tasks)}

    @app.get("/sessions/{session_id}/next")
    def next_task(session_id: str):
        sess = _get_session(session_id)
        if sess.cursor >= len(sess.tasks):
            return {"done": True}
        task = sess.tasks[sess.cursor]
        sess.served.add(task.task_id)
        return {"done": False, "task_id": task.task_id, "kind": task.kind,
                "position": sess.cursor, "total": len(sess.tasks), **task.payload}

    @app.post("/sessions/{session_id}/submit")
    def submit(session_id: str, body: dict):
        sess = _get_session(session_id)
        task_id = body.get("task_id")
        task = next((t for t in sess.tasks if t.task_id == task_id), None)
        if task is None or task.task_id not in sess.served:
            raise ServiceError(404, "unknown_task",
                               f"task {task_id!r} was not served to this session")
        answer = body.get("answer")
        if task.kind == "likert":
            if not isinstance(answer, int) or not 1 <= answer <= 5:
                raise ServiceError(422, "bad_answer", "Likert answer must be 1..5",
                                   field="answer")
        else:
            valid = {task.payload["left"]["id"], task.payload["right"]["id"]}
            if answer not in valid:
                raise ServiceError(422, "bad_answer",
                                   f"winner must be one of {sorted(valid)}", field="answer")
        if task.answer is not None:
            if task.answer != answer:
                raise ServiceError(409, "conflict",
                                   f"task {task_id} already answered differently")
            return {"ok": True, "duplicate": True}
        task.answer = answer
        if task is sess.tasks[sess.cursor]:
            sess.cursor += 1
            while sess.cursor < len(sess.tasks) and sess.tasks[sess.cursor].answer is not None:
                sess.cursor += 1
        _flush_session(exp, sess)
        return {"ok": True, "remaining": sum(1 for t in sess.tasks if t.answer is None)}

    @app.post("/whatif")
    def what_if(body: dict):
        vector = body.get("vector")
        if not isinstance(vector, list):
            raise ServiceError(422, "bad_vector", "body must carry a 'vector' array",
                               field="vector")
        space = exp.space
        v = np.asarray(vector, dtype=float)
        if v.shape != (space.dimension,):
            raise ServiceError(422, "bad_vector",
                               f"vector must have length {space.dimension}", field="vector")
        violations = validate(space, v)
        if violations:
            raise ServiceError(422, "invalid_vector", "; ".join(violations), field="vector")
        s1 = stage1.get()
        if s1 is None:
            raise ServiceError(409, "no_model", "no stage-1 model yet; label a round first")
        u = normalize(space, v)
        mean, var = gp.predict(s1, u)
        out = {"stage1": {"mean": mean, "std": float(np.sqrt(var))},
               "render": render_spec(space, v)}
        s2 = stage2.get()
        if s2 is not None:
            mean2, var2 = preference.predict_preference(s2, u)
            out["stage2"] = {"mean": mean2, "std": float(np.sqrt(var2))}
        return out

    @app.get("/experiments/{exp_id}/status")
    def status(exp_id: str):
        _check_exp(exp_id)
        state = exp.state
        return {"experiment": experiment_id, **state,
                "has_stage1": exp.stage1_path.exists(),
                "has_stage2": exp.stage2_path.exists()}

    @app.get("/experiments/{exp_id}/reports")
    def reports(exp_id: str):
        _check_exp(exp_id)
        out = {}
        for path in sorted(exp.reports_dir.glob("*.json")):
            out[path.stem] = json.loads(path.read_text())
        return out

    @app.get("/space")
    def space_doc():
        return json.loads(exp.space_path.read_text())

    def _check_exp(exp_id: str):
        if exp_id != experiment_id:
            raise ServiceError(404, "unknown_experiment", f"no experiment {exp_id!r} here")

    if static_dir and Path(static_dir).is_dir():
        app.mount("/", StaticFiles(directory=static_dir, html=True), name="panel")
    return app


def _flush_session(exp: Experiment, sess: _Session):
    """Persist everything answered so far in pipeline-ingestable form."""
    exp.live_dir.mkdir(exist_ok=True)
    likert = [t for t in sess.tasks if t.kind == "likert" and t.answer is not None]
    if likert:
        records = [
            proactive.RatingRecord(
                rater_id=sess.session_id,
                solution_id=t.payload["solution_id"],
                score=int(t.answer),
                presentation_index=t.payload["presentation_index"],
            )
            for t in likert
        ]
        proactive.write_ratings_csv(
            records, exp.live_dir / f"ratings-{sess.session_id}.csv")
    votes = [t for t in sess.tasks if t.kind == "comparison" and t.answer is not None]
    if votes:
        doc = {"votes": [
            {"pair_index": t.payload["pair_index"], "winner_id": int(t.answer)}
            for t in votes
        ]}
        path = exp.live_dir / f"votes-{sess.session_id}.json"
        path.write_text(json.dumps(doc, sort_keys=True))


def merge_live_ratings(exp_dir) -> Path:
    """Concatenate all session rating files into one CSV for cmd_round."""
    exp = Experiment(root=Path(exp_dir))
    records = []
    for path in sorted(exp.live_dir.glob("ratings-*.csv")):
        records.extend(proactive.read_ratings_csv(path))
    if not records:
        raise OrderingError("no live ratings collected yet")
    out = exp.live_dir / "ratings-merged.csv"
    proactive.write_ratings_csv(records, out)
    return out


def merge_live_votes(exp_dir) -> Path:
    """Concatenate all session vote files into one document for cmd_tune."""
    exp = Experiment(root=Path(exp_dir))
    votes = []
    for path in sorted(exp.live_dir.glob("votes-*.json")):
        votes.extend(json.loads(path.read_text())["votes"])
    if not votes:
        raise OrderingError("no live votes collected yet")
    out = exp.live_dir / "votes-merged.json"
    out.write_text(json.dumps({"votes": votes}, sort_keys=True))
    return out
