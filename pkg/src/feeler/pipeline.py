"""Experiment orchestration: init -> rounds of labeling -> tune -> evaluate.

All state lives in one experiment directory as JSON/CSV artifacts. Every
command re-derives its randomness from the master seed and a stage tag,
writes through temp files with atomic renames, and treats state.json as
the commit point, so reruns are no-ops and crashes leave the previous
state intact.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import analysis as analysis_mod
from . import gp, metrics, oracle as oracle_mod, preference, proactive
from .seeds import child_seed
from .space import DesignSpace, load_space, normalize, sample_uniform, space_from_dict, space_to_dict

DEFAULT_CONFIG = {
    "seed": 0,
    "rounds": 2,
    "candidate_pool": 1000,
    "batch_cap": 64,
    "batch_size": None,
    "pairs": {"N": 2000, "n": 50, "M": 100},
    "metrics": {"ap_rho": 0.1, "ndcg_folds": 15},
    "likert_duplicate_rate": 0.1,
    "raters_required": 20,
    "kernel": {"norm": "l2sq"},
    "stage2": {"noise_init": 0.5, "tune_steps": 12, "tune_lr": 0.25},
    "oracle": None,
}


class ExperimentError(RuntimeError):
    pass


class OrderingError(ExperimentError):
    """A command ran before its prerequisites."""


@dataclass
class Experiment:
    """Handle to an experiment directory; loads artifacts on demand."""

    root: Path

    @property
    def config_path(self): return self.root / "config.json"
    @property
    def space_path(self): return self.root / "space.json"
    @property
    def oracle_path(self): return self.root / "oracle.json"
    @property
    def state_path(self): return self.root / "state.json"
    @property
    def stage1_path(self): return self.root / "stage1_model.json"
    @property
    def pairs_path(self): return self.root / "pairs.json"
    @property
    def comparison_path(self): return self.root / "comparison.json"
    @property
    def stage2_path(self): return self.root / "stage2_model.json"
    @property
    def rounds_dir(self): return self.root / "rounds"
    @property
    def reports_dir(self): return self.root / "reports"
    @property
    def live_dir(self): return self.root / "live"

    def plan_path(self, r: int): return self.rounds_dir / f"round_{r:03d}.plan.json"
    def labels_path(self, r: int): return self.rounds_dir / f"round_{r:03d}.labels.json"
    def ratings_path(self, r: int): return self.rounds_dir / f"round_{r:03d}.ratings.csv"

    @property
    def config(self) -> dict:
        return _read_json(self.config_path)

    @property
    def space(self) -> DesignSpace:
        return space_from_dict(_read_json(self.space_path))

    @property
    def state(self) -> dict:
        return _read_json(self.state_path)

    def oracle(self) -> oracle_mod.SyntheticOracle:
        if not self.oracle_path.exists():
            raise ExperimentError("experiment has no oracle fixture (live labeling mode)")
        return oracle_mod.load_oracle(self.oracle_path, self.space)

    def stage1_model(self) -> gp.GpPosterior:
        if not self.stage1_path.exists():
            raise OrderingError("no stage-1 model yet; run at least one labeling round")
        return gp.load_model(self.stage1_path)

    def stage2_model(self) -> preference.PreferenceModel:
        if not self.stage2_path.exists():
            raise OrderingError("no stage-2 model yet; run the tune command")
        return preference.load_model(self.stage2_path)

    def labels_for_round(self, r: int) -> list[proactive.LabeledSolution]:
        doc = _read_json(self.labels_path(r))
        return [
            proactive.LabeledSolution(
                solution_id=e["solution_id"], vector=np.array(e["vector"], dtype=float),
                y=float(e["y"]), n_raters_used=int(e["n_raters_used"]),
                round_index=int(e["round_index"]))
            for e in doc
        ]

    def all_labels(self, upto: int | None = None) -> list[proactive.LabeledSolution]:
        last = self.state["completed_rounds"] if upto is None else upto
        out = []
        for r in range(last):
            out.extend(self.labels_for_round(r))
        return out


def _read_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def _write_json(path, doc):
    tmp = Path(str(path) + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1)
        fh.write("\n")
    os.replace(tmp, path)


class _Lock:
    """One writer per experiment directory."""

    def __init__(self, root: Path):
        self.path = root / ".lock"
        self.fd = None

    def __enter__(self):
        try:
            self.fd = os.open(self.path, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
        except FileExistsError:
            raise ExperimentError(
                f"{self.path} exists: another command is running (or crashed; "
                f"remove the file if you are sure)") from None
        os.write(self.fd, str(os.getpid()).encode())
        return self

    def __exit__(self, *exc):
        if self.fd is not None:
            os.close(self.fd)
            os.unlink(self.path)
        return False


def _merged_config(user: dict) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))
    for key, value in user.items():
        if key not in cfg:
            raise ExperimentError(f"config: unknown field {key!r}")
        if isinstance(cfg.get(key), dict) and isinstance(value, dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    return cfg


def _planned_batch_size(cfg: dict, d: int) -> int:
    if cfg.get("batch_size"):
        return int(cfg["batch_size"])
    return min(proactive.batch_size(d), int(cfg["batch_cap"]))


def _plan_doc(r: int, batch: np.ndarray, selection: str,
              candidate_pool: int = 0, warning: bool = False) -> dict:
    return {
        "round_index": r,
        "selection": selection,
        "candidate_pool": candidate_pool,
        "spacing_warning": warning,
        "batch": np.asarray(batch).tolist(),
    }


def solution_id(round_index: int, position: int) -> str:
    return f"r{round_index}-s{position:03d}"


def cmd_init(space_file, config_file, out_dir, seed=None) -> Experiment:
    """Create the experiment directory with its config echo and round-0 plan."""
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        raise ExperimentError(f"{out} is not empty; refusing to overwrite an experiment")
    space = load_space(space_file)
    user_cfg = _read_json(config_file) if config_file else {}
    if not isinstance(user_cfg, dict):
        raise ExperimentError(f"{config_file}: config must be a JSON object")
    cfg = _merged_config(user_cfg)
    if seed is not None:
        cfg["seed"] = int(seed)

    exp = Experiment(root=out)
    out.mkdir(parents=True, exist_ok=True)
    exp.rounds_dir.mkdir()
    exp.reports_dir.mkdir()
    exp.live_dir.mkdir()

    oracle_cfg = cfg.get("oracle")
    if isinstance(oracle_cfg, dict):
        _write_json(exp.oracle_path, oracle_cfg)
    elif isinstance(oracle_cfg, str) and oracle_cfg != "live":
        _write_json(exp.oracle_path, _read_json(oracle_cfg))
        cfg["oracle"] = "oracle.json"
    elif oracle_cfg is None:
        # default desk-scale oracle so `init && round` works out of the box
        _write_json(exp.oracle_path,
                    oracle_mod.oracle_to_dict(oracle_mod.toy_oracle(space)))
        cfg["oracle"] = "oracle.json"

    b = _planned_batch_size(cfg, space.dimension)
    batch = sample_uniform(space, child_seed(cfg["seed"], "round-plan-0"), b)
    _write_json(exp.space_path, space_to_dict(space))
    _write_json(exp.config_path, cfg)
    _write_json(exp.plan_path(0), _plan_doc(0, batch, "uniform"))
    _write_json(exp.state_path, {
        "completed_rounds": 0,
        "planned_round": 0,
        "total_rounds": int(cfg["rounds"]),
        "stage2_done": False,
        "evaluated": False,
    })
    return exp


def simulate_ratings(exp: Experiment, r: int, batch: np.ndarray) -> list[proactive.RatingRecord]:
    """Oracle-mode rater panel for one round, with duplicate re-presentation.

    Every simulated rater scores each planned solution once, then re-sees
    a seeded sample of them (the unreliability probes). Each presentation
    draws fresh rater noise.
    """
    cfg = exp.config
    orc = exp.oracle()
    b = len(batch)
    rate = float(cfg["likert_duplicate_rate"])
    n_dup = max(1, int(round(rate * b))) if rate > 0 else 0
    records = []
    for rater in range(int(cfg["raters_required"])):
        rater_id = f"sim{rater:03d}"
        queue_rng = np.random.default_rng(child_seed(cfg["seed"], f"queue-{r}-{rater}"))
        order = queue_rng.permutation(b)
        dups = queue_rng.choice(b, size=min(n_dup, b), replace=False)
        presented = list(order) + list(dups)
        for pos, sol in enumerate(presented):
            score = oracle_mod.rate_likert(
                orc, batch[sol], child_seed(cfg["seed"], f"rating-{r}-{rater}-{pos}"))
            records.append(proactive.RatingRecord(
                rater_id=rater_id, solution_id=solution_id(r, int(sol)),
                score=score, presentation_index=pos))
    return records


def cmd_round(exp_dir, source: str = "oracle", ratings_csv=None) -> dict:
    """Label the pending round, refit the stage-1 model, plan the next batch."""
    exp = Experiment(root=Path(exp_dir))
    with _Lock(exp.root):
        state = exp.state
        r = state["planned_round"]
        if r is None:
            return {"status": "noop", "message": "all labeling rounds are complete"}
        cfg = exp.config
        space = exp.space
        plan = _read_json(exp.plan_path(r))
        batch = np.array(plan["batch"], dtype=float)

        if source == "oracle":
            records = simulate_ratings(exp, r, batch)
            proactive.write_ratings_csv(records, exp.ratings_path(r))
        elif source == "csv":
            if not ratings_csv:
                raise ExperimentError("csv mode needs a ratings file")
            records = proactive.read_ratings_csv(ratings_csv)
            proactive.write_ratings_csv(records, exp.ratings_path(r))
        else:
            raise ExperimentError(f"unknown labels source {source!r}")

        duplicates = proactive.duplicates_in(records)
        retained = proactive.filter_raters(records, duplicates)
        labels = []
        for i in range(len(batch)):
            sid = solution_id(r, i)
            labels.append(proactive.aggregate(sid, batch[i], records, retained, r))
        _write_json(exp.labels_path(r), [
            {"solution_id": l.solution_id, "vector": l.vector.tolist(), "y": l.y,
             "n_raters_used": l.n_raters_used, "round_index": l.round_index}
            for l in labels
        ])

        all_labels = exp.all_labels(upto=r) + labels
        model = _fit_stage1(space, all_labels, cfg)
        gp.save_model(model, exp.stage1_path)

        total_rounds = int(cfg["rounds"])
        if r + 1 < total_rounds:
            f_star = proactive.best_observed(all_labels)
            next_plan = proactive.select_next_batch(
                model, space, a=int(cfg["candidate_pool"]), b=len(batch),
                f_star=f_star, seed=child_seed(cfg["seed"], f"round-plan-{r + 1}"),
                round_index=r + 1)
            _write_json(exp.plan_path(r + 1),
                        _plan_doc(r + 1, next_plan.batch, "ei",
                                  next_plan.candidate_pool, next_plan.spacing_warning))
            planned = r + 1
        else:
            planned = None
        _write_json(exp.state_path, {**state, "completed_rounds": r + 1,
                                     "planned_round": planned})
        return {"status": "ok", "round": r, "labeled": len(labels),
                "raters_retained": len(retained)}


def _fit_stage1(space: DesignSpace, labels, cfg: dict) -> gp.GpPosterior:
    X = normalize(space, np.array([l.vector for l in labels]))
    Y = np.array([l.y for l in labels])
    grid = _kernel_grid(cfg)
    params = gp.select_params(X, Y, grid)
    return gp.fit(X, Y, params)


def _kernel_grid(cfg: dict) -> list[gp.KernelParams]:
    kcfg = cfg.get("kernel", {})
    norm = kcfg.get("norm", "l2sq")
    widths = kcfg.get("width_grid", gp.DEFAULT_WIDTH_GRID)
    jitters = kcfg.get("jitter_grid", gp.DEFAULT_JITTER_GRID)
    return [gp.KernelParams(width=w, jitter=j, norm=norm) for w in widths for j in jitters]


def cmd_tune(exp_dir, source: str = "oracle", votes_file=None) -> dict:
    """Generate comparison pairs, collect votes, fit the stage-2 model."""
    exp = Experiment(root=Path(exp_dir))
    with _Lock(exp.root):
        state = exp.state
        if state.get("stage2_done"):
            return {"status": "noop", "message": "stage-2 model already tuned"}
        model = exp.stage1_model()
        cfg = exp.config
        space = exp.space
        pcfg = cfg["pairs"]
        items_raw, pairs = preference.generate_candidate_pairs(
            model, space, N=int(pcfg["N"]), n=int(pcfg["n"]), M=int(pcfg["M"]),
            seed=child_seed(cfg["seed"], "pairs"))
        _write_json(exp.pairs_path, {
            "items": items_raw.tolist(),
            "pairs": [[int(i), int(j)] for i, j in pairs],
        })

        if source == "oracle":
            orc = exp.oracle()
            relations = [
                oracle_mod.vote_pair(orc, items_raw[i], items_raw[j],
                                     seed=child_seed(cfg["seed"], f"vote-{m}"),
                                     id_i=i, id_j=j)
                for m, (i, j) in enumerate(pairs)
            ]
        elif source == "votes":
            if not votes_file:
                # pair plan is on disk; sessions can start voting against it
                return {"status": "pending", "pairs": len(pairs),
                        "message": "pair plan written; collect votes, then re-run "
                                   "with the votes file"}
            relations = _majority_from_votes(_read_json(votes_file), pairs)
        else:
            raise ExperimentError(f"unknown votes source {source!r}")

        data = preference.ComparisonDataset(
            items=normalize(space, items_raw), relations=tuple(relations))
        _write_json(exp.comparison_path, preference.dataset_to_dict(data, space))

        s2 = cfg["stage2"]
        norm_kind = cfg.get("kernel", {}).get("norm", "l2sq")
        (width, noise), trace = preference.tune_hyperparameters(
            data, width_init=model.params.width, noise_init=float(s2["noise_init"]),
            steps=int(s2["tune_steps"]), lr=float(s2["tune_lr"]), kernel_norm=norm_kind)
        pref_model = preference.fit_preference_model(
            data.items, data.relations, width=width, noise=noise, kernel_norm=norm_kind)
        preference.save_model(pref_model, exp.stage2_path)
        _write_json(exp.reports_dir / "tuning.json", {
            "width_init": model.params.width, "noise_init": s2["noise_init"],
            "width": width, "noise": noise, "evidence_trace": trace,
        })
        _write_json(exp.state_path, {**state, "stage2_done": True})
        return {"status": "ok", "items": data.n_items, "relations": len(relations),
                "width": width, "noise": noise}


def _majority_from_votes(doc, pairs) -> list[preference.ComparisonRecord]:
    """Fold per-session winner votes into majority relations per pair."""
    votes = doc["votes"] if isinstance(doc, dict) else doc
    tally: dict[int, dict[int, int]] = {}
    for v in votes:
        m = int(v["pair_index"])
        w = int(v["winner_id"])
        tally.setdefault(m, {}).setdefault(w, 0)
        tally[m][w] += 1
    relations = []
    for m, (i, j) in enumerate(pairs):
        counts = tally.get(m)
        if not counts:
            raise ExperimentError(f"pair {m} has no votes yet")
        wi, wj = counts.get(i, 0), counts.get(j, 0)
        if wi == wj:
            raise ExperimentError(f"pair {m} is tied {wi}-{wj}; collect one more vote")
        winner, loser = (i, j) if wi > wj else (j, i)
        relations.append(preference.ComparisonRecord(
            winner_id=winner, loser_id=loser,
            votes_winner=max(wi, wj), votes_loser=min(wi, wj)))
    return relations


def cmd_evaluate(exp_dir) -> dict:
    """Hold out part of the final round and score both stages on it."""
    exp = Experiment(root=Path(exp_dir))
    with _Lock(exp.root):
        state = exp.state
        if state.get("evaluated"):
            return {"status": "noop", "message": "evaluation report already written",
                    "report": _read_json(exp.reports_dir / "evaluation.json")}
        stage2 = exp.stage2_model()
        cfg = exp.config
        space = exp.space
        last = state["completed_rounds"] - 1
        if last < 0:
            raise OrderingError("no labeled rounds to evaluate")
        final_labels = exp.labels_for_round(last)
        earlier = exp.all_labels(upto=last)

        n = len(final_labels)
        n_test = math.ceil(0.1 * n)
        n_val = math.ceil(0.1 * n)
        if n_test < 2:
            raise ExperimentError(
                f"final round has only {n} labels; the 10% test split needs >= 2 "
                f"solutions - increase the batch size b")
        rng = np.random.default_rng(child_seed(cfg["seed"], "split"))
        order = rng.permutation(n)
        test_idx = order[:n_test]
        val_idx = order[n_test:n_test + n_val]
        train_idx = order[n_test + n_val:]

        train = earlier + [final_labels[i] for i in train_idx]
        val = [final_labels[i] for i in val_idx]
        test = [final_labels[i] for i in test_idx]

        eval_model = _fit_stage1_validated(space, train, val, cfg)

        ids = [l.solution_id for l in test]
        y = np.array([l.y for l in test])
        U = normalize(space, np.array([l.vector for l in test]))
        s1_mean, _ = gp.predict(eval_model, U)
        s2_mean, _ = preference.predict_preference(stage2, U)
        s1_mean = np.atleast_1d(s1_mean)
        s2_mean = np.atleast_1d(s2_mean)

        label_rank = metrics.rank_by_score(ids, y)
        rho = float(cfg["metrics"]["ap_rho"])
        folds_requested = int(cfg["metrics"]["ndcg_folds"])
        folds = min(folds_requested, len(ids))  # fold gains need m >= 1
        rows = {
            "feeler": {
                "ap": metrics.average_precision(label_rank, metrics.rank_by_score(ids, s2_mean), rho),
                "ndcg": metrics.ndcg(label_rank, metrics.rank_by_score(ids, s2_mean), folds),
            },
            "proactive_gp": {
                "ap": metrics.average_precision(label_rank, metrics.rank_by_score(ids, s1_mean), rho),
                "ndcg": metrics.ndcg(label_rank, metrics.rank_by_score(ids, s1_mean), folds),
                "mae": metrics.mae(y, s1_mean),
            },
        }
        report = {
            "rows": rows,
            "params": {"ap_rho": rho, "ndcg_folds_requested": folds_requested,
                       "ndcg_folds_used": folds},
            "splits": {"train": len(train), "validation": len(val), "test": len(test)},
            "test_ids": ids,
        }
        _write_json(exp.reports_dir / "evaluation.json", report)
        _write_json(exp.state_path, {**state, "evaluated": True})
        return {"status": "ok", "report": report}


def _fit_stage1_validated(space, train, val, cfg) -> gp.GpPosterior:
    """Evidence-selected fit; near-ties on evidence fall back to validation MAE."""
    X = normalize(space, np.array([l.vector for l in train]))
    Y = np.array([l.y for l in train])
    grid = _kernel_grid(cfg)
    scored = []
    for params in grid:
        try:
            model = gp.fit(X, Y, params)
        except gp.NotPositiveDefiniteError:
            continue
        scored.append((gp.log_marginal_likelihood(model), params, model))
    if not scored:
        raise gp.NotPositiveDefiniteError("every grid point failed to factorize")
    best_ev = max(ev for ev, _, _ in scored)
    tied = [(ev, p, m) for ev, p, m in scored if best_ev - ev < 1e-9]
    if len(tied) > 1 and val:
        Uv = normalize(space, np.array([l.vector for l in val]))
        yv = np.array([l.y for l in val])
        def val_mae(entry):
            mean, _ = gp.predict(entry[2], Uv)
            return metrics.mae(yv, np.atleast_1d(mean))
        tied.sort(key=lambda e: (val_mae(e), e[1].width, e[1].jitter))
        return tied[0][2]
    tied.sort(key=lambda e: (-e[0], e[1].width, e[1].jitter))
    return tied[0][2]


def cmd_analyze(exp_dir, variable=None, pair=None, n_samples: int = None,
                k: int = None, bins: int = analysis_mod.DEFAULT_BINS) -> dict:
    """Write top-k / density / correlation reports from the stage-2 model."""
    exp = Experiment(root=Path(exp_dir))
    model = exp.stage2_model()
    space = exp.space
    cfg = exp.config
    seed = child_seed(cfg["seed"], "analysis")
    n_samples = n_samples or analysis_mod.DEFAULT_SAMPLES
    k = k or analysis_mod.DEFAULT_TOP_K
    written = []

    variables = [variable] if variable else [v.name for v in space.variables]
    for name in variables:
        rep = analysis_mod.top_k_distribution(model, space, name,
                                              n_samples=n_samples, k=k, bins=bins, seed=seed)
        written.extend(_save_report(exp, rep, f"topk_{name}"))
        rep = analysis_mod.density_2d(model, space, name, n_samples=min(n_samples, 4000),
                                      seed=seed)
        written.extend(_save_report(exp, rep, f"density_{name}"))
    if pair:
        var_a, var_b = pair
        rep = analysis_mod.variable_correlation(model, space, var_a, var_b,
                                                n_samples=n_samples, k=k,
                                                bins_a=bins, bins_b=bins, seed=seed)
        written.extend(_save_report(exp, rep, f"corr_{var_a}_{var_b}"))
    return {"status": "ok", "reports": written}


def _save_report(exp: Experiment, rep, stem: str) -> list[str]:
    json_path = exp.reports_dir / f"analysis_{stem}.json"
    csv_path = exp.reports_dir / f"analysis_{stem}.csv"
    analysis_mod.save_report_json(rep, json_path)
    analysis_mod.save_report_csv(rep, csv_path)
    return [str(json_path), str(csv_path)]
