"""Stage-1 active learning: collective Likert labels and EI batch selection.

Raw rater responses are filtered for unreliable participants, averaged
into one label per solution, and the running regressor proposes the next
round's batch by repeated argmax of Expected Improvement over random
candidate pools.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .gp import GpPosterior, predict
from .space import DesignSpace, normalize, sample_with_rng

MAX_BATCH_DIMENSION = 24
DUPLICATE_SCORE_GAP = 2      # answers to a repeated question may differ by at most this
EXTREME_SCORES = {1, 5}

DEFAULT_CANDIDATE_POOL = 1000
DEFAULT_MIN_SPACING = 0.01   # normalized distance below which picks count as duplicates
DEFAULT_MAX_RETRIES = 50


class LabelingError(ValueError):
    """A planned solution cannot be labeled from the available records."""


class ConfigurationError(ValueError):
    pass


@dataclass(frozen=True)
class RatingRecord:
    """One participant's answer to one presented solution."""

    rater_id: str
    solution_id: str
    score: int
    presentation_index: int

    def __post_init__(self):
        if self.score not in (1, 2, 3, 4, 5):
            raise ValueError(f"score must be 1..5, got {self.score}")


@dataclass(frozen=True)
class LabeledSolution:
    """Aggregated label for one solution in one labeling round."""

    solution_id: str
    vector: np.ndarray       # raw units
    y: float
    n_raters_used: int
    round_index: int


@dataclass(frozen=True)
class RoundPlan:
    """The batch of solutions scheduled for one labeling round."""

    round_index: int
    batch: np.ndarray        # (b, d) raw units
    candidate_pool: int
    batch_size: int
    spacing_warning: bool = False


def batch_size(d: int) -> int:
    """Labeling budget per round: three solutions for every corner of a
    d-cube. Deployments round this to a convenient figure."""
    if d < 1:
        raise ConfigurationError(f"dimension must be >= 1, got {d}")
    if d > MAX_BATCH_DIMENSION:
        raise ConfigurationError(
            f"3*2^{d} labeled solutions is not a realistic budget; cap the batch instead"
        )
    return 3 * 2**d


def filter_raters(records: list[RatingRecord], duplicates: list[tuple[str, str]]) -> set[str]:
    """Return the rater ids whose answers are kept.

    Dropped: any rater whose two answers to a re-presented solution differ
    by more than 2 points, and any rater who only ever picks the extreme
    scores 1 or 5. Both rules judge a rater on their own records, so the
    filter is idempotent.
    """
    by_rater: dict[str, list[RatingRecord]] = {}
    for rec in records:
        by_rater.setdefault(rec.rater_id, []).append(rec)

    removed = set()
    for solution_id, rater_id in duplicates:
        answers = [r.score for r in by_rater.get(rater_id, []) if r.solution_id == solution_id]
        if len(answers) >= 2 and max(answers) - min(answers) > DUPLICATE_SCORE_GAP:
            removed.add(rater_id)
    for rater_id, recs in by_rater.items():
        if all(r.score in EXTREME_SCORES for r in recs):
            removed.add(rater_id)
    return set(by_rater) - removed


def aggregate(solution_id: str, vector, records: list[RatingRecord],
              retained_raters: set[str], round_index: int) -> LabeledSolution:
    """Average the retained raters' scores for one solution.

    Repeated presentations contribute each of their answers; an empty
    retained set is a labeling failure for this solution.
    """
    scores = [r.score for r in records
              if r.solution_id == solution_id and r.rater_id in retained_raters]
    if not scores:
        raise LabelingError(f"no retained ratings for solution {solution_id!r}")
    raters = {r.rater_id for r in records
              if r.solution_id == solution_id and r.rater_id in retained_raters}
    return LabeledSolution(
        solution_id=solution_id,
        vector=np.asarray(vector, dtype=float),
        y=float(np.mean(scores)),
        n_raters_used=len(raters),
        round_index=round_index,
    )


def expected_improvement(mean, std, best):
    """Closed-form EI of a Gaussian belief over the incumbent `best`.

    Vectorized over mean/std; the zero-variance branch degenerates to the
    plain improvement max(0, mean - best).
    """
    mean = np.asarray(mean, dtype=float)
    std = np.asarray(std, dtype=float)
    if np.any(std < 0):
        raise ValueError("std must be non-negative")
    improve = mean - best
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        eta = np.where(std > 0, improve / np.where(std > 0, std, 1.0), 0.0)
        pdf = np.exp(-0.5 * eta**2) / np.sqrt(2.0 * np.pi)
    ei = np.where(std > 0, improve * ndtr(eta) + std * pdf, np.maximum(improve, 0.0))
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def best_observed(labels: list[LabeledSolution]) -> float:
    """EI incumbent: the best aggregated label seen so far."""
    if not labels:
        raise ValueError("no labeled solutions yet")
    return max(l.y for l in labels)


def select_next_batch(model: GpPosterior, space: DesignSpace, a: int, b: int,
                      f_star: float, seed: int, round_index: int = 0,
                      min_spacing: float = DEFAULT_MIN_SPACING,
                      max_retries: int = DEFAULT_MAX_RETRIES) -> RoundPlan:
    """Pick the next round's batch by b independent EI argmax draws.

    Each pick maximizes EI over a fresh pool of `a` uniform candidates
    (ties go to the lowest pool index). Picks landing within
    `min_spacing` of an earlier pick are redrawn; after `max_retries`
    the pick is kept and the plan is flagged rather than failing.
    """
    if a < 1 or b < 1:
        raise ValueError(f"pool size and batch size must be >= 1 (got a={a}, b={b})")
    rng = np.random.default_rng(seed)
    kept_unit: list[np.ndarray] = []
    kept_raw: list[np.ndarray] = []
    warned = False
    for _ in range(b):
        choice_raw = choice_unit = None
        for _attempt in range(max_retries + 1):
            pool = sample_with_rng(space, rng, a)
            unit = normalize(space, pool)
            mean, var = predict(model, unit)
            ei = expected_improvement(mean, np.sqrt(var), f_star)
            idx = int(np.argmax(ei))
            choice_raw, choice_unit = pool[idx], unit[idx]
            if not kept_unit or min(
                float(np.linalg.norm(choice_unit - u)) for u in kept_unit
            ) >= min_spacing:
                break
        else:
            warned = True
        kept_raw.append(choice_raw)
        kept_unit.append(choice_unit)
    return RoundPlan(
        round_index=round_index,
        batch=np.array(kept_raw),
        candidate_pool=a,
        batch_size=b,
        spacing_warning=warned,
    )


RATINGS_HEADER = ["rater_id", "solution_id", "score", "presentation_index"]


def write_ratings_csv(records: list[RatingRecord], path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(RATINGS_HEADER)
        for r in records:
            writer.writerow([r.rater_id, r.solution_id, r.score, r.presentation_index])


def read_ratings_csv(path) -> list[RatingRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(RATINGS_HEADER) - set(reader.fieldnames or [])
        if missing:
            raise LabelingError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                records.append(RatingRecord(
                    rater_id=row["rater_id"],
                    solution_id=row["solution_id"],
                    score=int(row["score"]),
                    presentation_index=int(row["presentation_index"]),
                ))
            except (TypeError, ValueError) as exc:
                raise LabelingError(f"{path}: line {lineno}: {exc}") from exc
    return records


def duplicates_in(records: list[RatingRecord]) -> list[tuple[str, str]]:
    """(solution_id, rater_id) pairs presented more than once, for the filter."""
    counts: dict[tuple[str, str], int] = {}
    for r in records:
        counts[(r.solution_id, r.rater_id)] = counts.get((r.solution_id, r.rater_id), 0) + 1
    return sorted(key for key, n in counts.items() if n > 1)
