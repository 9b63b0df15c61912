"""Synthetic stand-in for the crowdsourcing pool.

A ground-truth preference surface over the design space (a Gaussian bump
with optional pairwise coupling, mapped into the 1..5 Likert range) plus
a simulated rater population that produces noisy Likert scores and
majority votes on solution pairs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .preference import ComparisonRecord
from .space import DesignSpace, denormalize, normalize


def _rng_for(seed: int, *parts) -> np.random.Generator:
    # Noise must depend only on (seed, rater, solution bytes) so that
    # vote_pair is exactly symmetric under argument swap.
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(seed)).encode())
    for p in parts:
        h.update(b"|")
        h.update(p if isinstance(p, bytes) else str(p).encode())
    return np.random.default_rng(int.from_bytes(h.digest(), "big"))


@dataclass(frozen=True)
class SyntheticOracle:
    """Deterministic preference surface plus a rater-noise model.

    `peak` lives in the normalized cube and must be the unique global
    maximizer, which holds whenever interaction @ peak == 0 (checked on
    the shipped fixtures, not enforced here).
    """

    space: DesignSpace
    peak: np.ndarray
    widths: np.ndarray
    interaction: np.ndarray = None
    rater_noise: float = 0.5
    raters_per_task: int = 20

    def __post_init__(self):
        d = self.space.dimension
        peak = np.asarray(self.peak, dtype=float).reshape(d)
        widths = np.asarray(self.widths, dtype=float).reshape(d)
        if np.any(widths <= 0):
            raise ValueError("widths must be positive")
        inter = self.interaction
        inter = np.zeros((d, d)) if inter is None else np.asarray(inter, dtype=float).reshape(d, d)
        if not np.allclose(inter, inter.T):
            raise ValueError("interaction matrix must be symmetric")
        object.__setattr__(self, "peak", peak)
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "interaction", inter)


def true_preference(oracle: SyntheticOracle, x) -> float:
    """Noise-free preference of a raw-unit vector, in [1, 5]."""
    u = normalize(oracle.space, np.asarray(x, dtype=float))
    z = u - oracle.peak
    exponent = -np.sum(z**2 / (2.0 * oracle.widths**2)) - u @ oracle.interaction @ u
    return float(1.0 + 4.0 * np.exp(exponent))


def rate_likert(oracle: SyntheticOracle, x, rater_seed: int) -> int:
    """One simulated Likert answer; round-half-even, clamped to 1..5."""
    x = np.asarray(x, dtype=float)
    noise = 0.0
    if oracle.rater_noise > 0:
        rng = _rng_for(rater_seed, x.tobytes())
        noise = rng.normal(0.0, oracle.rater_noise)
    score = np.rint(true_preference(oracle, x) + noise)
    return int(np.clip(score, 1, 5))


def _noisy_score(oracle: SyntheticOracle, x: np.ndarray, seed: int, rater: int) -> float:
    t = true_preference(oracle, x)
    if oracle.rater_noise <= 0:
        return t
    rng = _rng_for(seed, rater, x.tobytes())
    return t + rng.normal(0.0, oracle.rater_noise)


def vote_pair(oracle: SyntheticOracle, x_i, x_j, seed: int,
              id_i: int = 0, id_j: int = 1) -> ComparisonRecord:
    """Majority vote of the rater panel on an (x_i, x_j) pair.

    Each rater prefers the solution with the higher noisy score; an exact
    vote tie is settled by one extra rater. The per-solution noise keys on
    the solution bytes, so swapping the arguments only swaps the ids.
    """
    x_i = np.asarray(x_i, dtype=float)
    x_j = np.asarray(x_j, dtype=float)
    if np.array_equal(x_i, x_j):
        raise ValueError("cannot vote on identical solutions")

    def one_vote(rater: int) -> int:
        si = _noisy_score(oracle, x_i, seed, rater)
        sj = _noisy_score(oracle, x_j, seed, rater)
        if si == sj:  # possible only with zero noise and equal trues
            tie_rng = _rng_for(seed, rater, b"tie", min(x_i.tobytes(), x_j.tobytes()))
            return 0 if tie_rng.random() < 0.5 else 1
        return 0 if si > sj else 1

    votes = [one_vote(r) for r in range(oracle.raters_per_task)]
    wins_i = votes.count(0)
    wins_j = votes.count(1)
    if wins_i == wins_j:
        extra = one_vote(oracle.raters_per_task)
        wins_i += 1 - extra
        wins_j += extra
    if wins_i > wins_j:
        return ComparisonRecord(winner_id=id_i, loser_id=id_j,
                                votes_winner=wins_i, votes_loser=wins_j)
    return ComparisonRecord(winner_id=id_j, loser_id=id_i,
                            votes_winner=wins_j, votes_loser=wins_i)


def oracle_to_dict(oracle: SyntheticOracle) -> dict:
    return {
        "peak": oracle.peak.tolist(),
        "widths": oracle.widths.tolist(),
        "interaction": oracle.interaction.tolist(),
        "rater_noise": oracle.rater_noise,
        "raters_per_task": oracle.raters_per_task,
    }


def oracle_from_dict(doc: dict, space: DesignSpace) -> SyntheticOracle:
    return SyntheticOracle(
        space=space,
        peak=np.array(doc["peak"], dtype=float),
        widths=np.array(doc["widths"], dtype=float),
        interaction=np.array(doc["interaction"], dtype=float) if doc.get("interaction") is not None else None,
        rater_noise=float(doc.get("rater_noise", 0.5)),
        raters_per_task=int(doc.get("raters_per_task", 20)),
    )


def load_oracle(path, space: DesignSpace) -> SyntheticOracle:
    with open(path, "r", encoding="utf-8") as fh:
        return oracle_from_dict(json.load(fh), space)


def save_oracle(oracle: SyntheticOracle, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(oracle_to_dict(oracle), fh, sort_keys=True)


def toy_oracle(space: DesignSpace, peak=None, widths=None, interaction=None,
               rater_noise: float = 0.5, raters_per_task: int = 20) -> SyntheticOracle:
    """Default fixture: unimodal bump at 60% of each range, no coupling."""
    d = space.dimension
    return SyntheticOracle(
        space=space,
        peak=np.full(d, 0.6) if peak is None else peak,
        widths=np.full(d, 0.35) if widths is None else widths,
        interaction=interaction,
        rater_noise=rater_noise,
        raters_per_task=raters_per_task,
    )


def peak_raw(oracle: SyntheticOracle) -> np.ndarray:
    """The optimum location in raw units."""
    return denormalize(oracle.space, oracle.peak)
