"""Ranking and regression metrics for comparing predicted against labeled order.

Average precision scores how early the labeled top fraction shows up in
the predicted order; NDCG assigns fold-based gains from the labeled
ranking and discounts by predicted position; MAE compares raw scores.
"""

from __future__ import annotations

import math

import numpy as np

DEFAULT_AP_THRESHOLD = 0.1
DEFAULT_NDCG_FOLDS = 15


class RankingInputError(ValueError):
    pass


def _check_rankings(label_rank, pred_rank):
    label = list(label_rank)
    pred = list(pred_rank)
    if len(set(label)) != len(label) or len(set(pred)) != len(pred):
        raise RankingInputError("rankings must not repeat ids")
    if set(label) != set(pred):
        raise RankingInputError("label and predicted rankings must cover the same ids")
    if not label:
        raise RankingInputError("rankings are empty")
    return label, pred


def average_precision(label_rank, pred_rank, rho: float = DEFAULT_AP_THRESHOLD) -> float:
    """AP of the predicted order against the labeled top-K set.

    K is round(rho*N) and never below 1. Items inside the labeled top K
    are the relevant set; each predicted position i contributes
    (s_i / i) * (hits so far), normalized by K.
    """
    label, pred = _check_rankings(label_rank, pred_rank)
    if not 0.0 < rho < 1.0:
        raise RankingInputError(f"rho must lie in (0,1), got {rho}")
    N = len(label)
    K = max(1, int(math.floor(rho * N + 0.5)))
    relevant = set(label[:K])
    total = 0.0
    hits = 0
    for i, item in enumerate(pred, start=1):
        s_i = 1 if item in relevant else 0
        hits += s_i
        total += (s_i / i) * hits
    return total / K


def ndcg(label_rank, pred_rank, n_folds: int = DEFAULT_NDCG_FOLDS) -> float:
    """Discounted gain ratio with fold-based gains from the labeled order.

    The labeled ranking is cut into n_folds folds of m = N // n_folds
    items; fold j (1-based) carries gain n_folds - j + 1, and the tail
    beyond n_folds*m carries gain 0. Positions are discounted from i=1.
    """
    label, pred = _check_rankings(label_rank, pred_rank)
    N = len(label)
    if n_folds < 1 or n_folds > N:
        raise RankingInputError(f"n_folds must lie in 1..{N}, got {n_folds}")
    m = N // n_folds
    gain = {}
    for pos, item in enumerate(label):
        fold = pos // m
        gain[item] = float(n_folds - fold) if fold < n_folds else 0.0

    def dcg(order):
        return sum((2.0 ** gain[item] - 1.0) / math.log2(i + 1)
                   for i, item in enumerate(order, start=1))

    return dcg(pred) / dcg(label)


def mae(labels, preds) -> float:
    """Mean absolute error between two equal-length score vectors."""
    labels = np.asarray(labels, dtype=float).ravel()
    preds = np.asarray(preds, dtype=float).ravel()
    if labels.shape != preds.shape or labels.size == 0:
        raise RankingInputError(
            f"need equal non-empty vectors, got {labels.shape} and {preds.shape}")
    return float(np.mean(np.abs(labels - preds)))


def rank_by_score(ids, scores) -> list:
    """Order ids best-first by score; ties keep the given id order."""
    ids = list(ids)
    scores = np.asarray(scores, dtype=float)
    if len(ids) != scores.size:
        raise RankingInputError("ids and scores must align")
    order = np.argsort(-scores, kind="stable")
    return [ids[i] for i in order]
