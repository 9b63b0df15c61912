"""Comparison-tuning model: a GP latent utility learned from pairwise votes.

Each observed relation i > j contributes a probit likelihood
Phi((g_i - g_j) / (sqrt(2) * noise)). The posterior over the latent
utilities g is maximized by damped Newton iterations (the objective is
concave, so the mode is unique), approximated by a Gaussian at the mode,
and the resulting evidence drives hyperparameter tuning in log space.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.special import log_ndtr, ndtr

from .gp import KernelParams, kernel_matrix, predict
from .space import DesignSpace, normalize, sample_with_rng

K_JITTER = 1e-8            # Gram regularizer; top-ranked items are often near-colinear
OMEGA_JITTER = 1e-8        # stabilizes inverting the likelihood Hessian
SQRT2 = math.sqrt(2.0)

DEFAULT_SAMPLE_COUNT = 30_000
DEFAULT_TOP_COUNT = 500
DEFAULT_PAIR_COUNT = 1000  # 2 * top count
DEFAULT_NOISE_INIT = 0.5


class ConvergenceError(RuntimeError):
    """Newton iterations did not reach the gradient tolerance."""


@dataclass(frozen=True)
class ComparisonRecord:
    """A majority-voted relation: winner_id beat loser_id."""

    winner_id: int
    loser_id: int
    votes_winner: int
    votes_loser: int

    def __post_init__(self):
        if self.winner_id == self.loser_id:
            raise ValueError("a solution cannot be compared with itself")
        if self.votes_winner <= self.votes_loser:
            raise ValueError("winner must hold a strict vote majority")
        if self.votes_loser < 0:
            raise ValueError("vote counts must be non-negative")


@dataclass(frozen=True)
class ComparisonDataset:
    """Compared items (normalized rows, id = row index) and their relations."""

    items: np.ndarray
    relations: tuple[ComparisonRecord, ...]

    def __post_init__(self):
        items = np.atleast_2d(np.asarray(self.items, dtype=float))
        object.__setattr__(self, "items", items)
        object.__setattr__(self, "relations", tuple(self.relations))
        n = items.shape[0]
        for rel in self.relations:
            if not (0 <= rel.winner_id < n and 0 <= rel.loser_id < n):
                raise ValueError(f"relation references unknown item: {rel}")

    @property
    def n_items(self) -> int:
        return self.items.shape[0]


def generate_candidate_pairs(model, space: DesignSpace, N: int = DEFAULT_SAMPLE_COUNT,
                             n: int = DEFAULT_TOP_COUNT, M: int = DEFAULT_PAIR_COUNT,
                             seed: int = 0):
    """Draw the comparison workload from the stage-1 model.

    Samples N vectors, keeps the n with the highest posterior mean
    (sample order breaks ties), and pairs them up: M unordered pairs
    drawn uniformly without replacement, falling back to replacement
    when M exceeds n*(n-1)/2.

    Returns (items, pairs): items as (n, d) raw-unit rows, pairs as a
    list of (i, j) index tuples into items.
    """
    if n < 2 or n > N:
        raise ValueError(f"need 2 <= n <= N (got n={n}, N={N})")
    if M < 1:
        raise ValueError(f"need M >= 1, got {M}")
    rng = np.random.default_rng(seed)
    samples = sample_with_rng(space, rng, N)
    mean, _ = predict(model, normalize(space, samples))
    # stable sort on negated scores keeps earlier samples on ties
    top = np.argsort(-mean, kind="stable")[:n]
    items = samples[top]

    total = n * (n - 1) // 2
    if M <= total:
        flat = rng.choice(total, size=M, replace=False)
    else:
        flat = rng.integers(0, total, size=M)
    pairs = [_unrank_pair(int(f), n) for f in flat]
    return items, pairs


def _unrank_pair(flat: int, n: int) -> tuple[int, int]:
    # flat index over the upper triangle, row-major
    i = 0
    row = n - 1
    while flat >= row:
        flat -= row
        i += 1
        row -= 1
    return i, i + 1 + flat


def pair_likelihood(g_i: float, g_j: float, noise: float) -> float:
    """Probability that item i beats item j given latent utilities."""
    if noise <= 0:
        raise ValueError(f"noise must be positive, got {noise}")
    return float(ndtr((g_i - g_j) / (SQRT2 * noise)))


def _relation_arrays(data: ComparisonDataset):
    w = np.array([r.winner_id for r in data.relations], dtype=int)
    l = np.array([r.loser_id for r in data.relations], dtype=int)
    return w, l


def _t_values(g: np.ndarray, w: np.ndarray, l: np.ndarray, noise: float) -> np.ndarray:
    return (g[w] - g[l]) / (SQRT2 * noise)


def _pdf_cdf_ratio(t: np.ndarray) -> np.ndarray:
    # phi(t)/Phi(t) computed in log space; stable far into the left tail
    return np.exp(-0.5 * t**2 - 0.5 * math.log(2.0 * math.pi) - log_ndtr(t))


def log_posterior(data: ComparisonDataset, g: np.ndarray, K_factor, noise: float) -> float:
    """Unnormalized log posterior z(g): probit log-likelihood plus GP prior."""
    w, l = _relation_arrays(data)
    loglik = float(np.sum(log_ndtr(_t_values(g, w, l, noise)))) if len(w) else 0.0
    return loglik - 0.5 * float(g @ cho_solve(K_factor, g))


def map_estimate(data: ComparisonDataset, K: np.ndarray, noise: float,
                 max_iter: int = 100, tol: float = 1e-8) -> np.ndarray:
    """Find the unique maximizer of z(g) by damped Newton iterations.

    Steps are halved until the objective increases; convergence is the
    infinity norm of the gradient dropping below `tol`.
    """
    n = data.n_items
    if n == 0 or not data.relations:
        return np.zeros(n)
    Kf = cho_factor(K + K_JITTER * np.eye(n), lower=True)
    w, l = _relation_arrays(data)
    g = np.zeros(n)
    z = log_posterior(data, g, Kf, noise)

    for _ in range(max_iter):
        t = _t_values(g, w, l, noise)
        ratio = _pdf_cdf_ratio(t)
        grad_lik = np.zeros(n)
        np.add.at(grad_lik, w, ratio / (SQRT2 * noise))
        np.add.at(grad_lik, l, -ratio / (SQRT2 * noise))
        grad = grad_lik - cho_solve(Kf, g)
        if np.max(np.abs(grad)) < tol:
            return g
        omega = _omega_from(t, ratio, w, l, n, noise)
        hess = omega + cho_solve(Kf, np.eye(n))
        direction = np.linalg.solve(hess, grad)
        step = 1.0
        plateau_tol = max(tol, 1e-6)
        for _halving in range(40):
            g_new = g + step * direction
            z_new = log_posterior(data, g_new, Kf, noise)
            if z_new > z:
                break
            step *= 0.5
        else:
            # float plateau: accept only if already stationary enough
            if np.max(np.abs(grad)) < plateau_tol:
                return g
            raise ConvergenceError(
                f"no ascent step found; gradient norm {np.max(np.abs(grad)):.3e}")
        g, z = g_new, z_new
    grad_norm = float(np.max(np.abs(grad)))
    if grad_norm < max(tol, 1e-6):
        return g
    raise ConvergenceError(f"not converged after {max_iter} iterations; "
                           f"gradient norm {grad_norm:.3e}")


def _omega_from(t, ratio, w, l, n, noise):
    # each relation touches only rows/cols {i, j}; curvature weight is
    # ratio*(t + ratio), non-negative because log Phi is concave
    weight = ratio * (t + ratio) / (2.0 * noise**2)
    omega = np.zeros((n, n))
    np.add.at(omega, (w, w), weight)
    np.add.at(omega, (l, l), weight)
    np.add.at(omega, (w, l), -weight)
    np.add.at(omega, (l, w), -weight)
    return omega


def hessian_omega(data: ComparisonDataset, g_star: np.ndarray, noise: float) -> np.ndarray:
    """Hessian of the negative log-likelihood at the mode (the GP prior excluded)."""
    n = data.n_items
    if not data.relations:
        return np.zeros((n, n))
    w, l = _relation_arrays(data)
    t = _t_values(np.asarray(g_star, dtype=float), w, l, noise)
    return _omega_from(t, _pdf_cdf_ratio(t), w, l, n, noise)


def log_evidence(data: ComparisonDataset, width: float, noise: float,
                 kernel_norm: str = "l2sq") -> float:
    """Laplace-approximate log marginal likelihood of the relations.

    Evaluates log P(relations | g*) - 0.5 g*^T K^{-1} g*
    - 0.5 log det(I + K Omega*) at the posterior mode.
    """
    n = data.n_items
    if n == 0 or not data.relations:
        return 0.0
    params = KernelParams(width=width, jitter=0.0, norm=kernel_norm)
    K = kernel_matrix(data.items, data.items, params)
    g_star = map_estimate(data, K, noise)
    w, l = _relation_arrays(data)
    loglik = float(np.sum(log_ndtr(_t_values(g_star, w, l, noise))))
    Kf = cho_factor(K + K_JITTER * np.eye(n), lower=True)
    prior_quad = 0.5 * float(g_star @ cho_solve(Kf, g_star))
    omega = hessian_omega(data, g_star, noise)
    sign, logdet = np.linalg.slogdet(np.eye(n) + K @ omega)
    if sign <= 0:
        raise ConvergenceError("I + K*Omega lost positive definiteness")
    return loglik - prior_quad - 0.5 * logdet


def tune_hyperparameters(data: ComparisonDataset, width_init: float, noise_init: float,
                         steps: int = 15, lr: float = 0.25,
                         kernel_norm: str = "l2sq"):
    """Evidence ascent over (log width, log noise).

    Central-difference gradients; a proposal is accepted only when the
    evidence strictly increases, otherwise the rate is halved. Returns
    ((width, noise), evidence_trace) with the trace listing the accepted
    values, so the result is never worse than the initialization.
    """
    if width_init <= 0 or noise_init <= 0:
        raise ValueError("hyperparameters must be positive")
    theta = np.log([width_init, noise_init])

    def ev(th):
        return log_evidence(data, float(np.exp(th[0])), float(np.exp(th[1])), kernel_norm)

    current = ev(theta)
    trace = [current]
    h = 1e-4
    rate = lr
    for _ in range(steps):
        grad = np.zeros(2)
        for k in range(2):
            bump = np.zeros(2)
            bump[k] = h
            grad[k] = (ev(theta + bump) - ev(theta - bump)) / (2.0 * h)
        proposal = theta + rate * grad
        value = ev(proposal)
        if value > current:
            theta, current = proposal, value
            trace.append(current)
        else:
            rate *= 0.5
    width, noise = np.exp(theta)
    return (float(width), float(noise)), trace


@dataclass(frozen=True)
class PreferenceModel:
    """Finalized comparison model, immutable and safe for concurrent reads."""

    items: np.ndarray              # (n, d) normalized
    relations: tuple[ComparisonRecord, ...]
    g_star: np.ndarray
    params: KernelParams           # width + kernel norm; jitter unused here
    noise: float
    alpha: np.ndarray              # K^{-1} g*, for the predictive mean
    var_core: np.ndarray           # (K + Omega^{-1})^{-1}, for the predictive variance
    omega_star: np.ndarray

    @property
    def n_items(self) -> int:
        return self.items.shape[0]


def fit_preference_model(items, relations, width: float, noise: float,
                         kernel_norm: str = "l2sq") -> PreferenceModel:
    """Run MAP estimation on the comparison data and cache prediction matrices."""
    data = ComparisonDataset(items=items, relations=tuple(relations))
    if data.n_items == 0:
        return _finalize(data, np.zeros(0), width, noise, kernel_norm)
    params = KernelParams(width=width, jitter=0.0, norm=kernel_norm)
    K = kernel_matrix(data.items, data.items, params)
    g_star = map_estimate(data, K, noise)
    return _finalize(data, g_star, width, noise, kernel_norm)


def _finalize(data: ComparisonDataset, g_star: np.ndarray, width: float,
              noise: float, kernel_norm: str) -> PreferenceModel:
    n = data.n_items
    params = KernelParams(width=width, jitter=0.0, norm=kernel_norm)
    if n == 0:
        z = np.zeros((0, 0))
        return PreferenceModel(items=data.items, relations=data.relations,
                               g_star=g_star, params=params, noise=noise,
                               alpha=np.zeros(0), var_core=z, omega_star=z)
    K = kernel_matrix(data.items, data.items, params)
    omega = hessian_omega(data, g_star, noise)
    Kf = cho_factor(K + K_JITTER * np.eye(n), lower=True)
    alpha = cho_solve(Kf, g_star)
    omega_inv = _invert_omega(omega)
    var_core = np.linalg.inv(K + omega_inv)
    return PreferenceModel(items=data.items, relations=data.relations,
                           g_star=g_star, params=params, noise=noise,
                           alpha=alpha, var_core=var_core, omega_star=omega)


def _invert_omega(omega: np.ndarray) -> np.ndarray:
    """Jittered inverse of the likelihood Hessian.

    Omega is always singular: the likelihood sees only utility
    differences, so the constant vector is a null direction, and items
    in no relation add whole zero rows. The jitter turns those
    directions into ~1/jitter entries, which correctly pushes the
    predictive variance back toward the prior where votes carry no
    information.
    """
    n = omega.shape[0]
    return np.linalg.inv(omega + OMEGA_JITTER * np.eye(n))


def predict_preference(model: PreferenceModel, u):
    """Posterior mean and variance of the latent utility at normalized rows."""
    u = np.asarray(u, dtype=float)
    single = u.ndim == 1
    U = np.atleast_2d(u)
    if model.n_items == 0:
        mean = np.zeros(U.shape[0])
        var = np.ones(U.shape[0])
    else:
        Ks = kernel_matrix(model.items, U, model.params)   # (n, m)
        mean = Ks.T @ model.alpha
        var = 1.0 - np.sum(Ks * (model.var_core @ Ks), axis=0)
        var = np.maximum(var, 0.0)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def dataset_to_dict(data: ComparisonDataset, space: DesignSpace) -> dict:
    """Interchange form: raw-unit vectors keyed by dense integer ids."""
    from .space import denormalize
    raw = denormalize(space, data.items)
    return {
        "items": [{"id": i, "vector": row.tolist()} for i, row in enumerate(raw)],
        "relations": [
            {"winner": r.winner_id, "loser": r.loser_id,
             "votes_winner": r.votes_winner, "votes_loser": r.votes_loser}
            for r in data.relations
        ],
    }


def dataset_from_dict(doc: dict, space: DesignSpace) -> ComparisonDataset:
    entries = sorted(doc["items"], key=lambda e: int(e["id"]))
    ids = [int(e["id"]) for e in entries]
    if ids != list(range(len(ids))):
        raise ValueError("item ids must be dense integers 0..n-1")
    raw = np.array([e["vector"] for e in entries], dtype=float)
    relations = tuple(
        ComparisonRecord(winner_id=int(r["winner"]), loser_id=int(r["loser"]),
                         votes_winner=int(r["votes_winner"]), votes_loser=int(r["votes_loser"]))
        for r in doc["relations"]
    )
    return ComparisonDataset(items=normalize(space, raw), relations=relations)


def model_to_dict(model: PreferenceModel) -> dict:
    """Snapshot keeps normalized items verbatim so reloads drift < 1e-10."""
    return {
        "items": model.items.tolist(),
        "relations": [
            {"winner": r.winner_id, "loser": r.loser_id,
             "votes_winner": r.votes_winner, "votes_loser": r.votes_loser}
            for r in model.relations
        ],
        "g_star": model.g_star.tolist(),
        "params": {"width": model.params.width, "norm": model.params.norm},
        "noise": model.noise,
    }


def model_from_dict(doc: dict) -> PreferenceModel:
    relations = tuple(
        ComparisonRecord(winner_id=int(r["winner"]), loser_id=int(r["loser"]),
                         votes_winner=int(r["votes_winner"]), votes_loser=int(r["votes_loser"]))
        for r in doc["relations"]
    )
    data = ComparisonDataset(items=np.array(doc["items"], dtype=float), relations=relations)
    # keep the persisted mode; only the matrices are rebuilt
    return _finalize(data, np.array(doc["g_star"], dtype=float),
                     width=float(doc["params"]["width"]), noise=float(doc["noise"]),
                     kernel_norm=str(doc["params"].get("norm", "l2sq")))


def save_model(model: PreferenceModel, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)


def load_model(path) -> PreferenceModel:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))
