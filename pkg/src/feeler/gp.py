"""Zero-mean Gaussian-process regression on the normalized unit cube.

Targets are centered before fitting so the zero-mean prior can serve
1..5 preference labels; the posterior mean folds the offset back in.
The Gram matrix carries a small diagonal jitter because collectively
labeled batches routinely contain near-duplicate solutions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular

L2SQ = "l2sq"  # squared-exponential, the default
L2 = "l2"      # literal unsquared-norm variant, kept as a config switch

DEFAULT_WIDTH_GRID = (0.05, 0.1, 0.2, 0.35, 0.5, 0.75, 1.0, 1.5)
DEFAULT_JITTER_GRID = (1e-6, 1e-4, 1e-2, 0.1)

_UNIT_SLACK = 1e-9


class NotPositiveDefiniteError(ValueError):
    """Gram matrix factorization failed."""


@dataclass(frozen=True)
class KernelParams:
    """RBF width plus diagonal stabilizer; `norm` picks the exponent form."""

    width: float
    jitter: float = 1e-6
    norm: str = L2SQ

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"kernel width must be positive, got {self.width}")
        if self.jitter < 0:
            raise ValueError(f"jitter must be non-negative, got {self.jitter}")
        if self.norm not in (L2SQ, L2):
            raise ValueError(f"kernel norm must be '{L2SQ}' or '{L2}', got {self.norm!r}")


def rbf_kernel(u, v, params: KernelParams) -> float:
    """Kernel value for a single pair of equal-length vectors."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch {u.shape} vs {v.shape}")
    sq = float(np.sum((u - v) ** 2))
    dist = sq if params.norm == L2SQ else np.sqrt(sq)
    return float(np.exp(-dist / (2.0 * params.width**2)))


def kernel_matrix(U, V, params: KernelParams) -> np.ndarray:
    """Cross-kernel matrix between row sets U (m,d) and V (n,d)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    V = np.atleast_2d(np.asarray(V, dtype=float))
    sq = np.sum(U**2, axis=1)[:, None] + np.sum(V**2, axis=1)[None, :] - 2.0 * U @ V.T
    np.maximum(sq, 0.0, out=sq)
    dist = sq if params.norm == L2SQ else np.sqrt(sq)
    return np.exp(-dist / (2.0 * params.width**2))


def _check_unit_cube(U: np.ndarray, what: str):
    # Kernel widths are calibrated for normalized inputs; raw pixels here
    # are a caller bug, not a tuning choice.
    if U.size and (U.min() < -_UNIT_SLACK or U.max() > 1.0 + _UNIT_SLACK):
        raise ValueError(f"{what} must be normalized to [0,1]^d (got range "
                         f"[{U.min():.4g}, {U.max():.4g}])")


@dataclass(frozen=True)
class GpPosterior:
    """Fitted regressor: training set, centered targets, and Cholesky cache."""

    X: np.ndarray          # (n, d) normalized inputs
    Y: np.ndarray          # (n,) centered targets
    y_mean: float
    params: KernelParams
    chol: np.ndarray       # lower factor of K + jitter*I
    alpha: np.ndarray      # (K + jitter*I)^{-1} Y

    @property
    def n_train(self) -> int:
        return self.X.shape[0]


def fit(X, Y_raw, params: KernelParams) -> GpPosterior:
    """Factorize the jittered Gram matrix and precompute the weight vector.

    Parameters
    ----------
    X : (n, d) array of normalized inputs.
    Y_raw : (n,) array of aggregated labels, raw scale.
    params : kernel configuration.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    Y_raw = np.asarray(Y_raw, dtype=float).ravel()
    if X.shape[0] != Y_raw.shape[0] or X.shape[0] < 1:
        raise ValueError(f"need matching non-empty X ({X.shape[0]}) and Y ({Y_raw.shape[0]})")
    _check_unit_cube(X, "training inputs")

    y_mean = float(np.mean(Y_raw))
    Y = Y_raw - y_mean
    K = kernel_matrix(X, X, params)
    K[np.diag_indices_from(K)] += params.jitter
    try:
        L = cholesky(K, lower=True)
    except np.linalg.LinAlgError as exc:
        pivot = float(np.linalg.eigvalsh(K).min())
        raise NotPositiveDefiniteError(
            f"Gram matrix is not positive definite (smallest pivot {pivot:.3e}); "
            f"duplicate inputs with zero jitter are the usual cause"
        ) from exc
    alpha = cho_solve((L, True), Y)
    return GpPosterior(X=X, Y=Y, y_mean=y_mean, params=params, chol=L, alpha=alpha)


def predict(model: GpPosterior, U):
    """Posterior mean and variance at one vector or a batch of rows.

    Variance is clamped to [0, kappa(u,u)]; with zero jitter the posterior
    interpolates the training targets exactly.
    """
    U = np.asarray(U, dtype=float)
    single = U.ndim == 1
    U2 = np.atleast_2d(U)
    _check_unit_cube(U2, "query inputs")

    Ks = kernel_matrix(model.X, U2, model.params)          # (n, m)
    mean = Ks.T @ model.alpha + model.y_mean
    V = solve_triangular(model.chol, Ks, lower=True)       # (n, m)
    prior = 1.0  # kappa(u, u) = exp(0) for both norm variants
    var = np.clip(prior - np.sum(V**2, axis=0), 0.0, prior)
    if single:
        return float(mean[0]), float(var[0])
    return mean, var


def log_marginal_likelihood(model: GpPosterior) -> float:
    """Evidence of the centered targets under the fitted kernel."""
    n = model.n_train
    return float(
        -0.5 * model.Y @ model.alpha
        - np.sum(np.log(np.diag(model.chol)))
        - 0.5 * n * np.log(2.0 * np.pi)
    )


def select_params(X, Y_raw, grid) -> KernelParams:
    """Pick the grid point with maximal evidence.

    Ties break toward the smaller width, then the smaller jitter, so the
    selection is reproducible. Grid points whose factorization fails are
    skipped; an all-failed grid is an error.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("parameter grid is empty")
    best = None
    best_key = None
    for params in grid:
        try:
            model = fit(X, Y_raw, params)
        except NotPositiveDefiniteError:
            continue
        # maximize evidence; negate width/jitter so smaller wins ties
        key = (log_marginal_likelihood(model), -params.width, -params.jitter)
        if best_key is None or key > best_key:
            best, best_key = params, key
    if best is None:
        raise NotPositiveDefiniteError("every grid point failed to factorize")
    return best


def default_param_grid(norm: str = L2SQ) -> list[KernelParams]:
    return [
        KernelParams(width=w, jitter=j, norm=norm)
        for w in DEFAULT_WIDTH_GRID
        for j in DEFAULT_JITTER_GRID
    ]


def model_to_dict(model: GpPosterior) -> dict:
    """Snapshot with the training data; factorizations are rebuilt on load."""
    return {
        "inputs": model.X.tolist(),
        "targets_raw": (model.Y + model.y_mean).tolist(),
        "params": {
            "width": model.params.width,
            "jitter": model.params.jitter,
            "norm": model.params.norm,
        },
        "y_mean": model.y_mean,
    }


def model_from_dict(doc: dict) -> GpPosterior:
    params = KernelParams(
        width=float(doc["params"]["width"]),
        jitter=float(doc["params"]["jitter"]),
        norm=str(doc["params"].get("norm", L2SQ)),
    )
    return fit(np.array(doc["inputs"], dtype=float), np.array(doc["targets_raw"], dtype=float), params)


def save_model(model: GpPosterior, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model_to_dict(model), fh, sort_keys=True)


def load_model(path) -> GpPosterior:
    with open(path, "r", encoding="utf-8") as fh:
        return model_from_dict(json.load(fh))


def with_jitter(params: KernelParams, jitter: float) -> KernelParams:
    return replace(params, jitter=jitter)
