"""Independent reference implementations used as test oracles.

Everything here recomputes results from the definitions directly (dense
inversions, literal metric summations, generic numerical optimizers)
and deliberately shares no code with the package under test.
"""

import math

import numpy as np
from scipy.optimize import minimize
from scipy.special import log_ndtr
from scipy.stats import norm


def rbf(u, v, width):
    return math.exp(-float(np.sum((np.asarray(u) - np.asarray(v)) ** 2)) / (2.0 * width**2))


def gram(X, width, jitter=0.0):
    X = np.asarray(X, dtype=float)
    n = len(X)
    K = np.array([[rbf(X[i], X[j], width) for j in range(n)] for i in range(n)])
    return K + jitter * np.eye(n)


def dense_gp_predict(X, Y_raw, width, jitter, U):
    """Posterior mean/variance via dense linear solves."""
    X = np.asarray(X, dtype=float)
    Y_raw = np.asarray(Y_raw, dtype=float)
    U = np.atleast_2d(np.asarray(U, dtype=float))
    y_mean = Y_raw.mean()
    K = gram(X, width, jitter)
    means, variances = [], []
    for u in U:
        k = np.array([rbf(u, x, width) for x in X])
        means.append(k @ np.linalg.solve(K, Y_raw - y_mean) + y_mean)
        variances.append(rbf(u, u, width) - k @ np.linalg.solve(K, k))
    return np.array(means), np.array(variances)


def dense_gp_evidence(X, Y_raw, width, jitter):
    """Log marginal likelihood via determinant and inverse."""
    X = np.asarray(X, dtype=float)
    Yc = np.asarray(Y_raw, dtype=float) - np.mean(Y_raw)
    K = gram(X, width, jitter)
    n = len(Yc)
    sign, logdet = np.linalg.slogdet(K)
    assert sign > 0
    return float(-0.5 * Yc @ np.linalg.inv(K) @ Yc - 0.5 * logdet - 0.5 * n * math.log(2 * math.pi))


def mc_expected_improvement(mean, std, best, n_samples, seed):
    """Monte-Carlo estimate of E[max(0, Z - best)], Z ~ N(mean, std^2)."""
    rng = np.random.default_rng(seed)
    z = rng.normal(mean, std, size=n_samples)
    return float(np.mean(np.maximum(z - best, 0.0)))


def literal_average_precision(label_rank, pred_rank, rho):
    """Direct summation of the AP definition."""
    N = len(label_rank)
    K = max(1, int(math.floor(rho * N + 0.5)))
    relevant = set(label_rank[:K])
    total = 0.0
    for i in range(1, N + 1):
        s_i = 1.0 if pred_rank[i - 1] in relevant else 0.0
        hits = sum(1.0 for j in range(1, i + 1) if pred_rank[j - 1] in relevant)
        total += (s_i / i) * hits
    return total / K


def literal_ndcg(label_rank, pred_rank, n_folds):
    """Direct summation of the fold-gain NDCG definition."""
    N = len(label_rank)
    m = N // n_folds
    gain = {}
    for pos, item in enumerate(label_rank):
        j = pos // m
        gain[item] = float(n_folds - j) if j < n_folds else 0.0

    def dcg(order):
        return sum((2.0 ** gain[item] - 1.0) / math.log2(i + 1)
                   for i, item in enumerate(order, start=1))

    return dcg(pred_rank) / dcg(label_rank)


def preference_log_posterior(g, items_K, relations, noise):
    """z(g) computed directly from its definition."""
    g = np.asarray(g, dtype=float)
    loglik = sum(
        float(log_ndtr((g[w] - g[l]) / (math.sqrt(2) * noise))) for w, l in relations
    )
    return loglik - 0.5 * float(g @ np.linalg.solve(items_K, g))


def numeric_map(items_K, relations, noise, n):
    """MAP of z(g) via a generic quasi-Newton optimizer."""
    res = minimize(
        lambda g: -preference_log_posterior(g, items_K, relations, noise),
        x0=np.zeros(n),
        method="L-BFGS-B",
        options={"ftol": 1e-14, "gtol": 1e-10, "maxiter": 2000},
    )
    return res.x


def fd_hessian_neg_loglik(g_star, relations, noise, step=1e-5):
    """Central finite differences of -sum log Phi at the MAP point."""
    g_star = np.asarray(g_star, dtype=float)
    n = len(g_star)

    def neg_loglik(g):
        return -sum(
            float(log_ndtr((g[w] - g[l]) / (math.sqrt(2) * noise))) for w, l in relations
        )

    H = np.zeros((n, n))
    for a in range(n):
        for b in range(n):
            gpp = g_star.copy(); gpp[a] += step; gpp[b] += step
            gpm = g_star.copy(); gpm[a] += step; gpm[b] -= step
            gmp = g_star.copy(); gmp[a] -= step; gmp[b] += step
            gmm = g_star.copy(); gmm[a] -= step; gmm[b] -= step
            H[a, b] = (neg_loglik(gpp) - neg_loglik(gpm) - neg_loglik(gmp) + neg_loglik(gmm)) / (4 * step**2)
    return H


def grid_quadrature_evidence(items_K, relations, noise, half_width=6.0, points=81):
    """Brute-force integral of P(g) * P(R|g) over a dense cubic grid.

    Integrates in whitened coordinates g = L z (K = L L^T) so the grid
    resolves near-degenerate priors from almost-coincident items; the
    Jacobian cancels the prior normalization exactly.
    """
    n = items_K.shape[0]
    L = np.linalg.cholesky(items_K)
    axis = np.linspace(-half_width, half_width, points)
    mesh = np.meshgrid(*([axis] * n), indexing="ij")
    Z = np.stack([m.ravel() for m in mesh], axis=1)
    G = Z @ L.T

    log_std_normal = -0.5 * np.sum(Z**2, axis=1) - 0.5 * n * math.log(2 * math.pi)
    log_lik = np.zeros(len(Z))
    for w, l in relations:
        log_lik += log_ndtr((G[:, w] - G[:, l]) / (math.sqrt(2) * noise))
    cell = (axis[1] - axis[0]) ** n
    return float(np.log(np.sum(np.exp(log_std_normal + log_lik)) * cell))


def clamped_round_likert_expectation(true_score, noise_sd):
    """E[clip(round(t + eps), 1, 5)] by quadrature over the noise density."""
    levels = np.arange(1, 6)
    probs = []
    for s in levels:
        lo = s - 0.5 if s > 1 else -np.inf
        hi = s + 0.5 if s < 5 else np.inf
        probs.append(norm.cdf(hi, loc=true_score, scale=noise_sd)
                     - norm.cdf(lo, loc=true_score, scale=noise_sd))
    return float(np.dot(levels, probs))
