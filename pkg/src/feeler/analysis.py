"""Variable analysis over a finalized preference model.

Three data-only reports: where the top-scored solutions land per
variable, how a variable trades off against the predicted score
(kernel density grid), and how two variables co-vary inside the top
set. Plotting is left to the UI or external tools.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

import numpy as np

from .preference import PreferenceModel, predict_preference
from .space import DesignSpace, normalize, sample_with_rng

DEFAULT_SAMPLES = 30_000
DEFAULT_TOP_K = 500
DEFAULT_BINS = 30


@dataclass(frozen=True)
class AnalysisReport:
    """One report ready for JSON/CSV export; `payload` holds the grid data."""

    kind: str
    variables: tuple[str, ...]
    k: int
    n_samples: int
    seed: int
    payload: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "variables": list(self.variables),
            "k": self.k,
            "n_samples": self.n_samples,
            "seed": self.seed,
            **self.payload,
        }


def _sample_and_score(model: PreferenceModel, space: DesignSpace,
                      n_samples: int, seed: int):
    rng = np.random.default_rng(seed)
    samples = sample_with_rng(space, rng, n_samples)
    scores, _ = predict_preference(model, normalize(space, samples))
    return samples, np.atleast_1d(scores)


def _top_k(samples: np.ndarray, scores: np.ndarray, k: int) -> np.ndarray:
    order = np.argsort(-scores, kind="stable")
    top = order[:k]
    if k < len(scores):  # selection must be a clean threshold cut
        assert scores[top].min() >= scores[order[k:]].max()
    return samples[top]


def top_k_distribution(model: PreferenceModel, space: DesignSpace, variable: str,
                       n_samples: int = DEFAULT_SAMPLES, k: int = DEFAULT_TOP_K,
                       bins: int = DEFAULT_BINS, seed: int = 0) -> AnalysisReport:
    """Histogram of one variable inside the k best-scored random solutions."""
    if k > n_samples:
        raise ValueError(f"k={k} exceeds n_samples={n_samples}")
    col = space.index_of(variable)
    spec = space.variables[col]
    samples, scores = _sample_and_score(model, space, n_samples, seed)
    top = _top_k(samples, scores, k)
    counts, edges = np.histogram(top[:, col], bins=bins, range=(spec.min, spec.max))
    mode = int(np.argmax(counts))
    return AnalysisReport(
        kind="top_k_distribution",
        variables=(variable,),
        k=k, n_samples=n_samples, seed=seed,
        payload={
            "bin_edges": edges.tolist(),
            "counts": counts.tolist(),
            "mode_bin": mode,
            "mode_interval": [float(edges[mode]), float(edges[mode + 1])],
        },
    )


def _scott_bandwidths(points: np.ndarray) -> np.ndarray:
    # diagonal Scott's rule; a floor keeps degenerate axes (constant
    # scores from an untrained model) from collapsing the kernel
    n, d = points.shape
    sd = points.std(axis=0, ddof=1) if n > 1 else np.zeros(points.shape[1])
    spread = np.maximum(points.max(axis=0) - points.min(axis=0), 1.0)
    floor = 1e-3 * spread
    return np.maximum(sd * n ** (-1.0 / (d + 4)), floor)


def density_2d(model: PreferenceModel, space: DesignSpace, variable: str,
               grid_w: int = DEFAULT_BINS, grid_h: int = DEFAULT_BINS,
               n_samples: int = 2000, bandwidth=None, seed: int = 0) -> AnalysisReport:
    """Kernel density of (variable value, predicted score) pairs on a grid.

    Bandwidths follow Scott's rule per axis unless `bandwidth` supplies
    an explicit (h_variable, h_score) pair. The grid extends past the
    data range far enough that the density integrates to ~1 over it.
    """
    if grid_w < 2 or grid_h < 2:
        raise ValueError("grid must be at least 2x2")
    col = space.index_of(variable)
    samples, scores = _sample_and_score(model, space, n_samples, seed)
    pts = np.column_stack([samples[:, col], scores])
    h = np.asarray(bandwidth, dtype=float) if bandwidth is not None else _scott_bandwidths(pts)

    pad = 4.0 * h
    x = np.linspace(pts[:, 0].min() - pad[0], pts[:, 0].max() + pad[0], grid_w)
    y = np.linspace(pts[:, 1].min() - pad[1], pts[:, 1].max() + pad[1], grid_h)
    gx, gy = np.meshgrid(x, y, indexing="ij")
    density = np.zeros((grid_w, grid_h))
    for start in range(0, len(pts), 4096):  # bound the (grid, points) tensor
        chunk = pts[start:start + 4096]
        dx = (gx[..., None] - chunk[:, 0]) / h[0]
        dy = (gy[..., None] - chunk[:, 1]) / h[1]
        density += np.exp(-0.5 * (dx**2 + dy**2)).sum(axis=-1)
    density /= len(pts) * 2.0 * np.pi * h[0] * h[1]
    integral = float(density.sum() * (x[1] - x[0]) * (y[1] - y[0]))

    return AnalysisReport(
        kind="density_2d",
        variables=(variable, "predicted_score"),
        k=0, n_samples=n_samples, seed=seed,
        payload={
            "grid_x": x.tolist(),
            "grid_y": y.tolist(),
            "density": density.tolist(),
            "bandwidth": h.tolist(),
            "integral": integral,
        },
    )


def variable_correlation(model: PreferenceModel, space: DesignSpace,
                         var_a: str, var_b: str,
                         n_samples: int = DEFAULT_SAMPLES, k: int = DEFAULT_TOP_K,
                         bins_a: int = DEFAULT_BINS, bins_b: int = DEFAULT_BINS,
                         seed: int = 0) -> AnalysisReport:
    """Joint bubble counts of two variables over the top-k solutions."""
    if var_a == var_b:
        raise ValueError("pick two distinct variables")
    if k > n_samples:
        raise ValueError(f"k={k} exceeds n_samples={n_samples}")
    ca, cb = space.index_of(var_a), space.index_of(var_b)
    sa, sb = space.variables[ca], space.variables[cb]
    samples, scores = _sample_and_score(model, space, n_samples, seed)
    top = _top_k(samples, scores, k)
    counts, ea, eb = np.histogram2d(
        top[:, ca], top[:, cb], bins=[bins_a, bins_b],
        range=[[sa.min, sa.max], [sb.min, sb.max]],
    )
    corr = 0.0
    if k > 1 and top[:, ca].std() > 0 and top[:, cb].std() > 0:
        corr = float(np.corrcoef(top[:, ca], top[:, cb])[0, 1])
    return AnalysisReport(
        kind="variable_correlation",
        variables=(var_a, var_b),
        k=k, n_samples=n_samples, seed=seed,
        payload={
            "edges_a": ea.tolist(),
            "edges_b": eb.tolist(),
            "counts": counts.astype(int).tolist(),
            "correlation": corr,
        },
    )


def save_report_json(report: AnalysisReport, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True)


def save_report_csv(report: AnalysisReport, path):
    """Flat spreadsheet form of the report's grid."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        if report.kind == "top_k_distribution":
            writer.writerow([report.variables[0] + "_bin_lo", "bin_hi", "count"])
            edges = report.payload["bin_edges"]
            for i, c in enumerate(report.payload["counts"]):
                writer.writerow([edges[i], edges[i + 1], c])
        elif report.kind == "density_2d":
            writer.writerow([report.variables[0], "predicted_score", "density"])
            xs, ys = report.payload["grid_x"], report.payload["grid_y"]
            for i, xv in enumerate(xs):
                for j, yv in enumerate(ys):
                    writer.writerow([xv, yv, report.payload["density"][i][j]])
        elif report.kind == "variable_correlation":
            writer.writerow([report.variables[0], report.variables[1], "count"])
            ea, eb = report.payload["edges_a"], report.payload["edges_b"]
            for i, row in enumerate(report.payload["counts"]):
                for j, c in enumerate(row):
                    if c:
                        writer.writerow([(ea[i] + ea[i + 1]) / 2.0,
                                         (eb[j] + eb[j + 1]) / 2.0, c])
        else:
            raise ValueError(f"unknown report kind {report.kind!r}")
