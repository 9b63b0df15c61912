"""Design-variable domains: validation, sampling, and unit-cube normalization.

A design solution is a vector of raw-unit values (pixels, point sizes,
palette codes), one per variable. All kernel math downstream operates on
the normalized unit cube, so this module owns the affine raw<->unit maps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

LATTICE_TOL = 1e-9

CONTINUOUS = "continuous"
DISCRETE_STEP = "discrete-step"


class SpaceError(ValueError):
    """Malformed space definition or dimension mismatch."""


@dataclass(frozen=True)
class VariableSpec:
    """One design variable: a bounded continuous range or a step lattice."""

    name: str
    kind: str
    min: float
    max: float
    step: float | None = None

    def __post_init__(self):
        if self.kind not in (CONTINUOUS, DISCRETE_STEP):
            raise SpaceError(f"variable {self.name!r}: unknown kind {self.kind!r}")
        if not self.min < self.max:
            raise SpaceError(f"variable {self.name!r}: min {self.min} must be < max {self.max}")
        if self.kind == DISCRETE_STEP:
            if self.step is None or self.step <= 0:
                raise SpaceError(f"variable {self.name!r}: discrete-step requires a positive step")
            ratio = (self.max - self.min) / self.step
            if abs(ratio - round(ratio)) > LATTICE_TOL:
                raise SpaceError(
                    f"variable {self.name!r}: range {self.max - self.min} is not a "
                    f"multiple of step {self.step}"
                )
        elif self.step is not None:
            raise SpaceError(f"variable {self.name!r}: step is only valid for discrete-step")

    @property
    def n_levels(self) -> int:
        """Lattice size for discrete-step variables."""
        if self.kind != DISCRETE_STEP:
            raise SpaceError(f"variable {self.name!r} is continuous, has no lattice")
        return int(round((self.max - self.min) / self.step)) + 1


@dataclass(frozen=True)
class DesignSpace:
    """Ordered collection of variables defining the searchable domain."""

    variables: tuple[VariableSpec, ...]

    def __post_init__(self):
        if not self.variables:
            raise SpaceError("a design space needs at least one variable")
        names = [v.name for v in self.variables]
        if len(set(names)) != len(names):
            raise SpaceError(f"duplicate variable names in {names}")
        object.__setattr__(self, "variables", tuple(self.variables))

    @property
    def dimension(self) -> int:
        return len(self.variables)

    def index_of(self, name: str) -> int:
        for i, v in enumerate(self.variables):
            if v.name == name:
                return i
        raise SpaceError(f"no variable named {name!r}")

    @property
    def lower(self) -> np.ndarray:
        return np.array([v.min for v in self.variables], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([v.max for v in self.variables], dtype=float)


def validate(space: DesignSpace, vector) -> list[str]:
    """Check one raw-unit vector against the space.

    Returns a list of human-readable violations, empty when the vector is
    valid. A length mismatch is a usage error and raises instead.
    """
    v = np.asarray(vector, dtype=float)
    if v.shape != (space.dimension,):
        raise SpaceError(f"vector has shape {v.shape}, space dimension is {space.dimension}")
    violations = []
    for k, spec in enumerate(space.variables):
        x = v[k]
        if not np.isfinite(x):
            violations.append(f"{spec.name}: non-finite value {x}")
            continue
        if x < spec.min - LATTICE_TOL or x > spec.max + LATTICE_TOL:
            violations.append(f"{spec.name}: {x} outside [{spec.min}, {spec.max}]")
        elif spec.kind == DISCRETE_STEP:
            offset = (x - spec.min) / spec.step
            if abs(offset - round(offset)) > LATTICE_TOL:
                violations.append(f"{spec.name}: {x} is off the step-{spec.step} lattice")
    return violations


def sample_uniform(space: DesignSpace, seed: int, count: int) -> np.ndarray:
    """Draw `count` valid raw-unit vectors uniformly, deterministically per seed."""
    if count < 1:
        raise SpaceError(f"count must be >= 1, got {count}")
    return sample_with_rng(space, np.random.default_rng(seed), count)


def sample_with_rng(space: DesignSpace, rng: np.random.Generator, count: int) -> np.ndarray:
    """Like sample_uniform but advances a caller-owned generator."""
    cols = []
    for spec in space.variables:
        if spec.kind == CONTINUOUS:
            cols.append(rng.uniform(spec.min, spec.max, size=count))
        else:
            levels = rng.integers(0, spec.n_levels, size=count)
            cols.append(spec.min + levels * spec.step)
    return np.column_stack(cols)


def normalize(space: DesignSpace, vectors) -> np.ndarray:
    """Map raw-unit vectors onto the unit cube, coordinate-wise affine."""
    v = np.asarray(vectors, dtype=float)
    lo, hi = space.lower, space.upper
    return (v - lo) / (hi - lo)


def denormalize(space: DesignSpace, unit_vectors) -> np.ndarray:
    """Inverse of normalize; exact within float round-off."""
    u = np.asarray(unit_vectors, dtype=float)
    lo, hi = space.lower, space.upper
    return lo + u * (hi - lo)


def space_to_dict(space: DesignSpace, name: str = "space") -> dict:
    out = {"name": name, "variables": []}
    for v in space.variables:
        entry = {"name": v.name, "kind": v.kind, "min": v.min, "max": v.max}
        if v.step is not None:
            entry["step"] = v.step
        out["variables"].append(entry)
    return out


def space_from_dict(doc: dict) -> DesignSpace:
    """Build a space from its JSON document, with field-qualified errors."""
    if not isinstance(doc, dict):
        raise SpaceError("space document must be a JSON object")
    raw_vars = doc.get("variables")
    if not isinstance(raw_vars, list) or not raw_vars:
        raise SpaceError("space document: 'variables' must be a non-empty array")
    specs = []
    for i, entry in enumerate(raw_vars):
        where = f"variables[{i}]"
        if not isinstance(entry, dict):
            raise SpaceError(f"{where}: must be an object")
        for field in ("name", "kind", "min", "max"):
            if field not in entry:
                raise SpaceError(f"{where}: missing field '{field}'")
        try:
            specs.append(
                VariableSpec(
                    name=str(entry["name"]),
                    kind=str(entry["kind"]),
                    min=float(entry["min"]),
                    max=float(entry["max"]),
                    step=float(entry["step"]) if entry.get("step") is not None else None,
                )
            )
        except (TypeError, ValueError) as exc:
            raise SpaceError(f"{where}: {exc}") from exc
    return DesignSpace(variables=tuple(specs))


def load_space(path) -> DesignSpace:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SpaceError(f"{path}: line {exc.lineno}: {exc.msg}") from exc
    return space_from_dict(doc)


# Reference spaces used by tests, demos, and the desk-scale pipeline.
# Bounds are plausible fixtures, not measurements.

def toy_space_2d() -> DesignSpace:
    """Two continuous variables; small enough for exhaustive checking."""
    return DesignSpace(
        variables=(
            VariableSpec("box_height", CONTINUOUS, 28.0, 64.0),
            VariableSpec("font_size", CONTINUOUS, 10.0, 24.0),
        )
    )


def search_box_like_space() -> DesignSpace:
    """Nine variables shaped like a search-field module."""
    return DesignSpace(
        variables=(
            VariableSpec("box_height", CONTINUOUS, 28.0, 64.0),
            VariableSpec("box_width_pct", CONTINUOUS, 60.0, 98.0),
            VariableSpec("corner_radius", CONTINUOUS, 0.0, 32.0),
            VariableSpec("border_thickness", CONTINUOUS, 0.5, 4.0),
            VariableSpec("font_size", CONTINUOUS, 10.0, 24.0),
            VariableSpec("icon_size", CONTINUOUS, 12.0, 32.0),
            VariableSpec("icon_margin", CONTINUOUS, 2.0, 18.0),
            VariableSpec("placeholder_gray", CONTINUOUS, 0.2, 0.8),
            VariableSpec("accent_color", DISCRETE_STEP, 0.0, 5.0, step=1.0),
        )
    )


def news_feed_like_space() -> DesignSpace:
    """Eight variables shaped like a feed-card module."""
    return DesignSpace(
        variables=(
            VariableSpec("card_height", CONTINUOUS, 72.0, 160.0),
            VariableSpec("title_font_size", CONTINUOUS, 12.0, 22.0),
            VariableSpec("line_spacing", CONTINUOUS, 2.0, 12.0),
            VariableSpec("thumb_size", CONTINUOUS, 48.0, 120.0),
            VariableSpec("tag_spacing", CONTINUOUS, 4.0, 28.0),
            VariableSpec("tag_color", DISCRETE_STEP, 0.0, 3.0, step=1.0),
            VariableSpec("padding", CONTINUOUS, 6.0, 24.0),
            VariableSpec("divider_gray", CONTINUOUS, 0.1, 0.9),
        )
    )
