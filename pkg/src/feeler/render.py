"""Declarative schematic previews of a design vector.

The service describes what a solution looks like as plain geometry
(boxes, text, colors) so the browser panel can draw it without any
model knowledge. Variables are matched to visual roles by name keywords,
falling back to their position in the space.
"""

from __future__ import annotations

import numpy as np

from .space import DesignSpace

CANVAS_W = 360
CANVAS_H = 220

PALETTE = ["#3b82f6", "#ef4444", "#10b981", "#f59e0b", "#8b5cf6", "#64748b"]

_KEYWORD_ROLES = [
    ("height", "height"),
    ("font", "font_size"),
    ("icon", "icon_size"),
    ("radius", "corner_radius"),
    ("corner", "corner_radius"),
    ("color", "color"),
    ("thick", "border"),
    ("border", "border"),
    ("spacing", "spacing"),
    ("space", "spacing"),
    ("margin", "spacing"),
    ("padding", "padding"),
    ("width", "width_pct"),
    ("gray", "gray"),
    ("thumb", "thumb"),
]

_FALLBACK_ORDER = ["height", "font_size", "icon_size", "corner_radius",
                   "color", "spacing", "border", "width_pct"]


def _assign_roles(space: DesignSpace) -> dict[str, int]:
    roles: dict[str, int] = {}
    for idx, spec in enumerate(space.variables):
        lowered = spec.name.lower()
        for key, role in _KEYWORD_ROLES:
            if key in lowered and role not in roles:
                roles[role] = idx
                break
    for idx in range(space.dimension):
        if idx in roles.values():
            continue
        for role in _FALLBACK_ORDER:
            if role not in roles:
                roles[role] = idx
                break
    return roles


def _unit(space: DesignSpace, vector: np.ndarray, idx: int) -> float:
    spec = space.variables[idx]
    return (float(vector[idx]) - spec.min) / (spec.max - spec.min)


def render_spec(space: DesignSpace, vector) -> dict:
    """Geometry document for one raw-unit vector; deterministic."""
    v = np.asarray(vector, dtype=float)
    roles = _assign_roles(space)

    def level(role, default):
        return _unit(space, v, roles[role]) if role in roles else default

    height = 24 + 56 * level("height", 0.5)
    width = CANVAS_W * (0.55 + 0.35 * level("width_pct", 0.8))
    radius = 28 * level("corner_radius", 0.25)
    border = 0.5 + 3.5 * level("border", 0.3)
    font = 10 + 14 * level("font_size", 0.5)
    icon = 10 + 22 * level("icon_size", 0.5)
    spacing = 2 + 22 * level("spacing", 0.3)
    gray = 0.2 + 0.6 * level("gray", 0.5)
    color_idx = 0
    if "color" in roles:
        spec = space.variables[roles["color"]]
        color_idx = int(round(float(v[roles["color"]]) - spec.min)) % len(PALETTE)

    x0 = (CANVAS_W - width) / 2.0
    y0 = (CANVAS_H - height) / 2.0
    gray_hex = f"#{int(gray * 255):02x}{int(gray * 255):02x}{int(gray * 255):02x}"
    elements = [
        {"type": "rect", "x": 0, "y": 0, "w": CANVAS_W, "h": CANVAS_H,
         "fill": "#f4f4f5", "stroke": None, "radius": 0},
        {"type": "rect", "x": x0, "y": y0, "w": width, "h": height,
         "fill": "#ffffff", "stroke": PALETTE[color_idx],
         "stroke_width": border, "radius": radius},
        {"type": "rect", "x": x0 + spacing, "y": y0 + (height - icon) / 2.0,
         "w": icon, "h": icon, "fill": PALETTE[color_idx], "stroke": None,
         "radius": icon / 5.0},
        {"type": "text", "x": x0 + spacing * 2 + icon,
         "y": y0 + height / 2.0 + font / 3.0,
         "text": "Sample text", "font_size": font, "fill": gray_hex},
    ]
    return {
        "canvas": {"w": CANVAS_W, "h": CANVAS_H},
        "elements": elements,
        "variables": {spec.name: float(v[i]) for i, spec in enumerate(space.variables)},
    }
