"""POINT, SEGMENT, TRIANGLE and TRIANGULAR_PYRAMID: schemas and build procedures.

Values are plain data so they go through the store codec unchanged: a point
position is a 3-tuple of floats, a segment a dict with ``origin``,
``extremity`` and ``length``.
"""

from __future__ import annotations

import math
import warnings
from importlib import resources
from typing import NamedTuple

from ..dsl import SourceUnit, load_registry
from ..manager import ProcedureTable


class NonFiniteInput(ValueError):
    pass


class DegenerateTriangleWarning(UserWarning):
    pass


class PointValue(NamedTuple):
    x: float
    y: float
    z: float


def _finite(p) -> PointValue:
    if len(p) != 3 or not all(math.isfinite(c) for c in p):
        raise NonFiniteInput(f"not a finite 3-d point: {p!r}")
    return PointValue(*(float(c) for c in p))


def distance(a, b) -> float:
    return math.dist(a, b)


def segment(a, b) -> dict:
    a, b = _finite(a), _finite(b)
    return {"origin": a, "extremity": b, "length": distance(a, b)}


def position_build(x: float, y: float, z: float) -> PointValue:
    return _finite((x, y, z))


def length_build(origin, extremity) -> float:
    return distance(_finite(origin), _finite(extremity))


def sides_build(vertices) -> list[dict]:
    """Segments (v1, v2), (v2, v3), (v3, v1)."""
    if len(vertices) != 3:
        raise ValueError(f"a triangle has 3 vertices, got {len(vertices)}")
    v1, v2, v3 = vertices
    return [segment(v1, v2), segment(v2, v3), segment(v3, v1)]


def perimeter_build(sides) -> float:
    return sum(s["length"] for s in sides)


def surface_build(perimeter: float, sides) -> float:
    """Heron's formula with the half-perimeter taken from ``perimeter``."""
    s = perimeter / 2.0
    a, b, c = (side["length"] for side in sides)
    radicand = s * (s - a) * (s - b) * (s - c)
    if radicand < 0.0:
        warnings.warn(
            f"negative Heron radicand {radicand!r} clamped to 0 (degenerate triangle)",
            DegenerateTriangleWarning,
            stacklevel=2,
        )
        return 0.0
    return math.sqrt(radicand)


def centroid_build(vertices) -> PointValue:
    v1, v2, v3 = (_finite(v) for v in vertices)
    return PointValue(*((v1[i] + v2[i] + v3[i]) / 3.0 for i in range(3)))


def base_surface_build(base: float) -> float:
    return base


PROCEDURES = ProcedureTable()
PROCEDURES.add("POINT", "position_build", position_build)
PROCEDURES.add("SEGMENT", "length_build", length_build)
PROCEDURES.add("TRIANGLE", "sides_build", sides_build)
PROCEDURES.add("TRIANGLE", "perimeter_build", perimeter_build)
PROCEDURES.add("TRIANGLE", "surface_build", surface_build)
PROCEDURES.add("TRIANGLE", "centroid_build", centroid_build)
PROCEDURES.add("TRIANGULAR_PYRAMID", "base_surface_build", base_surface_build)

CLASS_FILES = ("point.dop", "segment.dop", "triangle.dop", "triangular_pyramid.dop")


def class_sources() -> list[SourceUnit]:
    root = resources.files(__name__) / "classes"
    return [SourceUnit(root.joinpath(name).read_text(encoding="utf-8"), f"classes/{name}")
            for name in CLASS_FILES]


def class_directory() -> str:
    return str(resources.files(__name__) / "classes")


def registry():
    """The four shipped classes, parsed and resolved."""
    reg, diags = load_registry(class_sources())
    if reg is None:
        raise RuntimeError("shipped geometry classes failed to load:\n" + "\n".join(map(str, diags)))
    return reg


def triangle_parameters(v1, v2, v3, prefix: str = "") -> dict[str, float]:
    """Parameter assignments for a TRIANGLE (optionally under a slot prefix)."""
    out = {}
    for i, v in enumerate((v1, v2, v3), start=1):
        for axis, c in zip("xyz", v):
            out[f"{prefix}vertices[{i}].{axis}"] = float(c)
    return out


def point_parameters(p, prefix: str = "") -> dict[str, float]:
    return {f"{prefix}{axis}": float(c) for axis, c in zip("xyz", p)}
