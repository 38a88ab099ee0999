"""From per-direction SDP bounds to rectangles and polyhedra.

Each support direction s contributes one upper bound beta = sup s' x over
the consistent set, obtained from a relaxation; intersecting the
halfspaces s' x <= beta yields an outer polyhedron.  The axis directions
give the rectangle, extra directions refine it.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .model import GridCloud, Instance, Polyhedron
from .relaxations import build_benchmark_sdp, build_lfr_sdp
from .sdp import DEFAULT_TOL, SdpStatus, solve


class Method(enum.Enum):
    """Which relaxation produces the per-direction bounds."""

    LFR = "lfr"
    BENCHMARK = "sdp"


class DirectionSolveError(RuntimeError):
    """A direction came back unbounded or numerically unresolved."""


class EmptyCloudError(ValueError):
    """The grid cloud has no points."""


class DegenerateDenominatorError(ValueError):
    """The reference rectangle has zero area; the gain factor is undefined."""


def rect_directions(d: int) -> np.ndarray:
    """The 2d axis directions +e_i followed by -e_i."""
    if d < 1:
        raise ValueError("dimension must be >= 1")
    return np.vstack([np.eye(d), -np.eye(d)])


def extra_directions(T: int, d: int) -> np.ndarray:
    """T planar unit directions at angles pi/T + 2 pi k / T.

    The offset interleaves the new directions with the axes for the usual
    counts (T = 4 gives the four diagonals, T = 8 adds the pi/8 fan).
    Only d = 2 is supported when T > 0.
    """
    if T < 0:
        raise ValueError("T must be >= 0")
    if T == 0:
        return np.zeros((0, d))
    if d != 2:
        raise ValueError("extra directions are only supported in dimension 2")
    angles = np.pi / T + 2.0 * np.pi * np.arange(T) / T
    return np.column_stack([np.cos(angles), np.sin(angles)])


@dataclass(frozen=True)
class RegionResult:
    """Outer polyhedron of one instance under one relaxation method."""

    polyhedron: Polyhedron
    method: Method
    statuses: tuple
    empty: bool

    def to_dict(self) -> dict:
        bounds = [
            None if not math.isfinite(b) else float(b)
            for b in self.polyhedron.bounds
        ]
        return {
            "method": self.method.value,
            "directions": self.polyhedron.directions.tolist(),
            "bounds": bounds,
            "empty": self.empty,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "RegionResult":
        bounds = np.array(
            [np.nan if b is None else float(b) for b in data["bounds"]]
        )
        return cls(
            polyhedron=Polyhedron(
                directions=np.asarray(data["directions"], dtype=float),
                bounds=bounds,
            ),
            method=Method(data["method"]),
            statuses=(),
            empty=bool(data["empty"]),
        )


_BUILDERS = {
    Method.LFR: build_lfr_sdp,
    Method.BENCHMARK: build_benchmark_sdp,
}


def compute_superset(
    instance: Instance,
    method: Method,
    T: int = 0,
    tol: float = DEFAULT_TOL,
) -> RegionResult:
    """Solve one SDP per direction and intersect the resulting halfspaces.

    The 2d axis directions always come first, then the T extra ones.  An
    infeasible direction marks the whole region empty (the measurements
    admit no consistent position); unbounded or numerically unresolved
    directions raise DirectionSolveError.
    """
    directions = np.vstack([rect_directions(instance.dim), extra_directions(T, instance.dim)])
    builder = _BUILDERS[method]
    bounds = np.empty(directions.shape[0])
    statuses = []
    empty = False
    for i, s in enumerate(directions):
        solution = solve(builder(instance, s), tol=tol)
        statuses.append(solution.status)
        if solution.status is SdpStatus.OPTIMAL:
            bounds[i] = solution.value
        elif solution.status is SdpStatus.INFEASIBLE:
            bounds[i] = np.nan
            empty = True
        else:
            raise DirectionSolveError(
                f"direction {s.tolist()} ended with status {solution.status.value}"
            )
    return RegionResult(
        polyhedron=Polyhedron(directions=directions, bounds=bounds),
        method=method,
        statuses=tuple(statuses),
        empty=empty,
    )


def rect_part(region: RegionResult) -> Polyhedron:
    """The axis-aligned rectangle part of a region (its first 2d bounds)."""
    poly = region.polyhedron
    d = poly.dim
    return Polyhedron(directions=poly.directions[: 2 * d], bounds=poly.bounds[: 2 * d])


def bounding_rect(cloud: GridCloud) -> Polyhedron:
    """Tightest axis-aligned rectangle enclosing a point cloud."""
    if cloud.empty:
        raise EmptyCloudError("cannot bound an empty cloud")
    upper = cloud.points.max(axis=0)
    lower = cloud.points.min(axis=0)
    d = cloud.points.shape[1]
    return Polyhedron(
        directions=np.vstack([np.eye(d), -np.eye(d)]),
        bounds=np.concatenate([upper, -lower]),
    )


def rect_area(box: Polyhedron) -> float:
    """Lebesgue measure of an axis-aligned rectangle; 0 when empty."""
    if not box.is_rectangle():
        raise ValueError("rect_area needs a rectangle-form polyhedron")
    lower, upper = box.rect_interval()
    if np.any(~np.isfinite(lower)) or np.any(~np.isfinite(upper)):
        return 0.0
    sides = upper - lower
    if np.any(sides < 0):
        return 0.0
    return float(np.prod(sides))


def gain_factor(sdp_box: Polyhedron, lfr_box: Polyhedron, cloud: GridCloud) -> float:
    """Benchmark excess area in units of the cloud's tightest rectangle.

    (area(benchmark box) - area(LFR box)) / area(bounding rectangle of the
    cloud); negative values mean the benchmark box was tighter.
    """
    denom = rect_area(bounding_rect(cloud))
    if denom <= 0.0:
        raise DegenerateDenominatorError(
            "grid cloud collapses to zero area at this resolution"
        )
    return (rect_area(sdp_box) - rect_area(lfr_box)) / denom


def union_rect_interval(
    a: Polyhedron, b: Polyhedron, pad: float = 0.0
) -> tuple[np.ndarray, np.ndarray]:
    """(lower, upper) corners of the smallest box containing two rectangles."""
    lo_a, up_a = a.rect_interval()
    lo_b, up_b = b.rect_interval()
    return np.minimum(lo_a, lo_b) - pad, np.maximum(up_a, up_b) + pad
