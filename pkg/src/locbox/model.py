"""Core data types for range-based localization with bounded noise.

An `Instance` bundles the anchor positions, the measured ranges and the
ellipsoidal noise bound.  The membership predicates in this module define,
exactly and without any relaxation, the set of target positions that are
consistent with the data:

* a position must explain the measurements with some admissible noise
  vector (the residual lies inside the noise ellipsoid), and
* a position must always produce non-negative ranges regardless of the
  noise realization (the coherence condition).

Everything here is pure and immutable; the heavy lifting (relaxations,
grids, experiments) lives in the sibling modules.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg

# Additive slack applied to every membership inequality so that points on
# the boundary count as members despite rounding.
MEMBERSHIP_SLACK = 1e-9

# Noise-shape matrices with condition number above this are rejected at
# construction; the math only needs positive definiteness but the solvers
# need some headroom.
SIGMA_CONDITION_LIMIT = 1e12


class DimensionMismatchError(ValueError):
    """A vector or matrix has a shape inconsistent with the instance."""


def _readonly(a: np.ndarray) -> np.ndarray:
    out = np.array(a, dtype=float)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class Instance:
    """One localization problem: anchors, measured ranges, noise shape.

    Attributes:
        dim: ambient dimension d (2 or 3 in practice).
        anchors: (M, d) array, one known landmark position per row.
        y: (M,) non-negative range measurements.
        sigma: (M, M) symmetric positive definite noise-shape matrix; the
            noise vector is assumed to satisfy u' sigma^-1 u <= 1.
    """

    dim: int
    anchors: np.ndarray
    y: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        anchors = np.atleast_2d(np.asarray(self.anchors, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        sigma = np.asarray(self.sigma, dtype=float)
        if sigma.ndim == 0:
            sigma = sigma.reshape(1, 1)
        d = int(self.dim)
        if d < 1:
            raise ValueError(f"dim must be >= 1, got {d}")
        m = anchors.shape[0]
        if m < 1:
            raise ValueError("need at least one anchor")
        if anchors.shape != (m, d):
            raise DimensionMismatchError(
                f"anchors must be (M, {d}), got {anchors.shape}"
            )
        if y.shape != (m,):
            raise DimensionMismatchError(f"y must have length {m}, got {y.shape}")
        if np.any(y < 0):
            raise ValueError("measurements must be non-negative")
        if sigma.shape != (m, m):
            raise DimensionMismatchError(
                f"sigma must be ({m}, {m}), got {sigma.shape}"
            )
        if not np.allclose(sigma, sigma.T, rtol=0.0, atol=1e-12 * max(1.0, float(np.abs(sigma).max()))):
            raise ValueError("sigma must be symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        eigvals = np.linalg.eigvalsh(sigma)
        if eigvals[0] <= 0.0:
            raise ValueError("sigma must be positive definite")
        if eigvals[-1] / eigvals[0] > SIGMA_CONDITION_LIMIT:
            raise ValueError(
                f"sigma condition number {eigvals[-1] / eigvals[0]:.3e} exceeds "
                f"{SIGMA_CONDITION_LIMIT:.0e}"
            )
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "anchors", _readonly(anchors))
        object.__setattr__(self, "y", _readonly(y))
        object.__setattr__(self, "sigma", _readonly(sigma))

    @property
    def num_anchors(self) -> int:
        return self.anchors.shape[0]

    @cached_property
    def _sigma_cho(self):
        # Lower Cholesky factor; all sigma^-1 quadratic forms go through it.
        return scipy.linalg.cho_factor(np.array(self.sigma), lower=True)

    @cached_property
    def sigma_sqrt(self) -> np.ndarray:
        """Symmetric square root of sigma."""
        w, v = np.linalg.eigh(np.array(self.sigma))
        return _readonly((v * np.sqrt(w)) @ v.T)

    @cached_property
    def sigma_inv_sqrt(self) -> np.ndarray:
        """Symmetric inverse square root of sigma."""
        w, v = np.linalg.eigh(np.array(self.sigma))
        return _readonly((v / np.sqrt(w)) @ v.T)

    def noise_quadform(self, u: np.ndarray) -> np.ndarray:
        """u' sigma^-1 u for one residual (M,) or a batch (N, M)."""
        u = np.asarray(u, dtype=float)
        single = u.ndim == 1
        batch = np.atleast_2d(u)
        if batch.shape[1] != self.num_anchors:
            raise DimensionMismatchError(
                f"residual length {batch.shape[1]} != M={self.num_anchors}"
            )
        sol = scipy.linalg.cho_solve(self._sigma_cho, batch.T)
        quad = np.einsum("mn,mn->n", batch.T, sol)
        return float(quad[0]) if single else quad

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "anchors": self.anchors.tolist(),
            "y": self.y.tolist(),
            "sigma": self.sigma.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        return cls(
            dim=int(data["dim"]),
            anchors=np.asarray(data["anchors"], dtype=float),
            y=np.asarray(data["y"], dtype=float),
            sigma=np.asarray(data["sigma"], dtype=float),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))


def theta(x: np.ndarray, instance: Instance) -> np.ndarray:
    """Vector of Euclidean distances from x to every anchor."""
    x = np.asarray(x, dtype=float)
    if x.shape != (instance.dim,):
        raise DimensionMismatchError(f"x must be ({instance.dim},), got {x.shape}")
    return np.linalg.norm(x - instance.anchors, axis=1)


def _distances(points: np.ndarray, instance: Instance) -> np.ndarray:
    points = np.atleast_2d(np.asarray(points, dtype=float))
    if points.shape[1] != instance.dim:
        raise DimensionMismatchError(
            f"points must be (N, {instance.dim}), got {points.shape}"
        )
    return np.linalg.norm(points[:, None, :] - instance.anchors[None, :, :], axis=2)


def coherence_mask(points: np.ndarray, instance: Instance) -> np.ndarray:
    """Boolean mask: which points always yield non-negative ranges.

    A point is coherent when its distance to every anchor is at least the
    worst-case noise magnitude along that coordinate, i.e.
    ||x - r_m||^2 >= sigma_mm for all m.
    """
    dist = _distances(points, instance)
    diag = np.diag(instance.sigma)
    return np.all(dist**2 >= diag[None, :] - MEMBERSHIP_SLACK, axis=1)


def membership_mask(points: np.ndarray, instance: Instance) -> np.ndarray:
    """Vectorized exact membership test over a batch of points.

    True where the residual y - theta(x) lies in the noise ellipsoid and
    the coherence condition holds.  Single-point callers should prefer
    `member_x`.
    """
    dist = _distances(points, instance)
    residual = instance.y[None, :] - dist
    quad = instance.noise_quadform(residual)
    diag = np.diag(instance.sigma)
    coherent_ok = np.all(dist**2 >= diag[None, :] - MEMBERSHIP_SLACK, axis=1)
    return (quad <= 1.0 + MEMBERSHIP_SLACK) & coherent_ok


def member_x(x: np.ndarray, instance: Instance) -> bool:
    """Exact membership test: can x explain y with admissible noise, and is
    it coherent with non-negative ranges?"""
    return bool(membership_mask(np.asarray(x, dtype=float)[None, :], instance)[0])


def coherent(x: np.ndarray, instance: Instance) -> bool:
    """True when the model at x yields non-negative ranges for every noise
    vector in the ellipsoid."""
    return bool(coherence_mask(np.asarray(x, dtype=float)[None, :], instance)[0])


@dataclass(frozen=True)
class Polyhedron:
    """Intersection of halfspaces s_l' x <= beta_l with unit directions."""

    directions: np.ndarray
    bounds: np.ndarray

    def __post_init__(self) -> None:
        directions = np.atleast_2d(np.asarray(self.directions, dtype=float))
        bounds = np.asarray(self.bounds, dtype=float).ravel()
        if directions.shape[0] != bounds.shape[0]:
            raise ValueError("directions and bounds must have equal length")
        norms = np.linalg.norm(directions, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-12):
            raise ValueError("every direction must have unit Euclidean norm")
        object.__setattr__(self, "directions", _readonly(directions))
        object.__setattr__(self, "bounds", _readonly(bounds))

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def contains(self, points: np.ndarray, slack: float = 0.0) -> np.ndarray:
        """Mask of points satisfying every halfspace up to `slack`."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        vals = points @ self.directions.T
        return np.all(vals <= self.bounds[None, :] + slack, axis=1)

    def is_rectangle(self) -> bool:
        d = self.dim
        if self.directions.shape[0] != 2 * d:
            return False
        expected = np.vstack([np.eye(d), -np.eye(d)])
        return bool(np.array_equal(self.directions, expected))

    def rect_interval(self) -> tuple[np.ndarray, np.ndarray]:
        """(lower, upper) corner of an axis-aligned rectangle."""
        if not self.is_rectangle():
            raise ValueError("polyhedron is not in rectangle form")
        d = self.dim
        upper = self.bounds[:d].copy()
        lower = -self.bounds[d:].copy()
        return lower, upper


@dataclass(frozen=True)
class GridSpec:
    """Axis-aligned bounding box plus per-axis point counts."""

    lower: np.ndarray
    upper: np.ndarray
    resolution: tuple[int, ...]

    def __post_init__(self) -> None:
        lower = np.asarray(self.lower, dtype=float).ravel()
        upper = np.asarray(self.upper, dtype=float).ravel()
        res = tuple(int(r) for r in np.atleast_1d(self.resolution))
        if lower.shape != upper.shape or len(res) != lower.shape[0]:
            raise ValueError("lower, upper and resolution must share a dimension")
        if np.any(upper < lower):
            raise ValueError("empty bounding box")
        if any(r < 2 for r in res):
            raise ValueError("need at least 2 grid points per axis")
        object.__setattr__(self, "lower", _readonly(lower))
        object.__setattr__(self, "upper", _readonly(upper))
        object.__setattr__(self, "resolution", res)

    def axes(self) -> list[np.ndarray]:
        return [
            np.linspace(self.lower[i], self.upper[i], self.resolution[i])
            for i in range(len(self.resolution))
        ]

    def points(self) -> np.ndarray:
        """All grid points, shape (prod(resolution), d)."""
        mesh = np.meshgrid(*self.axes(), indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def cell_diagonal(self) -> float:
        steps = [
            (self.upper[i] - self.lower[i]) / (self.resolution[i] - 1)
            for i in range(len(self.resolution))
        ]
        return float(np.linalg.norm(steps))


@dataclass(frozen=True)
class GridCloud:
    """Finite point cloud of grid points that passed the membership test."""

    points: np.ndarray = field(repr=False)
    grid_spec: GridSpec

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=float)
        if points.size == 0:
            points = points.reshape(0, len(self.grid_spec.resolution))
        object.__setattr__(self, "points", _readonly(np.atleast_2d(points)))

    def __len__(self) -> int:
        return self.points.shape[0]

    @property
    def empty(self) -> bool:
        return len(self) == 0

    def to_dict(self) -> dict:
        return {
            "points": self.points.tolist(),
            "grid_spec": {
                "lower": self.grid_spec.lower.tolist(),
                "upper": self.grid_spec.upper.tolist(),
                "resolution": list(self.grid_spec.resolution),
            },
        }

    @classmethod
    def from_dict(cls, data: dict) -> "GridCloud":
        spec = GridSpec(
            lower=np.asarray(data["grid_spec"]["lower"], dtype=float),
            upper=np.asarray(data["grid_spec"]["upper"], dtype=float),
            resolution=tuple(data["grid_spec"]["resolution"]),
        )
        return cls(points=np.asarray(data["points"], dtype=float), grid_spec=spec)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text: str) -> "GridCloud":
        return cls.from_dict(json.loads(text))

    def to_csv(self) -> str:
        d = self.points.shape[1] if len(self) else len(self.grid_spec.resolution)
        header = ",".join(f"x{i}" for i in range(d))
        lines = [header]
        lines += [",".join(repr(v) for v in row) for row in self.points]
        return "\n".join(lines) + "\n"
