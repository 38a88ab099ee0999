"""Brute-force grid approximation of the consistent set.

A dense grid over a bounding box is filtered through the exact membership
predicate; the surviving cloud is a resolution-limited stand-in for the
true set, used to audit the relaxations from below.  The module also
carries two statistical sanity checks: the grid maximizers of the
uniform-noise coherent likelihood must coincide with the membership
cloud, and any cloud point must maximize its own truncated-Gaussian
likelihood over the grid.
"""

from __future__ import annotations

import numpy as np

from .model import (
    MEMBERSHIP_SLACK,
    GridCloud,
    GridSpec,
    Instance,
    member_x,
    membership_mask,
    theta,
)


def _grid_spec(
    lower: np.ndarray, upper: np.ndarray, resolution
) -> GridSpec:
    lower = np.asarray(lower, dtype=float).ravel()
    upper = np.asarray(upper, dtype=float).ravel()
    if np.isscalar(resolution):
        resolution = (int(resolution),) * lower.shape[0]
    return GridSpec(lower=lower, upper=upper, resolution=tuple(resolution))


def grid_cloud(
    instance: Instance,
    lower: np.ndarray,
    upper: np.ndarray,
    resolution=400,
) -> GridCloud:
    """Grid points of the box that pass the exact membership test.

    An empty cloud is a legal result (the box may simply miss the set).
    """
    spec = _grid_spec(lower, upper, resolution)
    pts = spec.points()
    mask = membership_mask(pts, instance)
    return GridCloud(points=pts[mask], grid_spec=spec)


def coherent_ml_set(
    instance: Instance,
    lower: np.ndarray,
    upper: np.ndarray,
    resolution=400,
) -> GridCloud:
    """Grid maximizers of the uniform-noise likelihood among coherent points.

    The uniform density over the noise ellipsoid is constant on its
    support, so a coherent grid point maximizes the likelihood exactly
    when its residual lies inside the ellipsoid; points where the
    objective vanishes are never reported as maximizers.  By construction
    this must agree with `grid_cloud` point for point; the two functions
    keep deliberately separate evaluation routes (whitened-norm test here,
    Cholesky quadratic form there) so the agreement is a real check.
    """
    spec = _grid_spec(lower, upper, resolution)
    pts = spec.points()
    dist = np.linalg.norm(pts[:, None, :] - instance.anchors[None, :, :], axis=2)
    coherent_ok = np.all(
        dist**2 >= np.diag(instance.sigma)[None, :] - MEMBERSHIP_SLACK, axis=1
    )
    residual = instance.y[None, :] - dist
    white = residual @ instance.sigma_inv_sqrt.T
    inside = np.einsum("nm,nm->n", white, white) <= 1.0 + MEMBERSHIP_SLACK
    likelihood_positive = coherent_ok & inside
    return GridCloud(points=pts[likelihood_positive], grid_spec=spec)


def truncated_gaussian_argmax_check(
    instance: Instance,
    xhat: np.ndarray,
    lower: np.ndarray,
    upper: np.ndarray,
    resolution=400,
) -> bool:
    """Does xhat maximize its own truncated-Gaussian likelihood on the grid?

    The density is the Gaussian centered at the residual of xhat,
    truncated to the noise ellipsoid; the normalization constant does not
    depend on the position and is skipped.  Ties are tolerated only at
    zero range-profile distance.  xhat must itself be a grid point of the
    membership cloud, otherwise the call is rejected.
    """
    xhat = np.asarray(xhat, dtype=float).ravel()
    spec = _grid_spec(lower, upper, resolution)
    steps = (spec.upper - spec.lower) / (np.array(spec.resolution) - 1)
    idx = np.rint((xhat - spec.lower) / steps)
    on_grid = np.all(np.abs(spec.lower + idx * steps - xhat) <= 1e-9)
    if not on_grid or not member_x(xhat, instance):
        raise ValueError("xhat must be a member grid point of the cloud")

    pts = spec.points()
    dist = np.linalg.norm(pts[:, None, :] - instance.anchors[None, :, :], axis=2)
    coherent_ok = np.all(
        dist**2 >= np.diag(instance.sigma)[None, :] - MEMBERSHIP_SLACK, axis=1
    )
    residual = instance.y[None, :] - dist
    quad = instance.noise_quadform(residual)
    inside = quad <= 1.0 + MEMBERSHIP_SLACK

    center = instance.y - theta(xhat, instance)
    shift = residual - center[None, :]
    objective = np.exp(-0.5 * np.einsum("nm,nm->n", shift, shift))
    objective[~(coherent_ok & inside)] = 0.0
    flat_idx = int(np.ravel_multi_index(idx.astype(int), spec.resolution))
    return bool(objective.max() <= objective[flat_idx] + 1e-12)
