"""Assembly of the two convex relaxations of the direction problem

    maximize s' x  over positions x consistent with the measurements.

Both relaxations lift the quadratic reformulation (introducing z = |x|^2
and the noise variable) to a rank-one matrix and drop the rank
constraint.  The benchmark keeps the noise vector u itself as a block of
the lifted matrix; the LFR route replaces u by the internal state v of
the measurement-consistency LFR and encodes admissibility through the
flattening LMI, which is what tightens the bound.

Matrices are assembled fully symmetric and exactly in the documented
block layout; builders are pure functions of (instance, direction).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .lfr import PhiLfr, build_phi_lfr
from .model import Instance, _readonly
from .sdp import LmiSpec, SdpProblem


@dataclass(frozen=True)
class VariableLayout:
    """Index map of one lifted variable X = [x; z; lift; 1] outer product."""

    n: int
    x: slice
    z: int
    lift: slice
    corner: int


def _unit_direction(s: np.ndarray, dim: int) -> np.ndarray:
    s = np.asarray(s, dtype=float).ravel()
    if s.shape != (dim,):
        raise ValueError(f"direction must have length {dim}")
    if abs(np.linalg.norm(s) - 1.0) > 1e-9:
        raise ValueError("direction must have unit norm")
    return s


def _objective_matrix(layout: VariableLayout, s: np.ndarray) -> np.ndarray:
    S = np.zeros((layout.n, layout.n))
    S[layout.x, layout.corner] = s / 2.0
    S[layout.corner, layout.x] = s / 2.0
    return S


def _norm_sq_equality(layout: VariableLayout, dim: int) -> np.ndarray:
    K = np.zeros((layout.n, layout.n))
    K[layout.x, layout.x] = np.eye(dim)
    K[layout.z, layout.corner] = -0.5
    K[layout.corner, layout.z] = -0.5
    return K


def _coherence_ineq(layout: VariableLayout, r_m: np.ndarray, sigma_mm: float) -> np.ndarray:
    L = np.zeros((layout.n, layout.n))
    L[layout.x, layout.corner] = -r_m
    L[layout.corner, layout.x] = -r_m
    L[layout.z, layout.corner] = 0.5
    L[layout.corner, layout.z] = 0.5
    L[layout.corner, layout.corner] = float(r_m @ r_m) - sigma_mm
    return L


@dataclass(frozen=True)
class LfrSdpMatrices:
    """All constraint matrices of the LFR relaxation for one direction."""

    layout: VariableLayout
    S: np.ndarray
    K: np.ndarray
    L: tuple
    G: tuple
    H_rows: np.ndarray  # M x n; H_m = outer(row_m, row_m)
    H: tuple
    P: np.ndarray
    Q: np.ndarray
    phi: PhiLfr

    def to_debug_dict(self) -> dict:
        return {
            "n": self.layout.n,
            "S": self.S.tolist(),
            "K": self.K.tolist(),
            "L": [L.tolist() for L in self.L],
            "G": [G.tolist() for G in self.G],
            "H_rows": self.H_rows.tolist(),
            "Q": self.Q.tolist(),
        }


def lfr_sdp_matrices(instance: Instance, s: np.ndarray) -> LfrSdpMatrices:
    """Build the lifted matrices of the LFR relaxation.

    Layout of the rank-one lift: [x (d); z (1); v (2 M^2); 1].  The
    target-dependent affine part of the consistency map lands in the
    equality rows H_m = h_m h_m' with h_m = [2 r_m, -1, B2_m, q_m].
    """
    d = instance.dim
    m = instance.num_anchors
    s = _unit_direction(s, d)
    phi = build_phi_lfr(instance)
    nv = 2 * m * m
    n = d + 1 + nv + 1
    layout = VariableLayout(n=n, x=slice(0, d), z=d, lift=slice(d + 1, d + 1 + nv), corner=n - 1)

    S = _objective_matrix(layout, s)
    K = _norm_sq_equality(layout, d)
    L = tuple(
        _readonly(_coherence_ineq(layout, instance.anchors[mm], float(instance.sigma[mm, mm])))
        for mm in range(m)
    )
    G = []
    for mm in range(m):
        Gm = np.zeros((n, n))
        Gm[layout.lift, layout.corner] = phi.B1[mm] / 2.0
        Gm[layout.corner, layout.lift] = phi.B1[mm] / 2.0
        Gm[layout.corner, layout.corner] = float(instance.y[mm])
        G.append(_readonly(Gm))

    H_rows = np.zeros((m, n))
    H_rows[:, layout.x] = 2.0 * instance.anchors
    H_rows[:, layout.z] = -1.0
    H_rows[:, layout.lift] = phi.B2
    H_rows[:, layout.corner] = phi.q_vec
    H = tuple(_readonly(np.outer(H_rows[mm], H_rows[mm])) for mm in range(m))

    P = np.block(
        [[np.eye(nv), np.zeros((nv, 1))], [phi.C, phi.d[:, None]]]
    )
    Q = np.zeros((2 * nv, n))
    Q[:, d + 1 :] = P

    return LfrSdpMatrices(
        layout=layout,
        S=_readonly(S),
        K=_readonly(K),
        L=L,
        G=tuple(G),
        H_rows=_readonly(H_rows),
        H=H,
        P=_readonly(P),
        Q=_readonly(Q),
        phi=phi,
    )


def _lfr_null_hints(layout: VariableLayout, m: int) -> list[np.ndarray]:
    """Kernel directions forced on every feasible X by the flattening LMI.

    The w-side rows of the LMI corresponding to the second state of every
    measurement block are the constant vector e1, so their pairwise
    differences have zero weight on the w-Gram side; positive
    semidefiniteness then forces the matching v-block differences of X to
    vanish.  Concretely X must treat the second v-block of every
    measurement pair as equal.
    """
    hints = []
    off = layout.lift.start
    for j in range(m):
        for k in range(j + 1, m):
            for t in range(m):
                g = np.zeros(layout.n)
                g[off + (2 * j + 1) * m + t] = 1.0
                g[off + (2 * k + 1) * m + t] = -1.0
                hints.append(g)
    return hints


def build_lfr_sdp(instance: Instance, s: np.ndarray) -> SdpProblem:
    """The LFR relaxation as a generic SDP (rank constraint dropped)."""
    mats = lfr_sdp_matrices(instance, s)
    layout = mats.layout
    m = instance.num_anchors
    scaling = np.eye(layout.n)
    scaling[layout.lift, layout.lift] = np.kron(np.eye(2 * m), instance.sigma_sqrt)
    return SdpProblem(
        n=layout.n,
        objective=mats.S,
        eq_constraints=tuple([(mats.K, 0.0)] + [(Hm, 0.0) for Hm in mats.H]),
        ineq_constraints=tuple(list(mats.L) + list(mats.G)),
        lmi=LmiSpec(Q=mats.Q, sigma=instance.sigma),
        null_vectors=tuple(_lfr_null_hints(layout, m)),
        scaling=scaling,
    )


@dataclass(frozen=True)
class BenchmarkSdpMatrices:
    """All constraint matrices of the benchmark relaxation."""

    layout: VariableLayout
    S: np.ndarray
    K: np.ndarray
    L: tuple
    G: tuple
    H: tuple
    J: np.ndarray
    f: np.ndarray

    def to_debug_dict(self) -> dict:
        return {
            "n": self.layout.n,
            "S": self.S.tolist(),
            "K": self.K.tolist(),
            "L": [L.tolist() for L in self.L],
            "G": [G.tolist() for G in self.G],
            "H": [H.tolist() for H in self.H],
            "J": self.J.tolist(),
        }


def benchmark_sdp_matrices(instance: Instance, s: np.ndarray) -> BenchmarkSdpMatrices:
    """Build the lifted matrices of the benchmark relaxation.

    Layout of the rank-one lift: [x (d); z (1); u (M); 1].
    """
    d = instance.dim
    m = instance.num_anchors
    s = _unit_direction(s, d)
    n = d + 1 + m + 1
    layout = VariableLayout(n=n, x=slice(0, d), z=d, lift=slice(d + 1, d + 1 + m), corner=n - 1)
    eye_m = np.eye(m)

    S = _objective_matrix(layout, s)
    K = _norm_sq_equality(layout, d)
    L = tuple(
        _readonly(_coherence_ineq(layout, instance.anchors[mm], float(instance.sigma[mm, mm])))
        for mm in range(m)
    )
    G = []
    H = []
    for mm in range(m):
        Gm = np.zeros((n, n))
        Gm[layout.lift, layout.corner] = -eye_m[mm] / 2.0
        Gm[layout.corner, layout.lift] = -eye_m[mm] / 2.0
        Gm[layout.corner, layout.corner] = float(instance.y[mm])
        G.append(_readonly(Gm))

        Hm = np.zeros((n, n))
        Hm[layout.x, layout.corner] = instance.anchors[mm]
        Hm[layout.corner, layout.x] = instance.anchors[mm]
        Hm[layout.z, layout.corner] = -0.5
        Hm[layout.corner, layout.z] = -0.5
        Hm[layout.lift, layout.lift] = np.outer(eye_m[mm], eye_m[mm])
        Hm[layout.lift, layout.corner] += -instance.y[mm] * eye_m[mm]
        Hm[layout.corner, layout.lift] += -instance.y[mm] * eye_m[mm]
        Hm[layout.corner, layout.corner] = float(
            instance.y[mm] ** 2 - instance.anchors[mm] @ instance.anchors[mm]
        )
        H.append(_readonly(Hm))

    J = np.zeros((n, n))
    J[layout.lift, layout.lift] = -scipy.linalg.cho_solve(
        scipy.linalg.cho_factor(np.array(instance.sigma), lower=True), eye_m
    )
    J[layout.corner, layout.corner] = 1.0
    f = np.zeros(n)
    f[layout.corner] = 1.0

    return BenchmarkSdpMatrices(
        layout=layout,
        S=_readonly(S),
        K=_readonly(K),
        L=L,
        G=tuple(G),
        H=tuple(H),
        J=_readonly(0.5 * (J + J.T)),
        f=_readonly(f),
    )


def build_benchmark_sdp(instance: Instance, s: np.ndarray) -> SdpProblem:
    """The benchmark relaxation as a generic SDP (rank constraint dropped)."""
    mats = benchmark_sdp_matrices(instance, s)
    layout = mats.layout
    m = instance.num_anchors
    scaling = np.eye(layout.n)
    scaling[layout.lift, layout.lift] = np.array(instance.sigma_sqrt)
    return SdpProblem(
        n=layout.n,
        objective=mats.S,
        eq_constraints=tuple([(mats.K, 0.0)] + [(Hm, 0.0) for Hm in mats.H]),
        ineq_constraints=tuple(list(mats.L) + list(mats.G) + [mats.J]),
        lmi=None,
        scaling=scaling,
    )


def noise_matrix(u: np.ndarray, m: int) -> np.ndarray:
    """Embed a noise vector as the first column of an M x M matrix."""
    u = np.asarray(u, dtype=float).ravel()
    U = np.zeros((m, m))
    U[:, 0] = u
    return U


def lfr_truth_lift(instance: Instance, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Rank-one feasible point of the LFR relaxation from a ground truth.

    Runs the consistency LFR's internal fixed point at the embedded noise
    matrix to obtain the lifted state v, then forms [x; |x|^2; v; 1] and
    its outer product.
    """
    x = np.asarray(x, dtype=float).ravel()
    m = instance.num_anchors
    phi = build_phi_lfr(instance)
    U = noise_matrix(u, m)
    kron = np.kron(np.eye(2 * m), U)
    w = np.linalg.solve(np.eye(phi.C.shape[0]) - phi.C @ kron, np.array(phi.d))
    v = kron @ w
    t = np.concatenate([x, [float(x @ x)], v, [1.0]])
    return np.outer(t, t)


def benchmark_truth_lift(instance: Instance, x: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Rank-one feasible point of the benchmark relaxation from a truth."""
    x = np.asarray(x, dtype=float).ravel()
    u = np.asarray(u, dtype=float).ravel()
    t = np.concatenate([x, [float(x @ x)], u, [1.0]])
    return np.outer(t, t)
