"""Linear-fractional representations (LFRs) and their algebra.

An LFR is a map from an uncertainty matrix U to a vector,

    U  ->  B (I_p x U) (I - C (I_p x U))^-1 d + a,

where `x` denotes the Kronecker product.  LFRs are closed under stacking
and under composition with linear maps U -> G U H; those two operations,
plus one elementary two-state block per range measurement, are everything
needed to express the measurement-consistency map of a localization
instance as a single LFR whose uncertainty enters only through I_p x U.

The payoff is the flattening step: pairs (v, w) with v = (I_p x U) w for
some admissible U are exactly the pairs for which a fixed linear map of
the outer product [v; w][v; w]' is positive semidefinite.  That turns a
rational uncertainty description into one linear matrix inequality.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .model import DimensionMismatchError, Instance, _readonly

# Relative residual above which the inner solve of an LFR evaluation is
# declared ill-posed for the given uncertainty matrix.
EVAL_RESIDUAL_TOL = 1e-8

# Slack on the minimum eigenvalue when checking the flattening inequality.
FLATTEN_PSD_TOL = 1e-9

# Reconstruction tolerance for witness extraction.
WITNESS_TOL = 1e-8


class NearSingularError(RuntimeError):
    """I - C (I_p x U) is numerically singular: the pair (lfr, U) is ill-posed."""


class NoWitnessError(RuntimeError):
    """No admissible uncertainty matrix reproduces the given (v, w) pair."""


@dataclass(frozen=True)
class Lfr:
    """A linear-fractional representation.

    The accepted uncertainty matrices U have shape (u_rows, u_cols), so
    I_p x U maps R^(p*u_cols) -> R^(p*u_rows).  Shapes are validated so
    the defining formula type-checks:

        C: (p*u_cols, p*u_rows)   d: (p*u_cols,)
        B: (n_out,    p*u_rows)   a: (n_out,)

    Well-posedness is a joint property of (C, U) and is checked at
    evaluation time, not stored.
    """

    p: int
    C: np.ndarray
    d: np.ndarray
    B: np.ndarray
    a: np.ndarray
    u_rows: int
    u_cols: int

    def __post_init__(self) -> None:
        p, ur, uc = int(self.p), int(self.u_rows), int(self.u_cols)
        if p < 1 or ur < 1 or uc < 1:
            raise ValueError("p, u_rows and u_cols must be positive")
        C = np.atleast_2d(np.asarray(self.C, dtype=float))
        d = np.asarray(self.d, dtype=float).ravel()
        B = np.atleast_2d(np.asarray(self.B, dtype=float))
        a = np.asarray(self.a, dtype=float).ravel()
        if C.shape != (p * uc, p * ur):
            raise DimensionMismatchError(
                f"C must be ({p * uc}, {p * ur}), got {C.shape}"
            )
        if d.shape != (p * uc,):
            raise DimensionMismatchError(f"d must have length {p * uc}")
        if B.shape[1] != p * ur:
            raise DimensionMismatchError(f"B must have {p * ur} columns")
        if a.shape != (B.shape[0],):
            raise DimensionMismatchError("a must match the rows of B")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "u_rows", ur)
        object.__setattr__(self, "u_cols", uc)
        object.__setattr__(self, "C", _readonly(C))
        object.__setattr__(self, "d", _readonly(d))
        object.__setattr__(self, "B", _readonly(B))
        object.__setattr__(self, "a", _readonly(a))

    @property
    def n_out(self) -> int:
        return self.B.shape[0]


def lfr_eval(lfr: Lfr, U: np.ndarray) -> np.ndarray:
    """Evaluate an LFR at the uncertainty matrix U.

    Solves (I - C (I_p x U)) w = d by LU with one step of iterative
    refinement, then returns B (I_p x U) w + a.

    Raises:
        NearSingularError: the inner solve leaves a residual above
            EVAL_RESIDUAL_TOL, signalling an ill-posed (lfr, U) pair.
    """
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if U.shape != (lfr.u_rows, lfr.u_cols):
        raise DimensionMismatchError(
            f"U must be ({lfr.u_rows}, {lfr.u_cols}), got {U.shape}"
        )
    K = np.kron(np.eye(lfr.p), U)
    A = np.eye(lfr.C.shape[0]) - lfr.C @ K
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            lu, piv = scipy.linalg.lu_factor(A)
            w = scipy.linalg.lu_solve((lu, piv), lfr.d)
            w += scipy.linalg.lu_solve((lu, piv), lfr.d - A @ w)
    except (ValueError, scipy.linalg.LinAlgError) as exc:
        raise NearSingularError(str(exc)) from exc
    residual = np.linalg.norm(A @ w - lfr.d) / (1.0 + np.linalg.norm(lfr.d))
    if not np.isfinite(residual) or residual > EVAL_RESIDUAL_TOL:
        raise NearSingularError(
            f"inner solve residual {residual:.3e} exceeds {EVAL_RESIDUAL_TOL:.0e}"
        )
    return lfr.B @ (K @ w) + lfr.a


def lfr_stack(lfrs: list[Lfr]) -> Lfr:
    """Stack LFRs so the output concatenates the individual outputs.

    When every input shares the same header (identical C, d and p) the
    stack reuses that header and p is unchanged; otherwise the headers go
    on a block diagonal and p is the sum.
    """
    if not lfrs:
        raise ValueError("need at least one LFR to stack")
    ur, uc = lfrs[0].u_rows, lfrs[0].u_cols
    if any(f.u_rows != ur or f.u_cols != uc for f in lfrs):
        raise DimensionMismatchError("stacked LFRs must accept the same U shape")
    first = lfrs[0]
    shared = all(
        f.p == first.p
        and np.array_equal(f.C, first.C)
        and np.array_equal(f.d, first.d)
        for f in lfrs[1:]
    )
    B = np.vstack([f.B for f in lfrs]) if shared else scipy.linalg.block_diag(
        *[f.B for f in lfrs]
    )
    a = np.concatenate([f.a for f in lfrs])
    if shared:
        return Lfr(p=first.p, C=first.C, d=first.d, B=B, a=a, u_rows=ur, u_cols=uc)
    return Lfr(
        p=sum(f.p for f in lfrs),
        C=scipy.linalg.block_diag(*[f.C for f in lfrs]),
        d=np.concatenate([f.d for f in lfrs]),
        B=B,
        a=a,
        u_rows=ur,
        u_cols=uc,
    )


def lfr_compose_linear(lfr: Lfr, G: np.ndarray, H: np.ndarray) -> Lfr:
    """LFR of U -> lfr(G U H).

    G has shape (u_rows, new_rows) and H has shape (new_cols, u_cols); the
    result accepts (new_rows, new_cols) uncertainty matrices and satisfies
    lfr_eval(out, U) == lfr_eval(lfr, G @ U @ H) for every U.
    """
    G = np.atleast_2d(np.asarray(G, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    if G.shape[0] != lfr.u_rows or H.shape[1] != lfr.u_cols:
        raise DimensionMismatchError(
            f"G must have {lfr.u_rows} rows and H {lfr.u_cols} columns"
        )
    Ip_G = np.kron(np.eye(lfr.p), G)
    Ip_H = np.kron(np.eye(lfr.p), H)
    return Lfr(
        p=lfr.p,
        C=Ip_H @ lfr.C @ Ip_G,
        d=Ip_H @ lfr.d,
        B=lfr.B @ Ip_G,
        a=lfr.a,
        u_rows=G.shape[1],
        u_cols=H.shape[0],
    )


@dataclass(frozen=True)
class PhiLfr:
    """LFR of the measurement-consistency map of one instance.

    The map sends an M x M uncertainty matrix U (whose first column is
    the noise vector) to 2M outputs: the M residual ranges y_m - (U e1)_m
    followed by the M expanded squared-range identities.  Only the second
    output block depends on the target: its affine part is

        q_vec + 2 R' x - z 1_M,

    which is kept symbolic here (via q_vec and the anchor matrix R) so
    the SDP assembly can fold the x, z dependence into its own equality
    constraints.  `with_target` bakes a concrete (x, z) in for direct
    evaluation.
    """

    lfr: Lfr
    B1: np.ndarray
    B2: np.ndarray
    a1: np.ndarray
    q_vec: np.ndarray
    R: np.ndarray  # d x M, anchors in columns
    E: np.ndarray
    F: np.ndarray
    b2_hat: np.ndarray
    sigma: np.ndarray
    sigma_inv_sqrt: np.ndarray

    @property
    def num_anchors(self) -> int:
        return self.R.shape[1]

    @property
    def C(self) -> np.ndarray:
        return self.lfr.C

    @property
    def d(self) -> np.ndarray:
        return self.lfr.d

    def with_target(self, x: np.ndarray, z: float) -> Lfr:
        """The full LFR with the target-dependent affine part filled in."""
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.R.shape[0]:
            raise DimensionMismatchError("x has wrong dimension")
        a2 = self.q_vec + 2.0 * self.R.T @ x - float(z)
        return Lfr(
            p=self.lfr.p,
            C=self.lfr.C,
            d=self.lfr.d,
            B=self.lfr.B,
            a=np.concatenate([self.a1, a2]),
            u_rows=self.lfr.u_rows,
            u_cols=self.lfr.u_cols,
        )


def build_phi_lfr(instance: Instance) -> PhiLfr:
    """Assemble the measurement-consistency LFR of an instance.

    Each range measurement contributes one elementary two-state block
    with a strictly upper-triangular header, so I - C (I_2M x U) is unit
    triangular up to permutation and the LFR is well-posed for every U.
    """
    m = instance.num_anchors
    y = np.array(instance.y)
    eye_m = np.eye(m)
    J = np.array([[0.0, 1.0], [0.0, 0.0]])
    # F stacks the per-measurement selectors I_2 x e_m'; E re-embeds each
    # scalar state into the first coordinate of an M-block.
    F = scipy.linalg.block_diag(*[np.kron(np.eye(2), eye_m[mm][None, :]) for mm in range(m)])
    E = np.kron(np.eye(2 * m), eye_m[:, :1])
    C = E @ np.kron(eye_m, J) @ F
    d = E @ np.kron(np.ones(m), np.array([0.0, 1.0]))
    B1 = np.kron(eye_m, np.array([[0.0, -1.0]])) @ F
    b2_hat = np.zeros((m, 2 * m))
    for mm in range(m):
        b2_hat[mm, 2 * mm : 2 * mm + 2] = (1.0, -2.0 * y[mm])
    B2 = b2_hat @ F
    q_vec = y**2 - np.sum(instance.anchors**2, axis=1)
    lfr = Lfr(
        p=2 * m,
        C=C,
        d=d,
        B=np.vstack([B1, B2]),
        a=np.concatenate([y, q_vec]),
        u_rows=m,
        u_cols=m,
    )
    return PhiLfr(
        lfr=lfr,
        B1=_readonly(B1),
        B2=_readonly(B2),
        a1=_readonly(y),
        q_vec=_readonly(q_vec),
        R=_readonly(instance.anchors.T),
        E=_readonly(E),
        F=_readonly(F),
        b2_hat=_readonly(b2_hat),
        sigma=instance.sigma,
        sigma_inv_sqrt=instance.sigma_inv_sqrt,
    )


def flatten_factors(sigma_inv_sqrt: np.ndarray) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """The congruence factors (E_m, F_m) of the flattening map.

    E_m = I_2M x e_m' picks the m-th coordinate of every w-block and
    F_m = I_2M x (row m of sigma^-1/2) does the same for v after the
    whitening change of variables.
    """
    m = sigma_inv_sqrt.shape[0]
    eye_m = np.eye(m)
    E = [np.kron(np.eye(2 * m), eye_m[mm][None, :]) for mm in range(m)]
    F = [np.kron(np.eye(2 * m), sigma_inv_sqrt[mm][None, :]) for mm in range(m)]
    return E, F


def flatten_map(S_big: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Linear map whose PSD-ness characterizes v = (I_2M x U) w, U admissible.

    Takes a symmetric matrix on the stacked [v; w] space (side 4 M^2) and
    returns sum_m E_m S22 E_m' - F_m S11 F_m', a symmetric 2M x 2M matrix.
    On outer products it equals W'W - V' sigma^-1 V for the reshaped
    block-column matrices V, W.
    """
    S_big = np.asarray(S_big, dtype=float)
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    m = sigma.shape[0]
    if S_big.shape != (4 * m * m, 4 * m * m):
        raise DimensionMismatchError(
            f"S_big must be ({4 * m * m}, {4 * m * m}) for M={m}, got {S_big.shape}"
        )
    w, v = np.linalg.eigh(sigma)
    if w[0] <= 0:
        raise ValueError("sigma must be positive definite")
    sigma_inv_sqrt = (v / np.sqrt(w)) @ v.T
    half = 2 * m * m
    S11 = S_big[:half, :half]
    S22 = S_big[half:, half:]
    E, F = flatten_factors(sigma_inv_sqrt)
    out = np.zeros((2 * m, 2 * m))
    for Em, Fm in zip(E, F):
        out += Em @ S22 @ Em.T - Fm @ S11 @ Fm.T
    return 0.5 * (out + out.T)


def _as_block_columns(vec: np.ndarray, m: int) -> np.ndarray:
    """Reshape a stacked vector of 2M M-blocks into the M x 2M matrix whose
    columns are the blocks."""
    return vec.reshape(2 * m, m).T


def unflatten_witness(v: np.ndarray, w: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """Recover an admissible U with (I_2M x U) w = v, or fail.

    Requires the flattening inequality to hold (up to FLATTEN_PSD_TOL) for
    the outer product of [v; w].  The construction whitens v, solves the
    resulting factor problem by pseudoinverse and maps back; the returned
    U satisfies the reproduction identity to WITNESS_TOL and has whitened
    spectral norm at most 1 + WITNESS_TOL.

    Raises:
        NoWitnessError: the inequality fails or the reconstruction residual
            is above tolerance.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    m = sigma.shape[0]
    v = np.asarray(v, dtype=float).ravel()
    w = np.asarray(w, dtype=float).ravel()
    if v.shape != (2 * m * m,) or w.shape != (2 * m * m,):
        raise DimensionMismatchError(f"v and w must have length {2 * m * m}")
    eigw, eigv = np.linalg.eigh(sigma)
    if eigw[0] <= 0:
        raise ValueError("sigma must be positive definite")
    sigma_sqrt = (eigv * np.sqrt(eigw)) @ eigv.T
    sigma_inv_sqrt = (eigv / np.sqrt(eigw)) @ eigv.T
    V = _as_block_columns(v, m)
    W = _as_block_columns(w, m)
    V_white = sigma_inv_sqrt @ V
    gap = W.T @ W - V_white.T @ V_white
    min_eig = float(np.linalg.eigvalsh(0.5 * (gap + gap.T))[0])
    if min_eig < -FLATTEN_PSD_TOL * max(1.0, float(np.abs(gap).max())):
        raise NoWitnessError(
            f"flattening inequality fails (min eigenvalue {min_eig:.3e})"
        )
    Z = V_white @ np.linalg.pinv(W)
    U = sigma_sqrt @ Z
    scale = max(1.0, float(np.abs(v).max()))
    if float(np.abs(U @ W - V).max()) > WITNESS_TOL * scale:
        raise NoWitnessError("reconstruction residual exceeds tolerance")
    if float(np.linalg.norm(Z, 2)) > 1.0 + WITNESS_TOL:
        raise NoWitnessError("whitened witness norm exceeds 1")
    return U
