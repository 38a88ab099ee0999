"""Solver-agnostic semidefinite-program container and a solve contract.

An `SdpProblem` is a trace-form SDP over one symmetric PSD variable X:

    maximize    Tr(S_obj X)
    subject to  Tr(A_i X)  = b_i
                Tr(B_j X) >= 0
                flatten(Q X Q', sigma) >> 0        (optional structured LMI)
                X >> 0,  X[n-1, n-1] = 1

Solving is delegated to cvxpy (CLARABEL first, SCS as fallback).  The
problems produced by the relaxation builders have no strictly feasible
point: rank-one PSD equality matrices force X to annihilate their range,
and the structured LMI forces further kernel directions.  `solve`
therefore applies a facial-reduction step first, restricting X to the
provably feasible face (null vectors detected from PSD equality matrices
plus any `null_vectors` certified by the problem builder), and compresses
LMI output rows that vanish identically.  Both transformations preserve
the optimal value exactly; solutions are mapped back and re-verified
against the original constraints.
"""

from __future__ import annotations

import enum
import hashlib
import io
import time
from dataclasses import dataclass, field

import cvxpy as cp
import numpy as np

from .lfr import flatten_factors, flatten_map
from .model import DimensionMismatchError, _readonly

DEFAULT_TOL = 1e-6

# Eigenvalue cutoffs for detecting PSD equality matrices and dropping
# constraints that reduce to 0 = 0 on the feasible face.
_PSD_DETECT_TOL = 1e-10
_DROP_TOL = 1e-11


class SdpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    NUMERICAL_TROUBLE = "numerical_trouble"


class UnboundedDirectionError(RuntimeError):
    """The relaxation failed to bound the requested direction."""


def _sym(a: np.ndarray) -> np.ndarray:
    return 0.5 * (a + a.T)


@dataclass(frozen=True)
class LmiSpec:
    """Structured constraint flatten(Q X Q', sigma) >> 0.

    Q has 4 M^2 rows (the stacked v and w selectors) and as many columns
    as the side of X.
    """

    Q: np.ndarray
    sigma: np.ndarray

    def __post_init__(self) -> None:
        Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        m = sigma.shape[0]
        if sigma.shape != (m, m):
            raise DimensionMismatchError("sigma must be square")
        if Q.shape[0] != 4 * m * m:
            raise DimensionMismatchError(
                f"Q must have {4 * m * m} rows for M={m}, got {Q.shape[0]}"
            )
        object.__setattr__(self, "Q", _readonly(Q))
        object.__setattr__(self, "sigma", _readonly(sigma))

    @property
    def m(self) -> int:
        return self.sigma.shape[0]

    def congruence_factors(self, n: int) -> tuple[list[np.ndarray], list[np.ndarray]]:
        """Factor pairs (A_m, B_m) with value(X) = sum A_m X A_m' - B_m X B_m'."""
        m = self.m
        w, v = np.linalg.eigh(np.array(self.sigma))
        sigma_inv_sqrt = (v / np.sqrt(w)) @ v.T
        E, F = flatten_factors(sigma_inv_sqrt)
        Q1 = self.Q[: 2 * m * m, :]
        Q2 = self.Q[2 * m * m :, :]
        return [Em @ Q2 for Em in E], [Fm @ Q1 for Fm in F]

    def value(self, X: np.ndarray) -> np.ndarray:
        return flatten_map(self.Q @ X @ self.Q.T, self.sigma)


@dataclass(frozen=True)
class SdpProblem:
    """Trace-form SDP over one PSD variable with corner normalization.

    `null_vectors` is an optional tuple of vectors g certified by the
    problem builder to satisfy X g = 0 for every feasible X; `scaling` is
    an optional invertible change of variables X = T Xt T' applied before
    handing the problem to the solver.  Both are pure solver hints: they
    never change the problem's meaning, only its conditioning.
    """

    n: int
    objective: np.ndarray
    eq_constraints: tuple = ()
    ineq_constraints: tuple = ()
    lmi: LmiSpec | None = None
    null_vectors: tuple = ()
    scaling: np.ndarray | None = None

    def __post_init__(self) -> None:
        n = int(self.n)
        obj = _sym(np.atleast_2d(np.asarray(self.objective, dtype=float)))
        if obj.shape != (n, n):
            raise DimensionMismatchError(f"objective must be ({n}, {n})")
        eqs = []
        for A, b in self.eq_constraints:
            A = _sym(np.atleast_2d(np.asarray(A, dtype=float)))
            if A.shape != (n, n):
                raise DimensionMismatchError("equality matrix has wrong shape")
            eqs.append((_readonly(A), float(b)))
        ineqs = []
        for B in self.ineq_constraints:
            B = _sym(np.atleast_2d(np.asarray(B, dtype=float)))
            if B.shape != (n, n):
                raise DimensionMismatchError("inequality matrix has wrong shape")
            ineqs.append(_readonly(B))
        if self.lmi is not None and self.lmi.Q.shape[1] != n:
            raise DimensionMismatchError("lmi selector must have n columns")
        nulls = []
        for g in self.null_vectors:
            g = np.asarray(g, dtype=float).ravel()
            if g.shape != (n,):
                raise DimensionMismatchError("null vector has wrong length")
            nulls.append(_readonly(g))
        scaling = self.scaling
        if scaling is not None:
            scaling = np.atleast_2d(np.asarray(scaling, dtype=float))
            if scaling.shape != (n, n):
                raise DimensionMismatchError("scaling must be (n, n)")
            scaling = _readonly(scaling)
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "objective", _readonly(obj))
        object.__setattr__(self, "eq_constraints", tuple(eqs))
        object.__setattr__(self, "ineq_constraints", tuple(ineqs))
        object.__setattr__(self, "null_vectors", tuple(nulls))
        object.__setattr__(self, "scaling", scaling)

    @property
    def corner(self) -> int:
        return self.n - 1

    def constraint_fingerprint(self) -> str:
        """Hash of everything except the objective; keys the compiled cache."""
        h = hashlib.sha256()
        h.update(str(self.n).encode())
        for A, b in self.eq_constraints:
            h.update(A.tobytes())
            h.update(np.float64(b).tobytes())
        h.update(b"|ineq|")
        for B in self.ineq_constraints:
            h.update(B.tobytes())
        if self.lmi is not None:
            h.update(b"|lmi|")
            h.update(self.lmi.Q.tobytes())
            h.update(self.lmi.sigma.tobytes())
        for g in self.null_vectors:
            h.update(b"|null|")
            h.update(g.tobytes())
        if self.scaling is not None:
            h.update(b"|scal|")
            h.update(self.scaling.tobytes())
        return h.hexdigest()


@dataclass
class SolveStats:
    solver: str = ""
    iterations: int | None = None
    wall_time_s: float = 0.0
    reduced_n: int | None = None
    cache_hit: bool = False


@dataclass
class SdpSolution:
    status: SdpStatus
    value: float | None = None
    X: np.ndarray | None = None
    solver_stats: SolveStats = field(default_factory=SolveStats)


def constraint_residuals(problem: SdpProblem, X: np.ndarray) -> dict:
    """Feasibility diagnostics of a candidate X against the raw problem."""
    X = _sym(np.asarray(X, dtype=float))
    out = {
        "psd_min_eig": float(np.linalg.eigvalsh(X)[0]),
        "corner_err": abs(float(X[problem.corner, problem.corner]) - 1.0),
        "eq_resid": np.array(
            [np.trace(A @ X) - b for A, b in problem.eq_constraints]
        ),
        "ineq_vals": np.array([np.trace(B @ X) for B in problem.ineq_constraints]),
    }
    if problem.lmi is not None:
        out["lmi_min_eig"] = float(np.linalg.eigvalsh(problem.lmi.value(X))[0])
    return out


def verify_solution(problem: SdpProblem, X: np.ndarray, tol: float) -> bool:
    r = constraint_residuals(problem, X)
    ok = r["psd_min_eig"] >= -tol and r["corner_err"] <= tol
    if r["eq_resid"].size:
        scale = np.array([1.0 + abs(b) for _, b in problem.eq_constraints])
        ok = ok and bool(np.all(np.abs(r["eq_resid"]) <= tol * scale))
    if r["ineq_vals"].size:
        ok = ok and bool(np.all(r["ineq_vals"] >= -tol))
    if "lmi_min_eig" in r:
        ok = ok and r["lmi_min_eig"] >= -tol
    return ok


class _Compiled:
    """A reduced, parameterized cvxpy problem reusable across objectives."""

    def __init__(self, problem: SdpProblem):
        n = problem.n
        T = np.array(problem.scaling) if problem.scaling is not None else np.eye(n)
        nulls = [np.array(g) for g in problem.null_vectors]
        trivially_infeasible = False
        kept_eqs = []
        for A, b in problem.eq_constraints:
            scale = max(1.0, float(np.abs(A).max()))
            if b == 0.0:
                w, v = np.linalg.eigh(np.array(A))
                if w[0] >= -_PSD_DETECT_TOL * scale:
                    # Tr(A X) = 0 with A >> 0 and X >> 0 forces X range(A) = 0.
                    rng = v[:, w > _PSD_DETECT_TOL * scale]
                    nulls.extend(rng.T)
                    continue
            kept_eqs.append((A, b))

        if nulls:
            # X g = 0 and X = T Xt T' imply Xt (T' g) = 0.
            stacked = np.array([T.T @ g for g in nulls])
            _, sv, Vt = np.linalg.svd(stacked, full_matrices=True)
            rank = int(np.sum(sv > 1e-10 * sv[0])) if sv.size else 0
            N = Vt[rank:].T
        else:
            N = np.eye(n)
        Tn = T @ N
        k = N.shape[1]

        corner_vec = Tn[problem.corner]
        if np.linalg.norm(corner_vec) <= 1e-12:
            trivially_infeasible = True

        Y = cp.Variable((k, k), symmetric=True)
        S_param = cp.Parameter((n, n), symmetric=True)
        constraints = [Y >> 0]
        constraints.append(
            cp.trace(np.outer(corner_vec, corner_vec) @ Y) == 1.0
        )
        for A, b in kept_eqs:
            Ar = _sym(Tn.T @ A @ Tn)
            if np.abs(Ar).max() <= _DROP_TOL * max(1.0, np.abs(A).max()):
                if abs(b) > 1e-12:
                    trivially_infeasible = True
                continue
            constraints.append(cp.trace(Ar @ Y) == b)
        for B in problem.ineq_constraints:
            Br = _sym(Tn.T @ B @ Tn)
            if np.abs(Br).max() <= _DROP_TOL * max(1.0, np.abs(B).max()):
                continue
            constraints.append(cp.trace(Br @ Y) >= 0)
        if problem.lmi is not None:
            A_f, B_f = problem.lmi.congruence_factors(n)
            A_f = [A @ Tn for A in A_f]
            B_f = [B @ Tn for B in B_f]
            # Output rows annihilated by every factor vanish identically in
            # the LMI value; compress them away to keep the cone slim.
            rows = np.vstack([f.T for f in A_f + B_f])
            _, sv, Vt = np.linalg.svd(rows, full_matrices=True)
            rank = int(np.sum(sv > 1e-12 * sv[0])) if sv.size and sv[0] > 0 else 0
            Pi = Vt[:rank].T
            A_f = [Pi.T @ A for A in A_f]
            B_f = [Pi.T @ B for B in B_f]
            if rank > 0:
                lmi_expr = sum(A @ Y @ A.T for A in A_f) - sum(
                    B @ Y @ B.T for B in B_f
                )
                constraints.append(lmi_expr >> 0)
        objective = cp.Maximize(cp.trace((Tn.T @ S_param @ Tn) @ Y))
        self.cp_problem = cp.Problem(objective, constraints)
        self.Y = Y
        self.S_param = S_param
        self.Tn = Tn
        self.trivially_infeasible = trivially_infeasible


_COMPILED_CACHE: dict[str, _Compiled] = {}
_CACHE_LIMIT = 32


def _get_compiled(problem: SdpProblem) -> tuple[_Compiled, bool]:
    key = problem.constraint_fingerprint()
    hit = key in _COMPILED_CACHE
    if not hit:
        if len(_COMPILED_CACHE) >= _CACHE_LIMIT:
            _COMPILED_CACHE.pop(next(iter(_COMPILED_CACHE)))
        _COMPILED_CACHE[key] = _Compiled(problem)
    return _COMPILED_CACHE[key], hit


_STATUS_MAP = {
    cp.OPTIMAL: SdpStatus.OPTIMAL,
    cp.INFEASIBLE: SdpStatus.INFEASIBLE,
    cp.UNBOUNDED: SdpStatus.UNBOUNDED,
}


def solve(problem: SdpProblem, tol: float = DEFAULT_TOL) -> SdpSolution:
    """Solve the SDP; see the module docstring for the preprocessing chain.

    CLARABEL is attempted first; on failure or a non-clean status the
    problem is retried with SCS.  A returned OPTIMAL solution always
    passes `verify_solution` at the requested tolerance; anything that
    cannot be certified comes back as NUMERICAL_TROUBLE rather than as a
    silently wrong answer.
    """
    t0 = time.perf_counter()
    compiled, cache_hit = _get_compiled(problem)
    if compiled.trivially_infeasible:
        return SdpSolution(
            status=SdpStatus.INFEASIBLE,
            solver_stats=SolveStats(
                solver="presolve", wall_time_s=time.perf_counter() - t0,
                reduced_n=compiled.Tn.shape[1], cache_hit=cache_hit,
            ),
        )
    compiled.S_param.value = np.array(problem.objective)

    # Problems with the structured LMI have no strictly feasible point and
    # destabilize interior-point end-games; a raised static regularization
    # plus stopping tolerances above the unstable region keeps the solves
    # clean there.  Problems without the LMI take the default tight path.
    if problem.lmi is not None:
        attempts = (
            (
                "CLARABEL",
                dict(
                    solver=cp.CLARABEL,
                    tol_gap_abs=1e-6,
                    tol_gap_rel=1e-6,
                    tol_feas=1e-7,
                    static_regularization_constant=1e-7,
                ),
            ),
            ("CLARABEL-tight", dict(solver=cp.CLARABEL)),
            ("SCS", dict(solver=cp.SCS, eps=1e-7, max_iters=30000)),
        )
    else:
        attempts = (
            ("CLARABEL", dict(solver=cp.CLARABEL)),
            ("SCS", dict(solver=cp.SCS, eps=1e-7, max_iters=30000)),
        )
    last_status = None
    for name, kwargs in attempts:
        try:
            # warm_start would make results depend on solve order across a
            # shared compiled problem; determinism matters more than speed.
            compiled.cp_problem.solve(warm_start=False, **kwargs)
        except cp.error.SolverError:
            continue
        status = compiled.cp_problem.status
        last_status = status
        stats = SolveStats(
            solver=name,
            iterations=getattr(compiled.cp_problem.solver_stats, "num_iters", None),
            wall_time_s=time.perf_counter() - t0,
            reduced_n=compiled.Tn.shape[1],
            cache_hit=cache_hit,
        )
        if status in _STATUS_MAP:
            mapped = _STATUS_MAP[status]
            if mapped is not SdpStatus.OPTIMAL:
                return SdpSolution(status=mapped, solver_stats=stats)
            Y = compiled.Y.value
            X = _sym(compiled.Tn @ Y @ compiled.Tn.T)
            if verify_solution(problem, X, tol):
                return SdpSolution(
                    status=SdpStatus.OPTIMAL,
                    value=float(compiled.cp_problem.value),
                    X=X,
                    solver_stats=stats,
                )
        elif status == cp.OPTIMAL_INACCURATE:
            Y = compiled.Y.value
            X = _sym(compiled.Tn @ Y @ compiled.Tn.T)
            if verify_solution(problem, X, tol):
                return SdpSolution(
                    status=SdpStatus.OPTIMAL,
                    value=float(compiled.cp_problem.value),
                    X=X,
                    solver_stats=stats,
                )
    return SdpSolution(
        status=SdpStatus.NUMERICAL_TROUBLE,
        solver_stats=SolveStats(
            solver=f"last={last_status}", wall_time_s=time.perf_counter() - t0,
            reduced_n=compiled.Tn.shape[1], cache_hit=cache_hit,
        ),
    )


def clear_solver_cache() -> None:
    _COMPILED_CACHE.clear()


def write_sdpa(problem: SdpProblem, path: str) -> None:
    """Dump the problem in sparse SDPA (.dat-s) interchange format.

    The file encodes the equivalent block program

        max Tr(F0 Y)  s.t.  Tr(Fi Y) = c_i,  Y >> 0,

    with Y = blkdiag(X, Z, t): block 1 is X itself, block 2 (present only
    with a structured LMI) is an auxiliary PSD block Z tied entrywise to
    flatten(Q X Q'), and the final diagonal block holds one slack t_j >= 0
    per trace inequality.  Constraint order: corner normalization, then
    equalities, then inequalities, then LMI entries (upper triangle, row
    major).
    """
    n = problem.n
    lmi = problem.lmi
    lmi_side = 2 * lmi.m if lmi is not None else 0
    n_ineq = len(problem.ineq_constraints)

    blocks = [n]
    if lmi is not None:
        blocks.append(lmi_side)
    if n_ineq:
        blocks.append(-n_ineq)

    entries: list[tuple[int, int, int, int, float]] = []

    def add_matrix(mat_no: int, blk: int, mat: np.ndarray) -> None:
        rows, cols = np.nonzero(np.triu(mat))
        for i, j in zip(rows, cols):
            entries.append((mat_no, blk, int(i) + 1, int(j) + 1, float(mat[i, j])))

    add_matrix(0, 1, problem.objective)

    c: list[float] = []
    mat_no = 0

    mat_no += 1
    c.append(1.0)
    corner = np.zeros((n, n))
    corner[problem.corner, problem.corner] = 1.0
    add_matrix(mat_no, 1, corner)

    for A, b in problem.eq_constraints:
        mat_no += 1
        c.append(b)
        add_matrix(mat_no, 1, A)

    slack_blk = len(blocks)
    for j, B in enumerate(problem.ineq_constraints):
        mat_no += 1
        c.append(0.0)
        add_matrix(mat_no, 1, np.asarray(B))
        entries.append((mat_no, slack_blk, j + 1, j + 1, -1.0))

    if lmi is not None:
        A_f, B_f = lmi.congruence_factors(n)
        for i in range(lmi_side):
            for j in range(i, lmi_side):
                theta = np.zeros((lmi_side, lmi_side))
                theta[i, j] += 0.5
                theta[j, i] += 0.5
                D = np.zeros((n, n))
                for Am, Bm in zip(A_f, B_f):
                    D += Am.T @ theta @ Am - Bm.T @ theta @ Bm
                mat_no += 1
                c.append(0.0)
                add_matrix(mat_no, 1, _sym(D))
                add_matrix(mat_no, 2, -theta)

    buf = io.StringIO()
    buf.write(f"{mat_no}\n{len(blocks)}\n")
    buf.write(" ".join(str(b) for b in blocks) + "\n")
    buf.write(" ".join(repr(v) for v in c) + "\n")
    for mat, blk, i, j, val in entries:
        buf.write(f"{mat} {blk} {i} {j} {val!r}\n")
    with open(path, "w") as fh:
        fh.write(buf.getvalue())
