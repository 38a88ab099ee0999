import numpy as np
import pytest

from locbox.harness import gen_instance
from locbox.relaxations import (
    benchmark_truth_lift,
    build_benchmark_sdp,
    build_lfr_sdp,
    lfr_truth_lift,
)
from locbox.sdp import (
    SdpProblem,
    SdpStatus,
    clear_solver_cache,
    constraint_residuals,
    solve,
    verify_solution,
    write_sdpa,
)


def fixed_scalar_problem():
    return SdpProblem(n=1, objective=np.array([[1.0]]))


def correlation_problem():
    # maximize X01 + X10 with unit diagonal; the PSD cone caps it at 2.
    obj = np.array([[0.0, 1.0], [1.0, 0.0]])
    eq = ((np.diag([1.0, 0.0]), 1.0),)
    return SdpProblem(n=2, objective=obj, eq_constraints=eq)


class TestSolveBasics:
    def test_fixed_scalar(self):
        sol = solve(fixed_scalar_problem())
        assert sol.status is SdpStatus.OPTIMAL
        assert sol.value == pytest.approx(1.0, abs=1e-8)

    def test_correlation_bound(self):
        sol = solve(correlation_problem())
        assert sol.status is SdpStatus.OPTIMAL
        assert sol.value == pytest.approx(2.0, abs=1e-7)
        assert verify_solution(correlation_problem(), sol.X, 1e-6)

    def test_determinism(self):
        a = solve(correlation_problem())
        clear_solver_cache()
        b = solve(correlation_problem())
        assert abs(a.value - b.value) <= 1e-7

    def test_objective_scaling_covariance(self):
        base = correlation_problem()
        scaled = SdpProblem(
            n=2, objective=3.7 * base.objective, eq_constraints=base.eq_constraints
        )
        a = solve(base)
        b = solve(scaled)
        assert b.value == pytest.approx(3.7 * a.value, rel=1e-8)

    def test_infeasible_detected(self):
        prob = SdpProblem(
            n=2,
            objective=np.eye(2),
            eq_constraints=((np.diag([1.0, 0.0]), -1.0),),
        )
        sol = solve(prob)
        assert sol.status is SdpStatus.INFEASIBLE

    def test_unbounded_detected(self):
        prob = SdpProblem(n=2, objective=np.diag([1.0, 0.0]))
        sol = solve(prob)
        assert sol.status is SdpStatus.UNBOUNDED

    def test_psd_equality_forces_face(self):
        # Tr(e0 e0' X) = 0 with X >> 0 pins the whole first row to zero,
        # so the off-diagonal objective cannot exceed 0.
        prob = SdpProblem(
            n=2,
            objective=np.array([[0.0, 1.0], [1.0, 0.0]]),
            eq_constraints=((np.diag([1.0, 0.0]), 0.0),),
        )
        sol = solve(prob)
        assert sol.status is SdpStatus.OPTIMAL
        assert sol.value == pytest.approx(0.0, abs=1e-8)
        assert abs(sol.X[0, 1]) <= 1e-8

    def test_verify_rejects_violations(self):
        prob = correlation_problem()
        bad = np.array([[1.0, 5.0], [5.0, 1.0]])
        assert not verify_solution(prob, bad, 1e-6)


def _parse_sdpa(path):
    lines = [
        ln
        for ln in open(path).read().splitlines()
        if ln.strip() and not ln.startswith(('"', "*"))
    ]
    m = int(lines[0])
    nblocks = int(lines[1])
    sizes = [int(v) for v in lines[2].split()]
    c = [float(v) for v in lines[3].split()]
    mats = {}
    for ln in lines[4:]:
        mat, blk, i, j, val = ln.split()
        mats.setdefault(int(mat), []).append(
            (int(blk), int(i) - 1, int(j) - 1, float(val))
        )
    return m, nblocks, sizes, c, mats


def _block_trace(entries, blocks):
    total = 0.0
    for blk, i, j, val in entries:
        X = blocks[blk - 1]
        total += val * X[i, j]
        if i != j:
            total += val * X[j, i]
    return total


class TestSdpaDump:
    def test_benchmark_dump_consistent_with_truth(self, rng, tmp_path):
        draw = gen_instance(0.3, m=3, d=2, rng=rng, num_measurements=1)
        inst = draw.instance(0)
        s = np.array([1.0, 0.0])
        prob = build_benchmark_sdp(inst, s)
        path = tmp_path / "bench.dat-s"
        write_sdpa(prob, str(path))
        m, nblocks, sizes, c, mats = _parse_sdpa(path)
        assert sizes[0] == prob.n
        assert sizes[-1] == -len(prob.ineq_constraints)

        X = benchmark_truth_lift(inst, draw.x_star, draw.u_samples[0])
        slack = np.diag([np.trace(B @ X) for B in prob.ineq_constraints])
        blocks = [X, slack]
        assert _block_trace(mats[0], blocks) == pytest.approx(
            float(s @ draw.x_star), abs=1e-9
        )
        for i in range(1, m + 1):
            assert _block_trace(mats[i], blocks) == pytest.approx(c[i - 1], abs=1e-7)

    def test_lfr_dump_has_lmi_block_and_matches_truth(self, rng, tmp_path):
        draw = gen_instance(0.4, m=2, d=2, rng=rng, num_measurements=1)
        inst = draw.instance(0)
        prob = build_lfr_sdp(inst, np.array([0.0, 1.0]))
        path = tmp_path / "lfr.dat-s"
        write_sdpa(prob, str(path))
        m, nblocks, sizes, c, mats = _parse_sdpa(path)
        assert sizes[1] == 2 * inst.num_anchors

        X = lfr_truth_lift(inst, draw.x_star, draw.u_samples[0])
        Z = prob.lmi.value(X)
        slack = np.diag([np.trace(B @ X) for B in prob.ineq_constraints])
        blocks = [X, Z, slack]
        for i in range(1, m + 1):
            assert _block_trace(mats[i], blocks) == pytest.approx(c[i - 1], abs=1e-7)


class TestResiduals:
    def test_truth_lift_residual_report(self, rng):
        draw = gen_instance(0.5, m=2, d=2, rng=rng, num_measurements=1)
        inst = draw.instance(0)
        prob = build_benchmark_sdp(inst, np.array([1.0, 0.0]))
        X = benchmark_truth_lift(inst, draw.x_star, draw.u_samples[0])
        r = constraint_residuals(prob, X)
        assert r["psd_min_eig"] >= -1e-12
        assert np.abs(r["eq_resid"]).max() <= 1e-8
        assert r["ineq_vals"].min() >= -1e-8
