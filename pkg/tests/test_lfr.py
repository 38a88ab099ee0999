import numpy as np
import pytest
import scipy.linalg

from locbox.lfr import (
    Lfr,
    NearSingularError,
    NoWitnessError,
    build_phi_lfr,
    flatten_map,
    lfr_compose_linear,
    lfr_eval,
    lfr_stack,
    unflatten_witness,
)
from locbox.model import DimensionMismatchError

from conftest import random_instance, random_spd


def rational_pair_lfr():
    """Order-3 representation of u -> (1 - u^2, 4 / (2 + u))."""
    C = np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, -0.5]])
    B = np.array([[-1.0, 0.0, 0.0], [0.0, 0.0, -1.0]])
    d = np.array([0.0, 1.0, 1.0])
    a = np.array([1.0, 2.0])
    return Lfr(p=3, C=C, d=d, B=B, a=a, u_rows=1, u_cols=1)


def random_lfr(rng, p, u_rows, u_cols, n_out):
    # Cap |C| so I - C (I x U) stays comfortably invertible for |U| <= 1.
    C = rng.standard_normal((p * u_cols, p * u_rows))
    C *= 0.2 / max(np.linalg.norm(C, 2), 1e-12)
    return Lfr(
        p=p,
        C=C,
        d=rng.standard_normal(p * u_cols),
        B=rng.standard_normal((n_out, p * u_rows)),
        a=rng.standard_normal(n_out),
        u_rows=u_rows,
        u_cols=u_cols,
    )


def bounded_uncertainty(rng, rows, cols):
    U = rng.standard_normal((rows, cols))
    return U / max(np.linalg.norm(U, 2), 1.0)


def residual_block_lfr(y_m: float) -> Lfr:
    """Elementary scalar block mapping delta -> y_m - delta."""
    return Lfr(
        p=2,
        C=np.array([[0.0, 1.0], [0.0, 0.0]]),
        d=np.array([0.0, 1.0]),
        B=np.array([[0.0, -1.0]]),
        a=np.array([y_m]),
        u_rows=1,
        u_cols=1,
    )


def quadratic_block_lfr(y_m: float, const: float) -> Lfr:
    """Elementary scalar block mapping delta -> delta^2 - 2 y_m delta + const."""
    return Lfr(
        p=2,
        C=np.array([[0.0, 1.0], [0.0, 0.0]]),
        d=np.array([0.0, 1.0]),
        B=np.array([[1.0, -2.0 * y_m]]),
        a=np.array([const]),
        u_rows=1,
        u_cols=1,
    )


def direct_consistency_map(instance, x, z, U):
    """Independent evaluation of the 2M-output measurement map."""
    m = instance.num_anchors
    u = U[:, 0]
    out = np.empty(2 * m)
    for mm in range(m):
        out[mm] = instance.y[mm] - u[mm]
        out[m + mm] = (
            instance.y[mm] ** 2
            - instance.anchors[mm] @ instance.anchors[mm]
            + 2.0 * instance.anchors[mm] @ x
            - z
            - 2.0 * instance.y[mm] * u[mm]
            + u[mm] ** 2
        )
    return out


class TestEval:
    def test_rational_pair_at_zero(self):
        np.testing.assert_allclose(
            lfr_eval(rational_pair_lfr(), np.array([[0.0]])), [1.0, 2.0], atol=1e-14
        )

    def test_rational_pair_at_one(self):
        np.testing.assert_allclose(
            lfr_eval(rational_pair_lfr(), np.array([[1.0]])), [0.0, 4.0 / 3.0],
            atol=1e-14,
        )

    @pytest.mark.parametrize("u", [-1.0, -0.5, 0.0, 0.5, 1.0])
    def test_rational_pair_closed_form(self, u):
        got = lfr_eval(rational_pair_lfr(), np.array([[u]]))
        np.testing.assert_allclose(got, [1 - u**2, 4 / (2 + u)], rtol=0, atol=1e-12)

    def test_singular_pair_raises(self):
        # u = -2 is the pole of 4 / (2 + u).
        with pytest.raises(NearSingularError):
            lfr_eval(rational_pair_lfr(), np.array([[-2.0]]))

    def test_wrong_u_shape_rejected(self):
        with pytest.raises(DimensionMismatchError):
            lfr_eval(rational_pair_lfr(), np.zeros((2, 2)))


class TestStack:
    def test_single_stack_is_identity(self, rng):
        f = random_lfr(rng, p=2, u_rows=2, u_cols=2, n_out=3)
        g = lfr_stack([f])
        assert g.p == f.p
        np.testing.assert_array_equal(g.C, f.C)
        np.testing.assert_array_equal(g.B, f.B)

    def test_shared_header_keeps_p(self, rng):
        f = rational_pair_lfr()
        g = lfr_stack([f, f])
        assert g.p == 3
        np.testing.assert_allclose(
            lfr_eval(g, np.array([[0.0]])), [1.0, 2.0, 1.0, 2.0], atol=1e-14
        )

    def test_distinct_headers_concatenate_outputs(self, rng):
        f1 = random_lfr(rng, p=2, u_rows=2, u_cols=3, n_out=2)
        f2 = random_lfr(rng, p=3, u_rows=2, u_cols=3, n_out=4)
        g = lfr_stack([f1, f2])
        assert g.p == 5
        for _ in range(50):
            U = bounded_uncertainty(rng, 2, 3)
            np.testing.assert_allclose(
                lfr_eval(g, U),
                np.concatenate([lfr_eval(f1, U), lfr_eval(f2, U)]),
                rtol=0,
                atol=1e-12,
            )

    def test_incompatible_shapes_rejected(self, rng):
        f1 = random_lfr(rng, p=2, u_rows=2, u_cols=2, n_out=2)
        f2 = random_lfr(rng, p=2, u_rows=3, u_cols=2, n_out=2)
        with pytest.raises(DimensionMismatchError):
            lfr_stack([f1, f2])


class TestComposeLinear:
    def test_identity_composition_is_identity(self, rng):
        f = random_lfr(rng, p=2, u_rows=3, u_cols=2, n_out=2)
        g = lfr_compose_linear(f, np.eye(3), np.eye(2))
        np.testing.assert_array_equal(g.C, f.C)
        np.testing.assert_array_equal(g.d, f.d)
        np.testing.assert_array_equal(g.B, f.B)
        np.testing.assert_array_equal(g.a, f.a)

    def test_selector_composition_reproduces_residual_row(self, rng):
        # Feeding delta = e_m' U e_1 into the elementary residual block
        # must evaluate to y_m - (U e_1)_m for full matrices U.
        m_total, m_idx, y_m = 4, 2, 1.7
        eye = np.eye(m_total)
        block = residual_block_lfr(y_m)
        composed = lfr_compose_linear(block, eye[m_idx][None, :], eye[:, 0][:, None])
        assert composed.u_rows == m_total and composed.u_cols == m_total
        for _ in range(20):
            U = rng.standard_normal((m_total, m_total))
            np.testing.assert_allclose(
                lfr_eval(composed, U), [y_m - U[m_idx, 0]], atol=1e-13
            )

    def test_evaluation_orders_agree(self, rng):
        f = random_lfr(rng, p=2, u_rows=3, u_cols=2, n_out=3)
        for _ in range(50):
            G = rng.standard_normal((3, 2))
            H = rng.standard_normal((4, 2))
            U = bounded_uncertainty(rng, 2, 4)
            U /= max(np.linalg.norm(G, 2) * np.linalg.norm(H, 2), 1.0)
            composed = lfr_compose_linear(f, G, H)
            np.testing.assert_allclose(
                lfr_eval(composed, U),
                lfr_eval(f, G @ U @ H),
                rtol=0,
                atol=1e-12,
            )


class TestConsistencyLfr:
    def test_single_anchor_blocks(self, rng):
        inst = random_instance(rng, m=1)
        phi = build_phi_lfr(inst)
        np.testing.assert_array_equal(phi.C, [[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_array_equal(phi.d, [0.0, 1.0])
        np.testing.assert_array_equal(phi.B1, [[0.0, -1.0]])
        np.testing.assert_allclose(phi.a1, inst.y)

    def test_block_structure_identities(self, rng):
        inst = random_instance(rng, m=3)
        phi = build_phi_lfr(inst)
        m = 3
        J = np.array([[0.0, 1.0], [0.0, 0.0]])
        np.testing.assert_allclose(phi.C, phi.E @ np.kron(np.eye(m), J) @ phi.F)
        np.testing.assert_allclose(
            phi.d, phi.E @ np.kron(np.ones(m), np.array([0.0, 1.0]))
        )
        np.testing.assert_allclose(
            phi.B1, np.kron(np.eye(m), np.array([[0.0, -1.0]])) @ phi.F
        )
        np.testing.assert_allclose(phi.B2, phi.b2_hat @ phi.F)
        np.testing.assert_allclose(
            phi.q_vec, inst.y**2 - np.sum(inst.anchors**2, axis=1)
        )
        assert phi.lfr.p == 2 * m

    def test_matches_direct_map(self, rng):
        # The assembled representation against a plain per-component
        # evaluation of the same map, across sizes and random targets.
        count = 0
        for m in (1, 2, 3, 4):
            for _ in range(50):
                inst = random_instance(rng, m=m)
                x = rng.uniform(-2, 2, size=2)
                z = rng.uniform(-1, 5)
                U = rng.standard_normal((m, m))
                got = lfr_eval(build_phi_lfr(inst).with_target(x, z), U)
                want = direct_consistency_map(inst, x, z, U)
                np.testing.assert_allclose(got, want, rtol=1e-10, atol=1e-12)
                count += 1
        assert count == 200

    def test_stacking_elementary_blocks_reproduces_assembly(self, rng):
        # Build the same representation from elementary per-measurement
        # blocks via compose + stack; the closed-form assembly must match.
        inst = random_instance(rng, m=3)
        m = 3
        eye = np.eye(m)
        phi = build_phi_lfr(inst)
        residual_parts = []
        quadratic_parts = []
        for mm in range(m):
            G, H = eye[mm][None, :], eye[:, 0][:, None]
            residual_parts.append(
                lfr_compose_linear(residual_block_lfr(inst.y[mm]), G, H)
            )
            const = inst.y[mm] ** 2 - inst.anchors[mm] @ inst.anchors[mm]
            quadratic_parts.append(
                lfr_compose_linear(quadratic_block_lfr(inst.y[mm], const), G, H)
            )
        stacked = lfr_stack([lfr_stack(residual_parts), lfr_stack(quadratic_parts)])
        target = phi.with_target(np.zeros(2), 0.0)
        assert stacked.p == target.p
        np.testing.assert_allclose(stacked.C, target.C, atol=1e-14)
        np.testing.assert_allclose(stacked.d, target.d, atol=1e-14)
        np.testing.assert_allclose(stacked.B, target.B, atol=1e-14)
        np.testing.assert_allclose(stacked.a, target.a, atol=1e-14)

    def test_well_posed_for_arbitrary_uncertainty(self, rng):
        inst = random_instance(rng, m=2)
        phi = build_phi_lfr(inst)
        lfr = phi.with_target(np.zeros(2), 0.0)
        for i in range(1000):
            scale = 10.0 ** rng.uniform(-2, 3)
            U = scale * rng.standard_normal((2, 2))
            K = np.kron(np.eye(lfr.p), U)
            A = np.eye(lfr.C.shape[0]) - lfr.C @ K
            w = np.linalg.solve(A, np.array(lfr.d))
            resid = np.linalg.norm(A @ w - lfr.d) / (1 + np.linalg.norm(lfr.d))
            assert resid < 1e-10


class TestFlattening:
    def test_single_anchor_unit_sigma_is_block_difference(self, rng):
        S = rng.standard_normal((4, 4))
        S = S + S.T
        got = flatten_map(S, np.array([[1.0]]))
        np.testing.assert_allclose(got, S[2:, 2:] - S[:2, :2], atol=1e-14)

    def test_zero_maps_to_zero(self):
        assert np.all(flatten_map(np.zeros((16, 16)), np.eye(2)) == 0.0)

    def test_linearity(self, rng):
        sigma = random_spd(2, rng)
        S1 = rng.standard_normal((16, 16))
        S2 = rng.standard_normal((16, 16))
        S1, S2 = S1 + S1.T, S2 + S2.T
        np.testing.assert_allclose(
            flatten_map(2.0 * S1 - 0.5 * S2, sigma),
            2.0 * flatten_map(S1, sigma) - 0.5 * flatten_map(S2, sigma),
            atol=1e-12,
        )

    def test_forward_soundness_on_samples(self, rng):
        # Admissible lifts produce positive semidefinite flattened matrices.
        for _ in range(200):
            m = int(rng.integers(1, 5))
            sigma = random_spd(m, rng)
            U = admissible_uncertainty(sigma, rng)
            w = rng.standard_normal(2 * m * m)
            v = np.kron(np.eye(2 * m), U) @ w
            vw = np.concatenate([v, w])
            out = flatten_map(np.outer(vw, vw), sigma)
            assert np.linalg.eigvalsh(out)[0] >= -1e-9

    def test_gram_identity_on_outer_products(self, rng):
        # flatten of the outer product equals W' W - V' sigma^-1 V for the
        # block-column reshapes of v and w.
        m = 3
        sigma = random_spd(m, rng)
        v = rng.standard_normal(2 * m * m)
        w = rng.standard_normal(2 * m * m)
        vw = np.concatenate([v, w])
        V = v.reshape(2 * m, m).T
        W = w.reshape(2 * m, m).T
        expected = W.T @ W - V.T @ np.linalg.solve(sigma, V)
        np.testing.assert_allclose(
            flatten_map(np.outer(vw, vw), sigma), expected, atol=1e-10
        )


def admissible_uncertainty(sigma, rng, margin=1.0):
    """Random U with whitened spectral norm at most `margin`."""
    m = sigma.shape[0]
    w, v = np.linalg.eigh(sigma)
    sqrt = (v * np.sqrt(w)) @ v.T
    Z = rng.standard_normal((m, m))
    Z *= margin * rng.random() / max(np.linalg.norm(Z, 2), 1e-12)
    return sqrt @ Z


class TestWitness:
    def test_zero_v_gives_zero_witness(self, rng):
        m = 2
        sigma = random_spd(m, rng)
        w = rng.standard_normal(2 * m * m)
        U = unflatten_witness(np.zeros(2 * m * m), w, sigma)
        np.testing.assert_allclose(U, np.zeros((m, m)), atol=1e-12)

    def test_round_trip_recovery(self, rng):
        for _ in range(100):
            m = int(rng.integers(1, 5))
            sigma = random_spd(m, rng)
            U = admissible_uncertainty(sigma, rng)
            w = rng.standard_normal(2 * m * m)
            v = np.kron(np.eye(2 * m), U) @ w
            U_hat = unflatten_witness(v, w, sigma)
            np.testing.assert_allclose(
                np.kron(np.eye(2 * m), U_hat) @ w, v, atol=1e-8
            )
            white = np.linalg.norm(
                scipy.linalg.sqrtm(np.linalg.inv(sigma)).real @ U_hat, 2
            )
            assert white <= 1 + 1e-8

    def test_impossible_pair_raises(self, rng):
        m = 2
        sigma = random_spd(m, rng)
        v = rng.standard_normal(2 * m * m)
        with pytest.raises(NoWitnessError):
            unflatten_witness(v, np.zeros(2 * m * m), sigma)
