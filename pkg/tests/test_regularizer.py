"""Hessian field, Schatten norms, dual projection, adjoint, and prox contracts."""

import numpy as np
import pytest

from rdspline.grid import GridSpec, ScalarField, constant_field, extend_index
from rdspline.regularizer import (
    HessianField,
    dual_order,
    hessian_adjoint,
    hessian_field,
    hessian_inner,
    hessian_norm_map,
    project_dual_ball,
    prox,
    regularizer_value,
    schatten_norm,
    sym_pairs,
)


def periodic_grid(shape, steps=None):
    steps = steps or tuple(1.0 for _ in shape)
    return GridSpec(shape, steps, ("periodic",) * len(shape))


def dense_hessian_oracle_deg1(values, grid):
    """Explicit stencil sums with index folding (independent of the conv path)."""
    n1, n2 = grid.shape
    out = np.zeros(grid.shape + (2, 2))

    def get(i, j):
        si, ok1 = extend_index(np.array(i), n1, grid.bcs[0])
        sj, ok2 = extend_index(np.array(j), n2, grid.bcs[1])
        if not (ok1 and ok2):
            return 0.0
        return values[int(si), int(sj)]

    mu1, mu2 = grid.steps
    for i in range(n1):
        for j in range(n2):
            out[i, j, 0, 0] = (get(i + 1, j) - 2 * get(i, j) + get(i - 1, j)) / mu1**2
            out[i, j, 1, 1] = (get(i, j + 1) - 2 * get(i, j) + get(i, j - 1)) / mu2**2
            mixed = (get(i + 1, j + 1) - get(i + 1, j - 1)
                     - get(i - 1, j + 1) + get(i - 1, j - 1)) / (4 * mu1 * mu2)
            out[i, j, 0, 1] = out[i, j, 1, 0] = mixed
    return out


class TestHessianField:
    def test_constant_log_spline_has_zero_hessian(self):
        g = periodic_grid((6, 6))
        h = hessian_field(constant_field(g, 4.2), 1)
        np.testing.assert_array_equal(h.components, 0.0)

    def test_quadratic_interior_curvature(self):
        g = GridSpec((9, 9), (0.5, 1.0), ("zeropad", "zeropad"))
        m1 = np.arange(9, dtype=float)
        c = ScalarField(g, np.broadcast_to(m1[:, None] ** 2, (9, 9)).copy())
        h = hessian_field(c, 1)
        mats = h.as_matrices()
        np.testing.assert_allclose(mats[3:6, 3:6, 0, 0], 2.0 / 0.5**2, atol=1e-12)
        np.testing.assert_allclose(mats[3:6, 3:6, 0, 1], 0.0, atol=1e-12)

    @pytest.mark.parametrize("bc", ["periodic", "zeropad", "mirror"])
    def test_degree1_matches_stencil_oracle(self, bc):
        rng = np.random.default_rng(60)
        g = GridSpec((6, 6), (0.5, 0.25), (bc, bc))
        c = ScalarField(g, rng.standard_normal(g.shape))
        h = hessian_field(c, 1).as_matrices()
        oracle = dense_hessian_oracle_deg1(c.values, g)
        np.testing.assert_allclose(h, oracle, atol=1e-12)

    def test_degree0_rejected(self):
        g = periodic_grid((5, 5))
        with pytest.raises(ValueError, match="piecewise-constant"):
            hessian_field(constant_field(g, 1.0), 0)

    def test_pair_count(self):
        g = periodic_grid((4, 4, 4))
        assert len(sym_pairs(3)) == 6
        h = hessian_field(constant_field(g, 0.0), 1)
        assert h.components.shape == (4, 4, 4, 6)


class TestSchattenNorm:
    def test_diagonal_nuclear(self):
        m = np.diag([3.0, -2.0])
        assert schatten_norm(m, 1) == pytest.approx(5.0)
        assert schatten_norm(m, np.inf) == pytest.approx(3.0)
        assert schatten_norm(m, 2) == pytest.approx(np.sqrt(13.0))

    def test_zero_matrix(self):
        for p in (1, 2, np.inf):
            assert schatten_norm(np.zeros((3, 3)), p) == 0.0

    def test_random_3x3_against_eigensolver(self):
        rng = np.random.default_rng(61)
        a = rng.standard_normal((40, 3, 3))
        a = (a + np.swapaxes(a, -1, -2)) / 2
        lam = np.abs(np.linalg.eigvalsh(a))
        np.testing.assert_allclose(schatten_norm(a, 1), lam.sum(-1), atol=1e-10)
        np.testing.assert_allclose(schatten_norm(a, np.inf), lam.max(-1), atol=1e-10)

    def test_rotation_invariance(self):
        rng = np.random.default_rng(62)
        for _ in range(20):
            m = rng.standard_normal((2, 2))
            m = (m + m.T) / 2
            theta = rng.uniform(0, 2 * np.pi)
            q = np.array([[np.cos(theta), -np.sin(theta)], [np.sin(theta), np.cos(theta)]])
            for p in (1, 2, np.inf):
                assert schatten_norm(q.T @ m @ q, p) == pytest.approx(
                    schatten_norm(m, p), abs=1e-10)


class TestRegularizerValue:
    def test_constant_is_zero(self):
        g = periodic_grid((8, 8))
        assert regularizer_value(constant_field(g, -3.0), 1) == 0.0

    def test_triangle_inequality(self):
        rng = np.random.default_rng(63)
        g = periodic_grid((6, 6))
        for _ in range(10):
            a = ScalarField(g, rng.standard_normal(g.shape))
            b = ScalarField(g, rng.standard_normal(g.shape))
            ab = ScalarField(g, a.values + b.values)
            assert regularizer_value(ab, 1) <= (
                regularizer_value(a, 1) + regularizer_value(b, 1) + 1e-10)

    def test_riemann_sum_stable_under_refinement(self):
        # The same smooth log-density sampled on a 2x finer grid gives nearly
        # the same penalty (the cell-volume factor keeps the scale fixed).
        gc = GridSpec((16, 16), (1 / 16, 1 / 16), ("periodic", "periodic"))
        gf = GridSpec((32, 32), (1 / 32, 1 / 32), ("periodic", "periodic"))
        def logdens(g):
            xx, yy = g.meshgrid_world()
            return np.cos(2 * np.pi * xx) + 0.5 * np.sin(2 * np.pi * yy)
        rc = regularizer_value(ScalarField(gc, logdens(gc)), 1)
        rf = regularizer_value(ScalarField(gf, logdens(gf)), 1)
        assert rf == pytest.approx(rc, rel=0.05)


class TestHessianAdjoint:
    @pytest.mark.parametrize("d,shape", [(2, (6, 5)), (3, (4, 5, 4))])
    @pytest.mark.parametrize("degree", [1, 3])
    def test_inner_product_identity_periodic(self, d, shape, degree):
        rng = np.random.default_rng(64)
        g = periodic_grid(shape, tuple(0.5 for _ in shape))
        c = ScalarField(g, rng.standard_normal(shape))
        h = hessian_field(c, degree)
        a = HessianField(g, rng.standard_normal(h.components.shape))
        lhs = hessian_inner(h, a)
        rhs = float(np.sum(c.values * hessian_adjoint(g, degree, a.components).values))
        scale = np.linalg.norm(c.values) * np.linalg.norm(a.components)
        assert abs(lhs - rhs) <= 1e-11 * scale

    @pytest.mark.parametrize("bc", ["zeropad", "mirror"])
    def test_inner_product_identity_nonperiodic(self, bc):
        rng = np.random.default_rng(65)
        g = GridSpec((6, 7), (0.5, 0.25), (bc, bc))
        c = ScalarField(g, rng.standard_normal(g.shape))
        h = hessian_field(c, 1)
        a = HessianField(g, rng.standard_normal(h.components.shape))
        lhs = hessian_inner(h, a)
        rhs = float(np.sum(c.values * hessian_adjoint(g, 1, a.components).values))
        scale = np.linalg.norm(c.values) * np.linalg.norm(a.components)
        assert abs(lhs - rhs) <= 1e-11 * scale

    def test_zero_maps_to_zero(self):
        g = periodic_grid((5, 5))
        comps = np.zeros(g.shape + (3,))
        out = hessian_adjoint(g, 1, comps)
        np.testing.assert_array_equal(out.values, 0.0)

    def test_normal_operator_against_dense(self):
        rng = np.random.default_rng(66)
        g = periodic_grid((5, 5))
        npts = g.num_points
        dense = np.zeros((npts, npts))
        for j in range(npts):
            e = np.zeros(npts)
            e[j] = 1.0
            h = hessian_field(ScalarField(g, e.reshape(g.shape)), 1)
            dense[:, j] = hessian_adjoint(g, 1, h.components).values.ravel()
        c = rng.standard_normal(npts)
        h = hessian_field(ScalarField(g, c.reshape(g.shape)), 1)
        out = hessian_adjoint(g, 1, h.components).values.ravel()
        np.testing.assert_allclose(out, dense @ c, atol=1e-10)
        np.testing.assert_allclose(dense, dense.T, atol=1e-12)


class TestProjectDualBall:
    def test_inside_ball_unchanged(self):
        m = np.array([[[0.3, 0.1], [0.1, -0.2]]])
        np.testing.assert_allclose(project_dual_ball(m, np.inf), m, atol=1e-14)

    def test_clamp(self):
        m = np.array([[[3.0, 0.0], [0.0, -2.0]]])
        np.testing.assert_allclose(project_dual_ball(m, np.inf),
                                   [[[1.0, 0.0], [0.0, -1.0]]], atol=1e-14)

    @pytest.mark.parametrize("q", [1, 2, np.inf])
    def test_idempotent(self, q):
        rng = np.random.default_rng(67)
        a = rng.standard_normal((200, 2, 2)) * 2
        a = (a + np.swapaxes(a, -1, -2)) / 2
        p1 = project_dual_ball(a, q)
        p2 = project_dual_ball(p1, q)
        np.testing.assert_allclose(p1, p2, atol=1e-12)

    @pytest.mark.parametrize("q", [1, 2, np.inf])
    @pytest.mark.parametrize("d", [2, 3])
    def test_feasible_and_eigvecs_kept(self, q, d):
        rng = np.random.default_rng(68)
        a = rng.standard_normal((100, d, d)) * 3
        a = (a + np.swapaxes(a, -1, -2)) / 2
        proj = project_dual_ball(a, q)
        lam = np.linalg.eigvalsh(proj)
        norms = {1: np.abs(lam).sum(-1), 2: np.sqrt((lam**2).sum(-1)),
                 np.inf: np.abs(lam).max(-1)}[q]
        assert np.all(norms <= 1 + 1e-10)
        # Commutation with the original matrices: eigenvectors preserved.
        comm = proj @ a - a @ proj
        np.testing.assert_allclose(comm, 0.0, atol=1e-10)

    def test_projection_is_nearest_point(self):
        rng = np.random.default_rng(69)
        a = rng.standard_normal((50, 2, 2)) * 2
        a = (a + np.swapaxes(a, -1, -2)) / 2
        proj = project_dual_ball(a, np.inf)
        for _ in range(50):
            z = rng.standard_normal((50, 2, 2))
            z = (z + np.swapaxes(z, -1, -2)) / 2
            lam = np.linalg.eigvalsh(z)
            feas = np.abs(lam).max(-1) <= 1.0
            if not feas.any():
                continue
            da = np.sum((a - proj) ** 2, axis=(-2, -1))
            dz = np.sum((a - z) ** 2, axis=(-2, -1))
            assert np.all(da[feas] <= dz[feas] + 1e-10)

    def test_dual_order(self):
        assert dual_order(1) == np.inf
        assert dual_order(2) == 2
        assert dual_order(np.inf) == 1


class TestProx:
    def test_tiny_tau_is_identity(self):
        rng = np.random.default_rng(70)
        g = periodic_grid((5, 5))
        c = ScalarField(g, rng.standard_normal(g.shape))
        out = prox(c, 1e-12, 1, 1, inner_iters=300, inner_tol=0.0)
        np.testing.assert_allclose(out.values, c.values, atol=1e-9)

    def test_constant_input_fixed_point(self):
        g = periodic_grid((5, 5))
        c = constant_field(g, -2.0)
        out = prox(c, 0.8, 1, 1, inner_iters=100, inner_tol=0.0)
        np.testing.assert_array_equal(out.values, c.values)

    def test_matches_long_run_reference_and_local_optimality(self):
        rng = np.random.default_rng(71)
        g = periodic_grid((5, 5))
        c = ScalarField(g, rng.standard_normal(g.shape))
        ref = prox(c, 0.5, 1, 1, inner_iters=100_000, inner_tol=0.0)
        out = prox(c, 0.5, 1, 1, inner_iters=30_000, inner_tol=0.0)
        assert np.abs(ref.values - out.values).max() <= 1e-6

        def objective(v):
            field = ScalarField(g, v)
            return 0.5 * np.sum((v - c.values) ** 2) + 0.5 * regularizer_value(field, 1, 1)

        base = objective(ref.values)
        for _ in range(200):
            d = rng.standard_normal(g.shape)
            d *= 1e-4 / np.linalg.norm(d)
            assert objective(ref.values + d) >= base - 1e-12

    def test_firmly_nonexpansive(self):
        rng = np.random.default_rng(72)
        g = periodic_grid((5, 5))
        for _ in range(20):
            a = ScalarField(g, rng.standard_normal(g.shape))
            b = ScalarField(g, rng.standard_normal(g.shape))
            pa = prox(a, 0.7, 1, 1, inner_iters=20_000, inner_tol=1e-10)
            pb = prox(b, 0.7, 1, 1, inner_iters=20_000, inner_tol=1e-10)
            assert (np.linalg.norm(pa.values - pb.values)
                    <= np.linalg.norm(a.values - b.values) + 1e-9)

    @pytest.mark.parametrize("p", [1, 2, np.inf])
    def test_penalty_reduces_with_prox(self, p):
        rng = np.random.default_rng(73)
        g = periodic_grid((6, 6))
        c = ScalarField(g, rng.standard_normal(g.shape))
        out = prox(c, 1.0, p, 1, inner_iters=2000, inner_tol=0.0)
        assert regularizer_value(out, 1, p) < regularizer_value(c, 1, p)

    def test_plain_ascent_agrees(self):
        rng = np.random.default_rng(74)
        g = periodic_grid((5, 5))
        c = ScalarField(g, rng.standard_normal(g.shape))
        fast = prox(c, 0.4, 1, 1, inner_iters=30_000, inner_tol=0.0)
        plain = prox(c, 0.4, 1, 1, inner_iters=30_000, inner_tol=0.0, accelerate=False)
        np.testing.assert_allclose(fast.values, plain.values, atol=1e-5)

    def test_knot_activity_map(self):
        rng = np.random.default_rng(75)
        g = periodic_grid((6, 6))
        c = ScalarField(g, rng.standard_normal(g.shape))
        norms = hessian_norm_map(c, 1, 1)
        assert norms.values.shape == g.shape
        assert np.all(norms.values >= 0)
