"""Lattice, boundary-condition, and separable-convolution contracts."""

import numpy as np
import pytest

from rdspline.grid import (
    BoundaryCondition,
    GridSpec,
    ScalarField,
    constant_field,
    downsample,
    extend_index,
    fine_grid,
    grid_from_bounds,
    separable_convolve,
    separable_convolve_adjoint,
    upsample_zeros,
)

BCS = ["periodic", "zeropad", "mirror"]


def dense_convolve_2d(values, k1, k2, bc1, bc2):
    """Brute-force 2-D convolution with explicit index extension (oracle)."""
    n1, n2 = values.shape
    r1, r2 = len(k1) // 2, len(k2) // 2
    out = np.zeros_like(values)
    for i in range(n1):
        for j in range(n2):
            acc = 0.0
            for a in range(-r1, r1 + 1):
                for b in range(-r2, r2 + 1):
                    src1, ok1 = extend_index(np.array(i - a), n1, BoundaryCondition.parse(bc1))
                    src2, ok2 = extend_index(np.array(j - b), n2, BoundaryCondition.parse(bc2))
                    if ok1 and ok2:
                        acc += k1[a + r1] * k2[b + r2] * values[int(src1), int(src2)]
            out[i, j] = acc
    return out


class TestGridSpec:
    def test_point_count_and_volume(self):
        g = GridSpec((4, 6), (0.5, 0.25), ("periodic", "zeropad"))
        assert g.num_points == 24
        assert g.cell_volume == pytest.approx(0.125)
        assert g.axis_extent(0) == pytest.approx(2.0)  # periodic: N * step
        assert g.axis_extent(1) == pytest.approx(1.25)  # closed: (N-1) * step

    def test_world_grid_roundtrip_exact_dyadic(self):
        g = GridSpec((8, 8), (0.25, 0.5), ("periodic", "periodic"), origin=(1.0, -2.0))
        m = np.array([[0, 0], [3, 7], [7, 1]], dtype=float)
        back = g.world_to_grid(g.grid_to_world(m))
        assert np.array_equal(back, m)

    def test_world_grid_roundtrip_general(self):
        g = GridSpec((10, 5), (0.1, 0.3), ("zeropad", "mirror"), origin=(0.05, 0.7))
        m = np.stack(np.meshgrid(np.arange(10), np.arange(5), indexing="ij"), -1).reshape(-1, 2)
        back = g.world_to_grid(g.grid_to_world(m.astype(float)))
        np.testing.assert_allclose(back, m, atol=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            GridSpec((1, 4), (1.0, 1.0), ("periodic", "periodic"))
        with pytest.raises(ValueError):
            GridSpec((4, 4), (0.0, 1.0), ("periodic", "periodic"))
        with pytest.raises(ValueError):
            ScalarField(GridSpec((3, 3), (1, 1), ("periodic", "periodic")), np.zeros((3, 4)))
        with pytest.raises(ValueError):
            ScalarField(GridSpec((3, 3), (1, 1), ("periodic", "periodic")),
                        np.full((3, 3), np.nan))

    def test_grid_from_bounds(self):
        g = grid_from_bounds((44, 44), ((0, 1), (0, 1)), ("periodic", "periodic"))
        assert g.steps[0] == pytest.approx(1 / 44)
        g2 = grid_from_bounds((45, 45), ((0, 1), (0, 1)), ("zeropad", "zeropad"))
        assert g2.steps[0] == pytest.approx(1 / 44)
        assert g2.axis_coords(0)[-1] == pytest.approx(1.0)


class TestBoundaryExtension:
    def test_periodic_wrap(self):
        src, ok = extend_index(np.array([-1, 0, 5, 6]), 5, BoundaryCondition.PERIODIC)
        assert list(src) == [4, 0, 0, 1]
        assert ok.all()

    def test_mirror_whole_sample(self):
        src, _ = extend_index(np.array([-2, -1, 0, 4, 5, 6]), 5, BoundaryCondition.MIRROR)
        assert list(src) == [2, 1, 0, 4, 3, 2]

    def test_zeropad_mask(self):
        src, ok = extend_index(np.array([-1, 2, 7]), 5, BoundaryCondition.ZEROPAD)
        assert list(ok) == [False, True, False]


class TestSeparableConvolve:
    def test_second_difference_of_constant_is_zero(self):
        g = GridSpec((8, 8), (1.0, 1.0), ("periodic", "periodic"))
        out = separable_convolve(constant_field(g, 1.0),
                                 [np.array([1.0, -2.0, 1.0]), np.array([1.0])])
        assert np.abs(out.values).max() == 0.0

    def test_impulse_response(self):
        g = GridSpec((9,), (1.0,), ("periodic",))
        v = np.zeros(9)
        v[4] = 1.0
        out = separable_convolve(ScalarField(g, v), [np.array([1.0, -2.0, 1.0])])
        expected = np.zeros(9)
        expected[3], expected[4], expected[5] = 1.0, -2.0, 1.0
        np.testing.assert_array_equal(out.values, expected)

    @pytest.mark.parametrize("bc1", BCS)
    @pytest.mark.parametrize("bc2", BCS)
    def test_matches_dense_2d_oracle(self, bc1, bc2):
        rng = np.random.default_rng(7)
        g = GridSpec((6, 6), (1.0, 1.0), (bc1, bc2))
        vals = rng.standard_normal(g.shape)
        k1 = rng.standard_normal(5)
        k2 = rng.standard_normal(3)
        out = separable_convolve(ScalarField(g, vals), [k1, k2])
        oracle = dense_convolve_2d(vals, k1, k2, bc1, bc2)
        np.testing.assert_allclose(out.values, oracle, atol=1e-12)

    def test_linearity(self):
        rng = np.random.default_rng(8)
        g = GridSpec((7, 5), (1.0, 1.0), ("periodic", "mirror"))
        a, b = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        ks = [rng.standard_normal(3), rng.standard_normal(3)]
        lhs = separable_convolve(ScalarField(g, 2.0 * a + 3.0 * b), ks).values
        rhs = (2.0 * separable_convolve(ScalarField(g, a), ks).values
               + 3.0 * separable_convolve(ScalarField(g, b), ks).values)
        np.testing.assert_allclose(lhs, rhs, atol=1e-12)

    def test_periodic_shift_equivariance(self):
        rng = np.random.default_rng(9)
        g = GridSpec((8, 8), (1.0, 1.0), ("periodic", "periodic"))
        vals = rng.standard_normal(g.shape)
        ks = [rng.standard_normal(3), rng.standard_normal(5)]
        shifted = np.roll(vals, (2, 3), axis=(0, 1))
        out1 = separable_convolve(ScalarField(g, shifted), ks).values
        out2 = np.roll(separable_convolve(ScalarField(g, vals), ks).values, (2, 3), axis=(0, 1))
        np.testing.assert_allclose(out1, out2, atol=1e-12)

    def test_kernel_validation(self):
        g = GridSpec((4,), (1.0,), ("periodic",))
        f = constant_field(g, 1.0)
        with pytest.raises(ValueError, match="odd length"):
            separable_convolve(f, [np.array([1.0, 1.0])])
        with pytest.raises(ValueError, match="exceeds period"):
            separable_convolve(f, [np.ones(11)])

    def test_symmetric_periodic_self_adjoint(self):
        rng = np.random.default_rng(10)
        g = GridSpec((6, 6), (1.0, 1.0), ("periodic", "periodic"))
        a, b = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        ks = [np.array([1.0, -2.0, 1.0]), np.array([0.25, 0.5, 0.25])]
        ca = separable_convolve(ScalarField(g, a), ks).values
        cb = separable_convolve(ScalarField(g, b), ks).values
        assert np.sum(ca * b) == pytest.approx(np.sum(a * cb), abs=1e-12)

    @pytest.mark.parametrize("bc", BCS)
    def test_adjoint_inner_product(self, bc):
        rng = np.random.default_rng(11)
        g = GridSpec((6, 5), (1.0, 1.0), (bc, bc))
        a, b = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
        ks = [rng.standard_normal(5), rng.standard_normal(3)]
        conv = separable_convolve(ScalarField(g, a), ks).values
        adj = separable_convolve_adjoint(ScalarField(g, b), ks).values
        assert np.sum(conv * b) == pytest.approx(np.sum(a * adj), abs=1e-11)


class TestUpsampleAndFineGrid:
    def test_identity_at_scale_one(self):
        g = GridSpec((4, 4), (1.0, 1.0), ("periodic", "periodic"))
        f = ScalarField(g, np.arange(16.0).reshape(4, 4))
        up = upsample_zeros(f, 1)
        np.testing.assert_array_equal(up.values, f.values)

    def test_periodic_1d_definition(self):
        g = GridSpec((2,), (1.0,), ("periodic",))
        up = upsample_zeros(ScalarField(g, np.array([3.0, 5.0])), 2)
        np.testing.assert_array_equal(up.values, [3.0, 0.0, 5.0, 0.0])

    @pytest.mark.parametrize("bc", BCS)
    @pytest.mark.parametrize("s", [1, 2, 3])
    def test_sum_preserved(self, bc, s):
        rng = np.random.default_rng(12)
        g = GridSpec((5, 4), (1.0, 1.0), (bc, bc))
        f = ScalarField(g, rng.standard_normal(g.shape))
        up = upsample_zeros(f, s)
        assert up.values.sum() == pytest.approx(f.values.sum(), abs=1e-12)

    def test_fine_grid_sizes_and_steps(self):
        g = GridSpec((10,), (0.5,), ("periodic",))
        fg = fine_grid(g, 4)
        assert fg.sizes == (40,)
        assert fg.steps[0] == pytest.approx(0.125)
        gz = GridSpec((10,), (0.5,), ("zeropad",))
        assert fine_grid(gz, 4).sizes == (37,)

    def test_fine_grid_alignment(self):
        g = GridSpec((6, 6), (0.3, 0.7), ("periodic", "zeropad"), origin=(0.1, -0.4))
        fg = fine_grid(g, 3)
        m = np.array([[2, 4], [0, 0], [5, 5]], dtype=float)
        np.testing.assert_allclose(fg.grid_to_world(3 * m), g.grid_to_world(m), atol=1e-12)

    def test_downsample_inverts_upsample(self):
        rng = np.random.default_rng(13)
        g = GridSpec((5, 6), (1.0, 1.0), ("zeropad", "periodic"))
        f = ScalarField(g, rng.standard_normal(g.shape))
        up = upsample_zeros(f, 3)
        back = downsample(up, g, 3)
        np.testing.assert_array_equal(back.values, f.values)
