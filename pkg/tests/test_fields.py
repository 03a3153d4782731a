import numpy as np
import pytest

import mjlsgrid as mj
from mjlsgrid.fields import MatrixField


class TestBuildGrid:
    def test_single_cell(self):
        grid = mj.build_grid([("m", (0.0, 1.0), 1)])
        assert grid.M == 1
        assert grid.weights.tolist() == [1.0]
        assert grid.midpoints.tolist() == [0.5]

    def test_two_components_uniform(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 2), ("2", (0.0, 1.0), 2)])
        assert grid.M == 4
        assert np.allclose(grid.weights, 0.5)

    def test_example_resolution(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 50), ("2", (0.0, 1.0), 50)])
        assert grid.M == 100
        assert np.allclose(grid.weights, 0.02)
        # component weights sum to the interval length exactly
        for ci in range(2):
            assert grid.weights[grid.comp_of == ci].sum() == pytest.approx(1.0, abs=1e-15)

    def test_midpoints_increasing_within_component(self):
        grid = mj.build_grid([("1", (0.0, 2.0), 7), ("2", (-1.0, 1.0), 3)])
        for ci in range(2):
            mids = grid.midpoints[grid.comp_of == ci]
            assert np.all(np.diff(mids) > 0)

    def test_errors(self):
        with pytest.raises(ValueError):
            mj.build_grid([])
        with pytest.raises(ValueError):
            mj.build_grid([("x", (0.0, 1.0), 0)])
        with pytest.raises(ValueError):
            mj.build_grid([("x", (1.0, 1.0), 3)])


class TestKernel:
    def test_identity_chain(self):
        grid = mj.build_grid([("m", (0.0, 1.0), 3)])
        kernel = mj.build_markov_kernel_from_blocks(grid, [[1.0]])
        assert np.allclose(kernel.g, 1.0)
        assert np.allclose(kernel.g @ grid.weights, 1.0)

    def test_two_block_values(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 2), ("2", (0.0, 1.0), 2)])
        kernel = mj.build_markov_kernel_from_blocks(grid, [[0.9767, 0.0233], [0.2389, 0.7611]])
        assert kernel.g[0, 1] == pytest.approx(0.9767)
        assert kernel.g[0, 2] == pytest.approx(0.0233)
        assert kernel.g[3, 0] == pytest.approx(0.2389)
        assert kernel.g[3, 3] == pytest.approx(0.7611)

    def test_off_diagonal_blocks(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 5), ("2", (0.0, 1.0), 5)])
        kernel = mj.build_markov_kernel_from_blocks(grid, [[0.15, 0.85], [0.9, 0.1]])
        comp = grid.comp_of
        assert np.allclose(kernel.g[np.ix_(comp == 0, comp == 1)], 0.85)
        assert np.allclose(kernel.g[np.ix_(comp == 1, comp == 0)], 0.9)

    def test_non_unit_interval_rescales_density(self):
        grid = mj.build_grid([("1", (0.0, 2.0), 4)])
        kernel = mj.build_markov_kernel_from_blocks(grid, [[1.0]])
        assert np.allclose(kernel.g, 0.5)
        assert np.allclose(kernel.g @ grid.weights, 1.0)

    def test_row_sum_violation_rejected(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 2)])
        with pytest.raises(ValueError, match="row"):
            mj.build_markov_kernel_from_blocks(grid, [[0.9]])
        with pytest.raises(ValueError, match="row"):
            mj.KernelDensity(grid, np.full((2, 2), 0.7))

    def test_negative_density_rejected(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 2)])
        g = np.array([[2.5, -0.5], [1.0, 1.0]])
        with pytest.raises(ValueError, match="negative"):
            mj.KernelDensity(grid, g)

    def test_refinement_preserves_row_sums_exactly(self):
        blocks = [[0.25, 0.75], [0.5, 0.5]]
        for cells in (2, 4, 8):
            grid = mj.build_grid([("1", (0.0, 1.0), cells), ("2", (0.0, 1.0), cells)])
            kernel = mj.build_markov_kernel_from_blocks(grid, blocks)
            assert np.allclose(kernel.g @ grid.weights, 1.0, atol=1e-14)


class TestInitialDensity:
    def test_uniform_integrates_to_one(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 3), ("2", (0.0, 1.0), 3)])
        nu = mj.InitialDensity.uniform(grid)
        assert nu.values @ grid.weights == pytest.approx(1.0)
        assert np.allclose(nu.values, 0.5)

    def test_rejects_bad_mass(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 2)])
        with pytest.raises(ValueError, match="integrates"):
            mj.InitialDensity(grid, np.array([1.0, 0.5]))
        with pytest.raises(ValueError, match="negative"):
            mj.InitialDensity(grid, np.array([2.5, -0.5]))


class TestMatrixField:
    def test_affine_constant(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 4)])
        eye = np.eye(2)
        fld = mj.eval_affine_field(grid, [(eye, eye)])
        assert np.allclose(fld.values, eye)

    def test_affine_midpoint_arithmetic(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 1), ("2", (0.0, 1.0), 1)])
        fld = mj.eval_affine_field(grid, [([[0.93]], [[0.73]]), ([[0.94]], [[1.1]])])
        # midpoint t = 0.5 of each component
        assert fld.values[0, 0, 0] == pytest.approx(0.83)
        assert fld.values[1, 0, 0] == pytest.approx(1.02)

    def test_scaled_by_t(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 2)])
        fld = mj.eval_scaled_field(grid, [[[-0.3, -0.3]]])
        # first cell midpoint t = 0.25
        assert np.allclose(fld.values[0], [[-0.075, -0.075]])

    def test_shape_mismatch_rejected(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 2)])
        with pytest.raises(ValueError, match="shape"):
            mj.eval_affine_field(grid, [(np.eye(2), np.eye(3))])

    def test_arithmetic_cellwise(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 3)])
        rng = np.random.default_rng(0)
        a = MatrixField(grid, rng.normal(size=(3, 2, 2)))
        b = MatrixField(grid, rng.normal(size=(3, 2, 2)))
        assert np.allclose((a + b).values, a.values + b.values)
        assert np.allclose((a - b).values, a.values - b.values)
        assert np.allclose((2.0 * a).values, 2.0 * a.values)
        assert np.allclose((a @ b).values, np.matmul(a.values, b.values))
        assert np.allclose(a.transpose_cells().values, a.values.transpose(0, 2, 1))

    def test_arithmetic_commutes_with_refinement_for_constant_fields(self):
        mats = (np.array([[1.0, 2.0], [0.0, 1.0]]), np.array([[0.5, 0.0], [1.0, -1.0]]))
        results = []
        for cells in (1, 4):
            grid = mj.build_grid([("1", (0.0, 1.0), cells)])
            a = MatrixField.constant(grid, mats[0])
            b = MatrixField.constant(grid, mats[1])
            combo = (a @ b + 2.0 * a.transpose_cells()).values
            results.append(combo[0])
            # piecewise-constant: every cell identical
            assert np.allclose(combo, combo[0])
        assert np.allclose(results[0], results[1])

    def test_norms(self):
        grid = mj.build_grid([("1", (0.0, 2.0), 2)])
        fld = MatrixField(grid, np.stack([np.diag([3.0, 1.0]), np.diag([0.5, 0.25])]))
        assert fld.norm_inf() == pytest.approx(3.0)
        assert fld.norm_l1() == pytest.approx(1.0 * 3.0 + 1.0 * 0.5)

    def test_symmetry_and_eig(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 2)])
        fld = MatrixField.constant(grid, [[2.0, 1.0], [1.0, 2.0]])
        assert fld.is_symmetric()
        assert fld.eig_min() == pytest.approx(1.0)
        assert fld.eig_max() == pytest.approx(3.0)

    def test_non_finite_rejected(self):
        grid = mj.build_grid([("1", (0.0, 1.0), 1)])
        with pytest.raises(ValueError, match="finite"):
            MatrixField(grid, np.array([[[np.inf]]]))


class TestSystemModel:
    def test_dtd_identity_enforced(self, game2d_model):
        grid = game2d_model.grid
        bad_D = MatrixField.constant(grid, [[2.0]])
        with pytest.raises(ValueError, match="D'D"):
            mj.SystemModel(
                grid=grid,
                kernel=game2d_model.kernel,
                nu0=game2d_model.nu0,
                A=game2d_model.A,
                B=game2d_model.B,
                C=game2d_model.C,
                D=bad_D,
                F=game2d_model.F,
            )

    def test_output_weight(self, game2d_model):
        ctc = game2d_model.output_weight()
        assert ctc.is_symmetric()
        assert ctc.eig_min() >= -1e-15
