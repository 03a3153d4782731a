import numpy as np
import pytest

import mjlsgrid as mj
from mjlsgrid.errors import (
    GainNotFoundError,
    NotStabilizingError,
    SolverError,
    UnstableDynamicsError,
)
from mjlsgrid.fields import MatrixField
from mjlsgrid.operators import apply_T
from conftest import atomic_grid_and_kernel, neg_t_gain
from oracles import dense_lyapunov_solve, random_chain


class TestCheckEmss:
    def test_zero_dynamics(self, two_cell):
        grid, kernel = two_cell
        rep = mj.check_emss(MatrixField.zeros(grid, 2, 2), kernel)
        assert rep.emss
        assert rep.spectral_radius_L == pytest.approx(0.0, abs=1e-12)
        assert rep.lyapunov_certificate.allclose(MatrixField.identity(grid, 2), 1e-9)
        assert rep.margin == pytest.approx(1.0, abs=1e-8)

    def test_scalar_unstable(self, single_cell):
        grid, kernel = single_cell
        rep = mj.check_emss(MatrixField.constant(grid, [[1.1]]), kernel)
        assert not rep.emss
        assert rep.spectral_radius_L == pytest.approx(1.21, abs=1e-8)
        assert rep.lyapunov_certificate is None

    def test_game_closed_loop(self, game2d_model, game_solution):
        closed = game2d_model.A + game2d_model.B @ game_solution.K2
        rep = mj.check_emss(closed, game2d_model.kernel)
        assert rep.emss
        assert rep.margin is not None and rep.margin > 0

    def test_unit_radius_reported_marginal(self, single_cell):
        grid, kernel = single_cell
        rep = mj.check_emss(MatrixField.constant(grid, [[1.0]]), kernel, certificate=False)
        assert rep.marginal
        assert not rep.emss
        assert rep.spectral_radius_L == pytest.approx(1.0, abs=1e-10)

    def test_report_truthiness(self, single_cell):
        grid, kernel = single_cell
        assert mj.check_emss(MatrixField.constant(grid, [[0.5]]), kernel)
        assert not mj.check_emss(MatrixField.constant(grid, [[2.0]]), kernel)


class TestLyapunovIdentity:
    def test_scalar_geometric_series(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.constant(grid, [[0.5]])
        V = MatrixField.constant(grid, [[1.0]])
        U = mj.solve_lyapunov_identity(A, kernel, V)
        assert U.values[0, 0, 0] == pytest.approx(4.0 / 3.0, abs=1e-9)

    def test_zero_dynamics(self, two_cell):
        grid, kernel = two_cell
        U = mj.solve_lyapunov_identity(MatrixField.zeros(grid, 2, 2), kernel, MatrixField.identity(grid, 2))
        assert U.allclose(MatrixField.identity(grid, 2), 1e-12)

    def test_matches_dense_solve(self):
        rng = np.random.default_rng(11)
        for _ in range(10):
            M = int(rng.integers(2, 5))
            grid, kernel = atomic_grid_and_kernel(random_chain(rng, M))
            A = MatrixField(grid, rng.normal(size=(M, 2, 2)) * 0.4)
            V = MatrixField(grid, rng.normal(size=(M, 2, 2))).symmetrize()
            U = mj.solve_lyapunov_identity(A, kernel, V, tol=1e-12)
            U_ref = dense_lyapunov_solve(kernel.g, grid.weights, A.values, V.values)
            assert np.abs(U.values - U_ref).max() <= 1e-10

    def test_unstable_raises(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.constant(grid, [[1.1]])
        with pytest.raises(UnstableDynamicsError):
            mj.solve_lyapunov_identity(A, kernel, MatrixField.constant(grid, [[1.0]]))

    def test_uniform_positive_solution_for_positive_rhs(self):
        rng = np.random.default_rng(12)
        grid, kernel = atomic_grid_and_kernel(random_chain(rng, 3))
        A = MatrixField(grid, rng.normal(size=(3, 2, 2)) * 0.4)
        U = mj.solve_lyapunov_identity(A, kernel, MatrixField.identity(grid, 2))
        assert U.eig_min() >= 1.0 - 1e-9


class TestClosedLoopLyapunov:
    def test_zero_gain_zero_weight(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.constant(grid, [[0.5]])
        G = MatrixField.constant(grid, [[1.0]])
        K = MatrixField.zeros(grid, 1, 1)
        P = mj.solve_closed_loop_lyapunov(
            A, G, K, kernel, MatrixField.zeros(grid, 1, 1), MatrixField.identity(grid, 1)
        )
        assert np.abs(P.values).max() <= 1e-12

    def test_scalar_value(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.constant(grid, [[0.5]])
        G = MatrixField.constant(grid, [[1.0]])
        K = MatrixField.zeros(grid, 1, 1)
        P = mj.solve_closed_loop_lyapunov(
            A, G, K, kernel, MatrixField.constant(grid, [[1.0]]), MatrixField.identity(grid, 1)
        )
        assert P.values[0, 0, 0] == pytest.approx(4.0 / 3.0, abs=1e-9)

    def test_solar_negative_t_gain_residual(self, solar_model):
        K = neg_t_gain(solar_model.grid)
        Q = solar_model.output_weight()
        R = MatrixField.identity(solar_model.grid, 1)
        P = mj.solve_closed_loop_lyapunov(solar_model.A, solar_model.B, K, solar_model.kernel, Q, R)
        closed = solar_model.A + solar_model.B @ K
        rhs = Q + K.transpose_cells() @ (R @ K)
        residual = (P - apply_T(closed, solar_model.kernel, P) - rhs).norm_inf()
        assert residual <= 1e-8

    def test_not_stabilizing_raises(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.constant(grid, [[2.0]])
        G = MatrixField.zeros(grid, 1, 1)
        with pytest.raises(NotStabilizingError):
            mj.solve_closed_loop_lyapunov(
                A, G, MatrixField.zeros(grid, 1, 1), kernel,
                MatrixField.identity(grid, 1), MatrixField.identity(grid, 1),
            )


class TestCorrelation:
    def test_zero_initial_state(self, two_cell):
        grid, kernel = two_cell
        A = MatrixField.identity(grid, 2)
        seq = mj.propagate_correlation(A, kernel, np.zeros(2), mj.InitialDensity.uniform(grid), 5)
        assert all(np.abs(X.values).max() == 0.0 for X in seq.X)

    def test_scalar_decay(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.constant(grid, [[0.5]])
        seq = mj.propagate_correlation(A, kernel, np.array([1.0]), mj.InitialDensity.uniform(grid), 6)
        series = seq.sq_norm_series()
        assert np.allclose(series, 0.25 ** np.arange(7))

    def test_psd_per_cell(self):
        rng = np.random.default_rng(13)
        grid, kernel = atomic_grid_and_kernel(random_chain(rng, 3))
        A = MatrixField(grid, rng.normal(size=(3, 2, 2)))
        seq = mj.propagate_correlation(A, kernel, rng.normal(size=2), mj.InitialDensity.uniform(grid), 8)
        for X in seq.X:
            assert X.eig_min() >= -1e-12 * max(X.norm_inf(), 1.0)

    def test_geometric_decay_when_stable(self, solar_model):
        K = neg_t_gain(solar_model.grid)
        closed = solar_model.A + solar_model.B @ K
        seq = mj.propagate_correlation(
            closed, solar_model.kernel, np.array([1.0]), solar_model.nu0, 25
        )
        l1 = seq.l1_series()
        assert l1[20] < l1[5]
        ratios = l1[10:] / l1[9:-1]
        assert ratios.max() < 1.0


class TestGainVerification:
    def test_stable_with_zero_injection(self, two_cell):
        grid, kernel = two_cell
        A = 0.5 * MatrixField.identity(grid, 2)
        C = MatrixField.constant(grid, [[1.0, 0.0]])
        rep = mj.verify_detectability_gain(A, C, MatrixField.zeros(grid, 2, 1), kernel)
        assert rep.emss

    def test_solar_negative_t_gains(self, solar_model):
        K = neg_t_gain(solar_model.grid)
        H = neg_t_gain(solar_model.grid)
        assert mj.verify_stabilizability_gain(solar_model.A, solar_model.B, K, solar_model.kernel).emss
        assert mj.verify_detectability_gain(solar_model.A, solar_model.C, H, solar_model.kernel).emss

    def test_stable_plant_zero_gain_stabilizable(self, two_cell):
        grid, kernel = two_cell
        A = 0.5 * MatrixField.identity(grid, 2)
        G = MatrixField.constant(grid, [[1.0], [0.0]])
        rep = mj.verify_stabilizability_gain(A, G, MatrixField.zeros(grid, 1, 2), kernel)
        assert rep.emss

    def test_uncontrollable_scalar(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.constant(grid, [[2.0]])
        G = MatrixField.zeros(grid, 1, 1)
        for k in (-5.0, 0.0, 5.0):
            rep = mj.verify_stabilizability_gain(A, G, MatrixField.constant(grid, [[k]]), kernel)
            assert not rep.emss


class TestLyapunovInequality:
    def test_zero_dynamics_margin(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.zeros(grid, 2, 2)
        ok, margin = mj.verify_lyapunov_inequality(A, kernel, 2.0 * MatrixField.identity(grid, 2))
        assert ok
        # 2I - 0 - I leaves a full identity of slack
        assert margin == pytest.approx(1.0)

    def test_rejects_non_positive_certificate(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.zeros(grid, 1, 1)
        ok, _ = mj.verify_lyapunov_inequality(A, kernel, MatrixField.zeros(grid, 1, 1))
        assert not ok

    def test_game_certificates(self, game2d_model, game_solution, hinf_solution):
        U = mj.per_component_constant(
            game2d_model.grid,
            [
                1e3 * np.array([[1.3438, -0.6177], [-0.6177, 0.4501]]),
                1e3 * np.array([[0.1104, -0.0044], [-0.0044, 1.3873]]),
            ],
        )
        loops = [
            game2d_model.A + game2d_model.F @ game_solution.K1,
            game2d_model.A + game2d_model.B @ game_solution.K2,
            game2d_model.A + game2d_model.B @ hinf_solution.K2 + game2d_model.F @ hinf_solution.K1,
        ]
        for closed in loops:
            ok, margin = mj.verify_lyapunov_inequality(closed, game2d_model.kernel, U)
            assert ok and margin >= 0.0


class TestDetectabilitySynthesis:
    def test_stable_returns_zero_gain(self, two_cell):
        grid, kernel = two_cell
        A = 0.3 * MatrixField.identity(grid, 2)
        C = MatrixField.constant(grid, [[1.0, 1.0]])
        H = mj.synth_detectability_gain(A, C, kernel)
        assert np.abs(H.values).max() == 0.0

    def test_scalar_unstable(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.constant(grid, [[2.0]])
        C = MatrixField.constant(grid, [[1.0]])
        H = mj.synth_detectability_gain(A, C, kernel)
        assert abs(2.0 + H.values[0, 0, 0]) < 1.0

    def test_solar_pair_detectable(self, solar_model):
        H = mj.synth_detectability_gain(solar_model.A, solar_model.C, solar_model.kernel)
        rep = mj.verify_detectability_gain(solar_model.A, solar_model.C, H, solar_model.kernel)
        assert rep.emss

    def test_game_disturbance_loop_detectable(self, game2d_model, game_solution):
        injected = game2d_model.A + game2d_model.F @ game_solution.K1
        H = mj.synth_detectability_gain(injected, game2d_model.C, game2d_model.kernel)
        rep = mj.verify_detectability_gain(injected, game2d_model.C, H, game2d_model.kernel)
        assert rep.emss

    def test_undetectable_pair_fails_honestly(self, single_cell):
        grid, kernel = single_cell
        A = MatrixField.constant(grid, [[2.0]])
        C = MatrixField.zeros(grid, 1, 1)
        with pytest.raises((GainNotFoundError, SolverError)):
            mj.synth_detectability_gain(A, C, kernel)


class TestDetectabilityStabilityLink:
    """Solvability of U - T_A(U) = C'C decides stability for detectable pairs."""

    def _dense_psd_solvable(self, g, w, A, CtC):
        M, n = A.shape[0], A.shape[1]
        from oracles import dense_T_matrix

        T = dense_T_matrix(g, w, A)
        sys = np.eye(M * n * n) - T
        if abs(np.linalg.det(sys)) < 1e-12:
            return None  # nongeneric; caller redraws
        U = np.linalg.solve(sys, CtC.reshape(-1)).reshape(M, n, n)
        U = 0.5 * (U + U.transpose(0, 2, 1))
        return bool(np.linalg.eigvalsh(U)[:, 0].min() >= -1e-9)

    def test_both_directions_on_random_instances(self):
        rng = np.random.default_rng(14)
        checked = 0
        while checked < 25:
            M = int(rng.integers(1, 9))
            n = int(rng.integers(1, 3))
            grid, kernel = atomic_grid_and_kernel(random_chain(rng, M))
            A = mj.MatrixField(grid, rng.normal(size=(M, n, n)) * rng.uniform(0.3, 1.2))
            C = mj.MatrixField(grid, np.tile(np.eye(n), (M, 1, 1)) + 0.1 * rng.normal(size=(M, n, n)))
            CtC = (C.transpose_cells() @ C).values
            solvable = self._dense_psd_solvable(kernel.g, grid.weights, A.values, CtC)
            if solvable is None:
                continue
            emss = mj.check_emss(A, kernel, certificate=False).emss
            assert solvable == emss
            checked += 1
