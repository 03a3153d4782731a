"""Two-player Nash game and H-infinity / mixed-design synthesis.

The stationary quadruple (P1, K1, P2, K2) solves four coupled Riccati
equations: the disturbance player's equation in P1 (negative
semidefinite) with gate H1 = gamma^2 I + T_F(P1) >> 0, and the control
player's equation in P2 (positive semidefinite) with gate
H2 = I + T_B(P2) >> 0, tied together through

    K3 = F' E(P1) (A + B K2),   K1 = -H1^{-1} K3,
    K4 = B' E(P2) (A + F K1),   K2 = -H2^{-1} K4.

Both solvers sweep the finite-horizon recursions backward from zero
terminal values and stop on the distance between successive value
fields; stationarity is then confirmed through the equation residuals.
The pure H-infinity design iterates P1 alone and derives the control
gain from -P1.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, ConvergenceError, GammaTooSmallError
from .fields import MatrixField
from .stability import EMSS_BOUNDARY, closed_loop_radius
from .system import SystemModel

__all__ = [
    "GameProblem",
    "GameSolution",
    "solve_game",
    "solve_hinf",
    "nash_values",
    "verify_brl",
    "worst_case_disturbance_gain",
]


@dataclass(frozen=True)
class GameProblem:
    system: SystemModel
    gamma: float

    def __post_init__(self):
        if not self.gamma > 0:
            raise ValueError(f"attenuation level must be positive, got {self.gamma}")


@dataclass(frozen=True)
class GameSolution:
    mode: str  # "mixed" or "hinf"
    gamma: float
    P1: MatrixField
    K1: MatrixField
    K2: MatrixField
    H1: MatrixField
    H2: MatrixField
    K3: MatrixField
    K4: MatrixField
    residuals: dict[str, float]
    closed_loop_radius: float
    converged: bool
    iterations: int
    P2: MatrixField | None = None


def _eye_stack(M: int, n: int) -> np.ndarray:
    return np.tile(np.eye(n), (M, 1, 1))


def _check_gate(vals: np.ndarray, floor: float, name: str, step: int) -> None:
    ev_min = np.linalg.eigvalsh(vals)[:, 0]
    if ev_min.min() <= floor:
        i = int(ev_min.argmin())
        raise GammaTooSmallError(
            f"{name} lost positive definiteness at backward step {step}, cell {i} "
            f"(min eigenvalue {ev_min[i]:.3g}); increase gamma"
        )


def _sym(vals: np.ndarray) -> np.ndarray:
    return 0.5 * (vals + vals.transpose(0, 2, 1))


def _norm_inf(vals: np.ndarray) -> float:
    return float(np.linalg.norm(vals, ord=2, axis=(1, 2)).max())


def _hinf_standing_assumptions(problem: GameProblem) -> None:
    # disturbance-attenuation statements need every mode reachable and chargeable
    col = problem.system.kernel.column_mass()
    if np.any(col <= 0):
        j = int(np.argmin(col))
        raise ConfigError(f"kernel column {j} carries no mass; attenuation level is ill-defined")
    if not problem.system.nu0.is_positive():
        raise ConfigError("initial density must be strictly positive for attenuation statements")


def _game_step(sys: SystemModel, gamma: float, P1, P2, K1, K2, step: int):
    """One backward sweep of the eight recursions; returns updated fields."""
    Av, Bv, Cv, Fv = sys.A.values, sys.B.values, sys.C.values, sys.F.values
    CtC = np.einsum("ika,ikb->iab", Cv, Cv)
    M = sys.grid.M
    gate_floor = 1e-10 * gamma * gamma

    EP1 = sys.kernel.mix_forward(P1)
    EP2 = sys.kernel.mix_forward(P2)
    H1 = gamma * gamma * _eye_stack(M, sys.r) + np.einsum("ika,ikl,ilb->iab", Fv, EP1, Fv)
    H1 = _sym(H1)
    _check_gate(H1, gate_floor, "gamma^2 I + T_F(P1)", step)
    H2 = _eye_stack(M, sys.m) + np.einsum("ika,ikl,ilb->iab", Bv, EP2, Bv)
    H2 = _sym(H2)
    _check_gate(H2, gate_floor, "I + T_B(P2)", step)

    ABK2_old = Av + np.matmul(Bv, K2)
    AFK1_old = Av + np.matmul(Fv, K1)
    K3 = np.einsum("ika,ikl,ilb->iab", Fv, EP1, ABK2_old)
    K4 = np.einsum("ika,ikl,ilb->iab", Bv, EP2, AFK1_old)
    X1 = np.linalg.solve(H1, K3)
    X2 = np.linalg.solve(H2, K4)
    K1_new = -X1
    K2_new = -X2

    ABK2_new = Av + np.matmul(Bv, K2_new)
    P1_new = (
        np.einsum("ika,ikl,ilb->iab", ABK2_new, EP1, ABK2_new)
        - np.einsum("ika,ikb->iab", K2_new, K2_new)
        - CtC
        - np.einsum("ika,ikb->iab", K3, X1)
    )
    AFK1_new = Av + np.matmul(Fv, K1_new)
    P2_new = (
        np.einsum("ika,ikl,ilb->iab", AFK1_new, EP2, AFK1_new)
        + CtC
        - np.einsum("ika,ikb->iab", K4, X2)
    )
    return _sym(P1_new), _sym(P2_new), K1_new, K2_new


def _stationary_quantities(sys: SystemModel, gamma: float, P1, K2, P2=None, K1=None):
    """H1/H2/K3/K4 and the equation residuals at a candidate stationary point.

    When P2 is None the control side is evaluated on -P1 (pure
    H-infinity coupling) and the residual keys are P1/K1/K2;
    otherwise P1/K1/P2/K2, named after the unknown each equation pins.
    """
    Av, Bv, Cv, Fv = sys.A.values, sys.B.values, sys.C.values, sys.F.values
    CtC = np.einsum("ika,ikb->iab", Cv, Cv)
    M = sys.grid.M

    EP1 = sys.kernel.mix_forward(P1)
    H1 = _sym(gamma * gamma * _eye_stack(M, sys.r) + np.einsum("ika,ikl,ilb->iab", Fv, EP1, Fv))
    ABK2 = Av + np.matmul(Bv, K2)
    K3 = np.einsum("ika,ikl,ilb->iab", Fv, EP1, ABK2)
    X1 = np.linalg.solve(H1, K3)
    K1_implied = -X1
    P1_rhs = (
        np.einsum("ika,ikl,ilb->iab", ABK2, EP1, ABK2)
        - np.einsum("ika,ikb->iab", K2, K2)
        - CtC
        - np.einsum("ika,ikb->iab", K3, X1)
    )
    res = {}
    res["P1"] = _norm_inf(_sym(P1_rhs) - P1)
    if K1 is None:
        K1 = K1_implied
        res["K1"] = 0.0
    else:
        res["K1"] = _norm_inf(K1 - K1_implied)

    ctrl = P2 if P2 is not None else -P1
    EPc = sys.kernel.mix_forward(ctrl)
    H2 = _sym(_eye_stack(M, sys.m) + np.einsum("ika,ikl,ilb->iab", Bv, EPc, Bv))
    AFK1 = Av + np.matmul(Fv, K1)
    K4 = np.einsum("ika,ikl,ilb->iab", Bv, EPc, AFK1)
    X2 = np.linalg.solve(H2, K4)
    if P2 is not None:
        P2_rhs = (
            np.einsum("ika,ikl,ilb->iab", AFK1, EPc, AFK1)
            + CtC
            - np.einsum("ika,ikb->iab", K4, X2)
        )
        res["P2"] = _norm_inf(_sym(P2_rhs) - P2)
        res["K2"] = _norm_inf(K2 + X2)
    else:
        res["K2"] = _norm_inf(K2 + X2)
    return H1, H2, K3, K4, K1, res


def solve_game(problem: GameProblem, tol: float = 1e-9, max_iter: int = 5000) -> GameSolution:
    """Stationary Nash quadruple by the backward sweep from zero terminal values.

    Stops when the sup-norm distance between successive (P1, P2) pairs
    falls below tol, then declares convergence only if the stationary
    equation residuals are within 10 * tol as well.  Loss of a gate's
    definiteness aborts with the offending cell and step; exhausting
    max_iter raises.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")
    sys = problem.system
    gamma = problem.gamma
    M = sys.grid.M
    P1 = np.zeros((M, sys.n, sys.n))
    P2 = np.zeros((M, sys.n, sys.n))
    K1 = np.zeros((M, sys.r, sys.n))
    K2 = np.zeros((M, sys.m, sys.n))
    iterations = 0
    settled = False
    for step in range(1, max_iter + 1):
        P1_new, P2_new, K1, K2 = _game_step(sys, gamma, P1, P2, K1, K2, step)
        diff = _norm_inf(P1_new - P1) + _norm_inf(P2_new - P2)
        P1, P2 = P1_new, P2_new
        iterations = step
        if diff < tol:
            settled = True
            break
    if not settled:
        raise ConvergenceError(
            f"backward sweep not below {tol:g} within {max_iter} steps (last distance {diff:.3g})"
        )
    grid = sys.grid
    H1, H2, K3, K4, _, residuals = _stationary_quantities(sys, gamma, P1, K2, P2=P2, K1=K1)
    closed = sys.A + sys.B @ MatrixField(grid, K2) + sys.F @ MatrixField(grid, K1)
    radius = closed_loop_radius(closed, sys.kernel)
    converged = max(residuals.values()) <= 10.0 * tol
    return GameSolution(
        mode="mixed",
        gamma=gamma,
        P1=MatrixField(grid, P1),
        P2=MatrixField(grid, P2),
        K1=MatrixField(grid, K1),
        K2=MatrixField(grid, K2),
        H1=MatrixField(grid, H1),
        H2=MatrixField(grid, H2),
        K3=MatrixField(grid, K3),
        K4=MatrixField(grid, K4),
        residuals=residuals,
        closed_loop_radius=radius,
        converged=converged,
        iterations=iterations,
    )


def solve_hinf(problem: GameProblem, tol: float = 1e-9, max_iter: int = 5000) -> GameSolution:
    """Pure attenuation design: iterate P1 alone, control gain from -P1."""
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")
    _hinf_standing_assumptions(problem)
    sys = problem.system
    gamma = problem.gamma
    M = sys.grid.M
    Av, Bv, Cv, Fv = sys.A.values, sys.B.values, sys.C.values, sys.F.values
    CtC = np.einsum("ika,ikb->iab", Cv, Cv)
    gate_floor = 1e-10 * gamma * gamma
    P1 = np.zeros((M, sys.n, sys.n))
    K1 = np.zeros((M, sys.r, sys.n))
    K2 = np.zeros((M, sys.m, sys.n))
    iterations = 0
    settled = False
    for step in range(1, max_iter + 1):
        EP1 = sys.kernel.mix_forward(P1)
        H1 = _sym(gamma * gamma * _eye_stack(M, sys.r) + np.einsum("ika,ikl,ilb->iab", Fv, EP1, Fv))
        _check_gate(H1, gate_floor, "gamma^2 I + T_F(P1)", step)
        H2 = _sym(_eye_stack(M, sys.m) - np.einsum("ika,ikl,ilb->iab", Bv, EP1, Bv))
        _check_gate(H2, gate_floor, "I + T_B(-P1)", step)
        K3 = np.einsum("ika,ikl,ilb->iab", Fv, EP1, Av + np.matmul(Bv, K2))
        K4 = -np.einsum("ika,ikl,ilb->iab", Bv, EP1, Av + np.matmul(Fv, K1))
        X1 = np.linalg.solve(H1, K3)
        K1 = -X1
        K2 = -np.linalg.solve(H2, K4)
        ABK2 = Av + np.matmul(Bv, K2)
        P1_new = _sym(
            np.einsum("ika,ikl,ilb->iab", ABK2, EP1, ABK2)
            - np.einsum("ika,ikb->iab", K2, K2)
            - CtC
            - np.einsum("ika,ikb->iab", K3, X1)
        )
        diff = _norm_inf(P1_new - P1)
        P1 = P1_new
        iterations = step
        if diff < tol:
            settled = True
            break
    if not settled:
        raise ConvergenceError(
            f"backward sweep not below {tol:g} within {max_iter} steps (last distance {diff:.3g})"
        )
    grid = sys.grid
    H1, H2, K3, K4, _, residuals = _stationary_quantities(sys, gamma, P1, K2, P2=None, K1=K1)
    closed = sys.A + sys.B @ MatrixField(grid, K2) + sys.F @ MatrixField(grid, K1)
    radius = closed_loop_radius(closed, sys.kernel)
    converged = max(residuals.values()) <= 10.0 * tol
    return GameSolution(
        mode="hinf",
        gamma=gamma,
        P1=MatrixField(grid, P1),
        P2=None,
        K1=MatrixField(grid, K1),
        K2=MatrixField(grid, K2),
        H1=MatrixField(grid, H1),
        H2=MatrixField(grid, H2),
        K3=MatrixField(grid, K3),
        K4=MatrixField(grid, K4),
        residuals=residuals,
        closed_loop_radius=radius,
        converged=converged,
        iterations=iterations,
    )


def nash_values(
    solution: GameSolution, x0: np.ndarray, nu0
) -> tuple[float, float]:
    """Equilibrium cost pair (J1*, J2*) = x0' E{P(mode_0)} x0 for both players."""
    if not solution.converged:
        raise ValueError("equilibrium values need a converged solution")
    if solution.P2 is None:
        raise ValueError("pure attenuation solutions carry no control-player value field")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    grid = solution.P1.grid
    wts = grid.weights * nu0.values
    P1_bar = np.einsum("i,iab->ab", wts, solution.P1.values)
    P2_bar = np.einsum("i,iab->ab", wts, solution.P2.values)
    return float(x0 @ P1_bar @ x0), float(x0 @ P2_bar @ x0)


def worst_case_disturbance_gain(solution: GameSolution) -> MatrixField:
    """The disturbance player's equilibrium feedback gain."""
    if not solution.converged:
        raise ValueError("worst-case gain needs a converged solution")
    return solution.K1


def verify_brl(
    problem: GameProblem,
    K2: MatrixField,
    P1: MatrixField,
    tol: float = 1e-6,
) -> tuple[bool, dict[str, float | bool]]:
    """Certificate that the loop closed with K2 attenuates below gamma.

    Checks the four conditions equivalent to the norm bound: P1 is
    negative semidefinite, the P1-equation holds with K2 frozen, the
    gate gamma^2 I + T_F(P1) is uniformly positive, and the loop closed
    with both equilibrium gains is mean-square stable.
    """
    _hinf_standing_assumptions(problem)
    sys = problem.system
    if K2.shape != (sys.m, sys.n):
        raise ValueError(f"K2 must be {sys.m}x{sys.n}, got {K2.shape}")
    if P1.shape != (sys.n, sys.n) or not P1.is_symmetric():
        raise ValueError("P1 must be a symmetric n x n field")
    gamma = problem.gamma
    Av, Bv, Cv, Fv = sys.A.values, sys.B.values, sys.C.values, sys.F.values
    CtC = np.einsum("ika,ikb->iab", Cv, Cv)
    M = sys.grid.M
    P1v = P1.values
    EP1 = sys.kernel.mix_forward(P1v)
    H1 = _sym(gamma * gamma * _eye_stack(M, sys.r) + np.einsum("ika,ikl,ilb->iab", Fv, EP1, Fv))
    h1_min = float(np.linalg.eigvalsh(H1)[:, 0].min())
    diagnostics: dict[str, float | bool] = {
        "p1_max_eig": P1.eig_max(),
        "h1_min_eig": h1_min,
    }
    ok_sign = diagnostics["p1_max_eig"] <= tol
    ok_gate = h1_min > 1e-10 * gamma * gamma
    if not ok_gate:
        diagnostics.update(p1_residual=float("inf"), closed_loop_radius=float("inf"),
                           sign_ok=ok_sign, gate_ok=False, residual_ok=False, emss_ok=False)
        return False, diagnostics
    ABK2 = Av + np.matmul(Bv, K2.values)
    K3 = np.einsum("ika,ikl,ilb->iab", Fv, EP1, ABK2)
    X1 = np.linalg.solve(H1, K3)
    rhs = (
        np.einsum("ika,ikl,ilb->iab", ABK2, EP1, ABK2)
        - np.einsum("ika,ikb->iab", K2.values, K2.values)
        - CtC
        - np.einsum("ika,ikb->iab", K3, X1)
    )
    residual = _norm_inf(_sym(rhs) - P1v)
    K1 = MatrixField(sys.grid, -X1)
    closed = sys.A + sys.B @ K2 + sys.F @ K1
    radius = closed_loop_radius(closed, sys.kernel)
    ok_res = residual <= tol
    ok_emss = radius < 1.0 - EMSS_BOUNDARY
    diagnostics.update(
        p1_residual=residual,
        closed_loop_radius=radius,
        sign_ok=ok_sign,
        gate_ok=ok_gate,
        residual_ok=ok_res,
        emss_ok=ok_emss,
    )
    return bool(ok_sign and ok_gate and ok_res and ok_emss), diagnostics
