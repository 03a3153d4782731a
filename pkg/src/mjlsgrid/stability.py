"""Mean-square stability, stabilizability, and detectability analysis.

The autonomous loop x(k+1) = A(m) x(k) is exponentially mean-square
stable (EMSS) exactly when the moment operators L_A and T_A have
spectral radius below one; an equivalent certificate is a uniformly
positive field U solving U - T_A(U) = V for any uniformly positive V.
This module computes the radii, solves the Lyapunov identities by
fixed-point iteration, propagates second-moment fields, and verifies or
synthesizes stabilizing / output-injection gains.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError, GainNotFoundError, NotStabilizingError, SolverError, UnstableDynamicsError
from .fields import InitialDensity, KernelDensity, MatrixField
from .operators import OperatorHandle, apply_L, apply_T, pairing, spectral_radius

__all__ = [
    "StabilityReport",
    "CorrelationSequence",
    "check_emss",
    "closed_loop_radius",
    "solve_lyapunov_identity",
    "solve_closed_loop_lyapunov",
    "propagate_correlation",
    "verify_detectability_gain",
    "verify_stabilizability_gain",
    "verify_lyapunov_inequality",
    "synth_detectability_gain",
    "EMSS_BOUNDARY",
]

# radii within this band around 1 are reported marginal, not stable:
# grid and iteration error make an exact radius of 1 undecidable
EMSS_BOUNDARY = 1e-8


@dataclass(frozen=True)
class StabilityReport:
    spectral_radius_L: float
    spectral_radius_T: float
    emss: bool
    marginal: bool
    converged: bool
    lyapunov_certificate: MatrixField | None = None
    margin: float | None = None  # min-cell min-eigenvalue of U - T_A(U)

    def __bool__(self) -> bool:
        return self.emss


@dataclass(frozen=True)
class CorrelationSequence:
    """Second-moment fields X(k) of the autonomous loop, X(k+1) = L_A(X(k))."""

    X: list[MatrixField]
    horizon: int

    def sq_norm_series(self) -> np.ndarray:
        """E ||x(k)||^2 for each k, i.e. <X(k); identity>."""
        grid = self.X[0].grid
        eye = MatrixField.identity(grid, self.X[0].rows)
        return np.array([pairing(Xk, eye) for Xk in self.X])

    def l1_series(self) -> np.ndarray:
        return np.array([Xk.norm_l1() for Xk in self.X])


def closed_loop_radius(A_cl: MatrixField, kernel: KernelDensity, tol: float = 1e-10) -> float:
    """Spectral radius of L_{A_cl}; the < 1 test is the EMSS criterion."""
    return spectral_radius(OperatorHandle("L", A_cl, kernel), tol=tol).value


def check_emss(
    A: MatrixField,
    kernel: KernelDensity,
    tol: float = 1e-10,
    max_iter: int = 10000,
    certificate: bool = True,
) -> StabilityReport:
    """Decide exponential mean-square stability of x(k+1) = A(m) x(k).

    Computes the spectral radii of both moment operators.  When the
    system is stable and ``certificate`` is set, also solves
    U - T_A(U) = I and records the certificate margin.
    """
    rL = spectral_radius(OperatorHandle("L", A, kernel), tol=tol, max_iter=max_iter)
    rT = spectral_radius(OperatorHandle("T", A, kernel), tol=tol, max_iter=max_iter)
    r = max(rL.value, rT.value)
    marginal = abs(r - 1.0) <= EMSS_BOUNDARY
    emss = r < 1.0 - EMSS_BOUNDARY
    cert = None
    margin = None
    if emss and certificate:
        eye = MatrixField.identity(A.grid, A.rows)
        try:
            cert = solve_lyapunov_identity(A, kernel, eye)
            margin = (cert - apply_T(A, kernel, cert)).eig_min()
        except SolverError:
            cert, margin = None, None  # radius too close to 1 for the series to finish
    return StabilityReport(
        spectral_radius_L=rL.value,
        spectral_radius_T=rT.value,
        emss=emss,
        marginal=marginal,
        converged=rL.converged and rT.converged,
        lyapunov_certificate=cert,
        margin=margin,
    )


def solve_lyapunov_identity(
    A: MatrixField,
    kernel: KernelDensity,
    V: MatrixField,
    tol: float = 1e-10,
    max_iter: int = 100000,
) -> MatrixField:
    """Solve U - T_A(U) = V by summing the geometric series.

    Iterates U <- T_A(U) + V from U = V; the increment at step m equals
    the residual, so stopping at increment < tol bounds the equation
    residual by tol.  Divergence or stagnation of the increments means
    the radius of T_A is >= 1 and no bounded solution exists.
    """
    if V.rows != V.cols or V.rows != A.rows:
        raise ValueError(f"V must be square of size {A.rows}, got {V.shape}")
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")
    U = V.values.copy()
    d0 = None
    window: list[float] = []
    for m in range(1, max_iter + 1):
        TU = apply_T(A, kernel, MatrixField(A.grid, U))
        U_next = TU.values + V.values
        U_next = 0.5 * (U_next + U_next.transpose(0, 2, 1))
        d = float(np.abs(U_next - U).max())
        U = U_next
        if d < tol:
            return MatrixField(A.grid, U)
        if d0 is None:
            d0 = d
        if d > 1e9 * (d0 + 1e-300):
            raise UnstableDynamicsError(
                f"Lyapunov fixed point diverges (increment {d:.3g} after {m} steps); "
                "the dynamics are not mean-square stable"
            )
        window.append(d)
        if m >= 1000 and m % 500 == 0:
            if window[-1] >= window[-500]:
                raise UnstableDynamicsError(
                    f"Lyapunov fixed point stagnates at increment {d:.3g} after {m} steps; "
                    "the dynamics are marginal or unstable"
                )
            window = window[-500:]
    raise ConvergenceError(f"Lyapunov fixed point not below {tol:g} within {max_iter} steps")


def solve_closed_loop_lyapunov(
    A: MatrixField,
    G: MatrixField,
    K: MatrixField,
    kernel: KernelDensity,
    Q: MatrixField,
    R: MatrixField,
    tol: float = 1e-10,
    max_iter: int = 100000,
    check_stabilizing: bool = True,
) -> MatrixField:
    """Unique symmetric P with P - T_{A+GK}(P) = Q + K'RK.

    Q may be sign-indefinite; R must make K'RK well defined.  The gain
    is verified to be stabilizing first unless the caller already knows.
    """
    A_cl = A + G @ K
    if check_stabilizing:
        r = closed_loop_radius(A_cl, kernel)
        if r >= 1.0 - EMSS_BOUNDARY:
            raise NotStabilizingError(f"gain is not stabilizing: closed-loop radius {r:.10g}")
    V = Q + K.transpose_cells() @ (R @ K)
    V = V.symmetrize()
    return solve_lyapunov_identity(A_cl, kernel, V, tol=tol, max_iter=max_iter)


def propagate_correlation(
    A: MatrixField,
    kernel: KernelDensity,
    x0: np.ndarray,
    nu0: InitialDensity,
    horizon: int,
) -> CorrelationSequence:
    """Second-moment recursion X(0) = x0 x0' nu0, X(k+1) = L_A(X(k))."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.shape[0] != A.rows:
        raise ValueError(f"x0 must have length {A.rows}, got {x0.shape[0]}")
    outer = np.outer(x0, x0)
    X0 = MatrixField(A.grid, nu0.values[:, None, None] * outer[None])
    seq = [X0]
    for _ in range(horizon):
        seq.append(apply_L(A, kernel, seq[-1]))
    return CorrelationSequence(X=seq, horizon=horizon)


def verify_detectability_gain(
    A: MatrixField, C: MatrixField, H: MatrixField, kernel: KernelDensity
) -> StabilityReport:
    """EMSS check of the injected loop A + H C."""
    if H.shape != (A.rows, C.rows):
        raise ValueError(f"H must be {A.rows}x{C.rows}, got {H.shape}")
    return check_emss(A + H @ C, kernel)


def verify_stabilizability_gain(
    A: MatrixField, G: MatrixField, K: MatrixField, kernel: KernelDensity
) -> StabilityReport:
    """EMSS check of the feedback loop A + G K."""
    if K.shape != (G.cols, A.rows):
        raise ValueError(f"K must be {G.cols}x{A.rows}, got {K.shape}")
    return check_emss(A + G @ K, kernel)


def verify_lyapunov_inequality(
    A_cl: MatrixField, kernel: KernelDensity, U: MatrixField
) -> tuple[bool, float]:
    """Check U - T_{A_cl}(U) - I >= 0 with U uniformly positive.

    Returns (holds, margin) where margin is the smallest cell eigenvalue
    of U - T_{A_cl}(U) - I.
    """
    if not U.is_symmetric():
        raise ValueError("certificate U must be symmetric")
    gap = U - apply_T(A_cl, kernel, U) - MatrixField.identity(U.grid, U.rows)
    margin = gap.eig_min()
    ok = margin >= 0.0 and U.eig_min() > 0.0
    return ok, margin


def synth_detectability_gain(
    A: MatrixField,
    C: MatrixField,
    kernel: KernelDensity,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> MatrixField:
    """Search for an output-injection gain H making A + HC mean-square stable.

    Heuristic: solve the LQ coupled Riccati equations on the transposed
    data (A', C') under the time-reversed kernel, and transpose the
    resulting feedback gain.  The reversal has no exactness guarantee on
    a general mode space, so the returned gain is always re-verified;
    failure of the search does not prove the pair undetectable.
    """
    if C.cols != A.rows:
        raise ValueError(f"C must have {A.rows} columns, got {C.shape}")
    if check_emss(A, kernel, certificate=False).emss:
        return MatrixField.zeros(A.grid, A.rows, C.rows)

    from .riccati import RiccatiProblem, solve_maximal  # local import: riccati depends on this module

    col_mass = kernel.column_mass()
    if np.any(col_mass <= 0):
        j = int(np.argmin(col_mass))
        raise GainNotFoundError(f"kernel column {j} carries no mass; reversed chain is undefined")
    g_rev = kernel.g.T / col_mass[:, None]
    reversed_kernel = KernelDensity(kernel.grid, g_rev, row_stochastic_tolerance=1e-6)
    dual = RiccatiProblem(
        A=A.transpose_cells(),
        G=C.transpose_cells(),
        Q=MatrixField.identity(A.grid, A.rows),
        R=MatrixField.identity(A.grid, C.rows),
        kernel=reversed_kernel,
    )
    try:
        sol = solve_maximal(dual, tol=tol, max_iter=max_iter)
    except SolverError as exc:
        raise GainNotFoundError(f"dual Riccati search failed: {exc}") from exc
    H = sol.K.transpose_cells()
    report = verify_detectability_gain(A, C, H, kernel)
    if not report.emss:
        raise GainNotFoundError(
            f"candidate gain is not stabilizing (radius {report.spectral_radius_L:.6g})"
        )
    return H
