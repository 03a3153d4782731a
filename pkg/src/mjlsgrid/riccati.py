"""Coupled algebraic Riccati equations on the mode grid.

For a problem (A, G, Q, R) the stationary equation is

    P(i) = T_A(P)(i) + Q(i) - G(P)(i)' R(P)(i)^{-1} G(P)(i)

with  G(P) = G' E(P) A,  R(P) = R + T_G(P)  and the sign condition
R(P) >> 0.  The feasibility set S+ collects symmetric fields with
R(P) >> 0 and W(P) >= 0, where W(P) = -P + T_A(P) + Q - G(P)'R(P)^{-1}G(P)
is the equation residual.  solve_maximal runs the policy iteration

    K_h = M(P_{h-1}) = -R(P_{h-1})^{-1} G(P_{h-1}),
    P_h - T_{A+GK_h}(P_h) = Q + K_h' R K_h,

which descends monotonically onto the maximal solution; when the
closed-loop radius stays below one the limit is the unique stabilizing
solution.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConvergenceError, NotStabilizingError, SignConditionError
from .fields import KernelDensity, MatrixField
from .stability import EMSS_BOUNDARY, closed_loop_radius, solve_closed_loop_lyapunov

__all__ = [
    "RiccatiProblem",
    "RiccatiSolution",
    "RiccatiOps",
    "riccati_ops",
    "in_S_plus",
    "solve_maximal",
    "certify_stabilizing",
    "check_strict_block_feasibility",
    "lq_backward_gain_search",
]


@dataclass(frozen=True)
class RiccatiProblem:
    A: MatrixField
    G: MatrixField
    Q: MatrixField
    R: MatrixField
    kernel: KernelDensity

    def __post_init__(self):
        n = self.A.rows
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.G.rows != n:
            raise ValueError(f"G must have {n} rows, got {self.G.shape}")
        m = self.G.cols
        if self.Q.shape != (n, n) or not self.Q.is_symmetric():
            raise ValueError("Q must be a symmetric n x n field")
        if self.R.shape != (m, m) or not self.R.is_symmetric():
            raise ValueError(f"R must be a symmetric {m} x {m} field")
        if self.R.eig_min() <= 0.0:
            raise ValueError("R must be uniformly positive definite")

    @property
    def n(self) -> int:
        return self.A.rows

    @property
    def m(self) -> int:
        return self.G.cols


class RiccatiOps(NamedTuple):
    """The four derived fields at a trial P."""

    G: MatrixField  # G' E(P) A
    R: MatrixField  # R + T_G(P)
    M: MatrixField  # -R(P)^{-1} G(P)
    W: MatrixField  # equation residual


def _derived_parts(problem: RiccatiProblem, P: MatrixField):
    """Raw G(P), R(P) arrays plus E(P); no sign enforcement."""
    EP = problem.kernel.mix_forward(P.values)
    Gp = np.einsum("ika,ikl,ilb->iab", problem.G.values, EP, problem.A.values)
    Rp = problem.R.values + np.einsum("ika,ikl,ilb->iab", problem.G.values, EP, problem.G.values)
    Rp = 0.5 * (Rp + Rp.transpose(0, 2, 1))
    return EP, Gp, Rp


def _sign_threshold(problem: RiccatiProblem) -> float:
    return 1e-10 * max(problem.R.norm_inf(), 1.0)


def riccati_ops(problem: RiccatiProblem, P: MatrixField) -> RiccatiOps:
    """Evaluate G(P), R(P), M(P), W(P); raises if the sign condition fails."""
    if not P.is_symmetric():
        raise ValueError("P must be symmetric")
    EP, Gp, Rp = _derived_parts(problem, P)
    r_min = float(np.linalg.eigvalsh(Rp)[:, 0].min())
    if r_min <= _sign_threshold(problem):
        i = int(np.linalg.eigvalsh(Rp)[:, 0].argmin())
        raise SignConditionError(
            f"R(P) is not uniformly positive (min eigenvalue {r_min:.3g} at cell {i})"
        )
    X = np.linalg.solve(Rp, Gp)
    Mp = -X
    TAP = np.einsum("ika,ikl,ilb->iab", problem.A.values, EP, problem.A.values)
    Wp = -P.values + TAP + problem.Q.values - np.einsum("ika,ikb->iab", Gp, X)
    Wp = 0.5 * (Wp + Wp.transpose(0, 2, 1))
    grid = P.grid
    return RiccatiOps(
        G=MatrixField(grid, Gp),
        R=MatrixField(grid, Rp),
        M=MatrixField(grid, Mp),
        W=MatrixField(grid, Wp),
    )


def in_S_plus(problem: RiccatiProblem, P: MatrixField, tol: float = 1e-9):
    """Membership test for the feasibility set S+.

    Returns (member, W_margin, R_margin); W_margin is NaN when R(P) is
    not invertible, in which case membership is False.
    """
    if not P.is_symmetric():
        raise ValueError("P must be symmetric")
    EP, Gp, Rp = _derived_parts(problem, P)
    R_margin = float(np.linalg.eigvalsh(Rp)[:, 0].min())
    if R_margin <= 0.0:
        return False, float("nan"), R_margin
    X = np.linalg.solve(Rp, Gp)
    TAP = np.einsum("ika,ikl,ilb->iab", problem.A.values, EP, problem.A.values)
    Wp = -P.values + TAP + problem.Q.values - np.einsum("ika,ikb->iab", Gp, X)
    Wp = 0.5 * (Wp + Wp.transpose(0, 2, 1))
    W_margin = float(np.linalg.eigvalsh(Wp)[:, 0].min())
    return (W_margin >= -tol), W_margin, R_margin


@dataclass(frozen=True)
class RiccatiSolution:
    P: MatrixField
    K: MatrixField
    W_residual: float
    R_margin: float
    stabilizing: bool
    closed_loop_radius: float
    iterations: int
    history: list[float] = field(default_factory=list)
    monotone_violation: float = 0.0  # largest eigenvalue of any P_h - P_{h-1}
    gain_radii: list[float] = field(default_factory=list)


def lq_backward_gain_search(
    problem: RiccatiProblem,
    horizon_cap: int = 500,
    radius_tol: float = 1e-8,
) -> MatrixField:
    """Find a stabilizing gain by running the finite-horizon recursion.

    Value-iterates P <- P + W(P) from zero and tests the one-step gain
    M(P) each sweep until the closed loop is mean-square stable.  Used
    to seed the policy iteration when no gain is supplied.
    """
    P = MatrixField.zeros(problem.A.grid, problem.n, problem.n)
    for step in range(1, horizon_cap + 1):
        try:
            ops = riccati_ops(problem, P)
        except SignConditionError as exc:
            raise NotStabilizingError(
                f"gain search lost the sign condition at backward step {step}: {exc}"
            ) from exc
        r = closed_loop_radius(problem.A + problem.G @ ops.M, problem.kernel, tol=radius_tol)
        if r < 1.0 - EMSS_BOUNDARY:
            return ops.M
        P = (P + ops.W).symmetrize()
    raise NotStabilizingError(
        f"no stabilizing gain found within {horizon_cap} backward steps; "
        "the pair may not be mean-square stabilizable"
    )


def solve_maximal(
    problem: RiccatiProblem,
    K0: MatrixField | None = None,
    tol: float = 1e-9,
    max_iter: int = 200,
) -> RiccatiSolution:
    """Maximal solution of the coupled Riccati equations by policy iteration.

    Needs a stabilizing initial gain: uses K0 if given (verified), else
    tries zero, else falls back on the finite-horizon search.  Each
    sweep solves the closed-loop Lyapunov identity an order of magnitude
    tighter than ``tol`` and verifies the updated gain before the next
    solve.  Iterate distances, per-cell monotonicity slack, and the
    closed-loop radii of every intermediate gain are recorded.
    """
    if tol <= 0 or max_iter < 1:
        raise ValueError("tol must be positive and max_iter >= 1")
    A, G, Q, R, kernel = problem.A, problem.G, problem.Q, problem.R, problem.kernel
    inner_tol = tol / 10.0
    if K0 is not None:
        if K0.shape != (problem.m, problem.n):
            raise ValueError(f"K0 must be {problem.m}x{problem.n}, got {K0.shape}")
        r0 = closed_loop_radius(A + G @ K0, kernel)
        if r0 >= 1.0 - EMSS_BOUNDARY:
            raise NotStabilizingError(f"supplied K0 is not stabilizing (radius {r0:.10g})")
        K = K0
    else:
        K = MatrixField.zeros(A.grid, problem.m, problem.n)
        r0 = closed_loop_radius(A, kernel)
        if r0 >= 1.0 - EMSS_BOUNDARY:
            K = lq_backward_gain_search(problem)
            r0 = closed_loop_radius(A + G @ K, kernel)

    gain_radii = [r0]
    P = solve_closed_loop_lyapunov(A, G, K, kernel, Q, R, tol=inner_tol, check_stabilizing=False)
    history: list[float] = []
    monotone_violation = 0.0
    iterations = 0
    converged = False
    for h in range(1, max_iter + 1):
        try:
            ops = riccati_ops(problem, P)
        except SignConditionError as exc:
            raise SignConditionError(f"sweep {h}: {exc}") from exc
        K = ops.M
        r = closed_loop_radius(A + G @ K, kernel)
        if r >= 1.0 - EMSS_BOUNDARY:
            raise NotStabilizingError(
                f"policy iterate {h} lost the stabilizing property (radius {r:.10g})"
            )
        gain_radii.append(r)
        P_next = solve_closed_loop_lyapunov(
            A, G, K, kernel, Q, R, tol=inner_tol, check_stabilizing=False
        )
        diff = (P_next - P).norm_inf()
        history.append(diff)
        monotone_violation = max(monotone_violation, (P_next - P).eig_max())
        P = P_next
        iterations = h
        if diff < tol:
            converged = True
            break
    if not converged:
        raise ConvergenceError(
            f"policy iteration not below {tol:g} within {max_iter} sweeps "
            f"(last step {history[-1]:.3g})"
        )
    ops = riccati_ops(problem, P)
    W_residual = ops.W.norm_inf()
    R_margin = ops.R.eig_min()
    radius = closed_loop_radius(A + G @ ops.M, kernel)
    return RiccatiSolution(
        P=P,
        K=ops.M,
        W_residual=W_residual,
        R_margin=R_margin,
        stabilizing=(radius < 1.0 - EMSS_BOUNDARY) and (W_residual <= 10.0 * tol),
        closed_loop_radius=radius,
        iterations=iterations,
        history=history,
        monotone_violation=monotone_violation,
        gain_radii=gain_radii,
    )


def certify_stabilizing(problem: RiccatiProblem, P: MatrixField, tol: float = 1e-8) -> RiccatiSolution:
    """Re-derive all certificates for a candidate solution P.

    Never raises: an indefinite R(P) or a large residual simply yields
    stabilizing = False with the margins recorded.
    """
    if not P.is_symmetric():
        raise ValueError("P must be symmetric")
    EP, Gp, Rp = _derived_parts(problem, P)
    R_margin = float(np.linalg.eigvalsh(Rp)[:, 0].min())
    grid = P.grid
    if R_margin <= _sign_threshold(problem):
        zero_gain = MatrixField.zeros(grid, problem.m, problem.n)
        return RiccatiSolution(
            P=P, K=zero_gain, W_residual=float("inf"), R_margin=R_margin,
            stabilizing=False, closed_loop_radius=float("inf"), iterations=0,
        )
    ops = riccati_ops(problem, P)
    W_residual = ops.W.norm_inf()
    radius = closed_loop_radius(problem.A + problem.G @ ops.M, problem.kernel)
    return RiccatiSolution(
        P=P,
        K=ops.M,
        W_residual=W_residual,
        R_margin=R_margin,
        stabilizing=(radius < 1.0 - EMSS_BOUNDARY) and (W_residual <= tol),
        closed_loop_radius=radius,
        iterations=0,
    )


def check_strict_block_feasibility(problem: RiccatiProblem, P: MatrixField) -> tuple[bool, float]:
    """Strict block inequality sufficient for a stabilizing solution with Q <= 0.

    For uniformly negative definite P, checks

        [ -P + T_A(P) + Q   G(P)' ]
        [      G(P)         R(P)  ]  >> 0   at every cell.

    Returns (holds, margin) with margin the smallest block eigenvalue.
    """
    if not P.is_symmetric():
        raise ValueError("P must be symmetric")
    if P.eig_max() >= 0.0:
        raise ValueError("P must be uniformly negative definite")
    EP, Gp, Rp = _derived_parts(problem, P)
    TAP = np.einsum("ika,ikl,ilb->iab", problem.A.values, EP, problem.A.values)
    UL = -P.values + TAP + problem.Q.values
    UL = 0.5 * (UL + UL.transpose(0, 2, 1))
    n, m = problem.n, problem.m
    M = P.grid.M
    block = np.zeros((M, n + m, n + m))
    block[:, :n, :n] = UL
    block[:, :n, n:] = Gp.transpose(0, 2, 1)
    block[:, n:, :n] = Gp
    block[:, n:, n:] = Rp
    margin = float(np.linalg.eigvalsh(block)[:, 0].min())
    return margin > 0.0, margin
