"""The fundamental linear operators on matrix fields.

For a coefficient field Q and kernel density g with cell weights w:

    E(U)(i)   = sum_j g[i,j] w_j U[j]
    T_Q(U)(i) = Q[i]' E(U)(i) Q[i]
    L_Q(V)(i) = sum_j g[j,i] w_j Q[j] V[j] Q[j]'
    <V; U>    = sum_i w_i trace(V[i]' U[i])

T and L are adjoint to each other under the pairing; both preserve the
cone of positive semidefinite fields.  All functions are pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConvergenceError
from .fields import KernelDensity, MatrixField

__all__ = [
    "apply_E",
    "apply_T",
    "apply_L",
    "pairing",
    "OperatorHandle",
    "SpectralRadiusResult",
    "spectral_radius",
    "dense_operator_matrix",
    "sqrt_field",
    "DENSE_LIMIT",
]

# largest M * n^2 for which the dense matrix representation is built
DENSE_LIMIT = 400


def apply_E(kernel: KernelDensity, U: MatrixField) -> MatrixField:
    """Kernel average of a field: E(U)(i) = sum_j g[i,j] w_j U[j]."""
    return MatrixField(U.grid, kernel.mix_forward(U.values))


def apply_T(Q: MatrixField, kernel: KernelDensity, U: MatrixField) -> MatrixField:
    """T_Q(U)(i) = Q[i]' E(U)(i) Q[i].

    Q may be rectangular n x m (U must then be n x n; the result is m x m).
    """
    if U.rows != U.cols or U.rows != Q.rows:
        raise ValueError(f"T needs square U matching Q rows: Q {Q.shape}, U {U.shape}")
    EU = kernel.mix_forward(U.values)
    out = np.einsum("ika,ikl,ilb->iab", Q.values, EU, Q.values)
    return MatrixField(U.grid, out)


def apply_L(Q: MatrixField, kernel: KernelDensity, V: MatrixField) -> MatrixField:
    """L_Q(V)(i) = sum_j g[j,i] w_j Q[j] V[j] Q[j]'."""
    if V.rows != V.cols or V.rows != Q.cols:
        raise ValueError(f"L needs square V matching Q columns: Q {Q.shape}, V {V.shape}")
    sandwich = np.einsum("iak,ikl,ibl->iab", Q.values, V.values, Q.values)
    return MatrixField(V.grid, kernel.mix_adjoint(sandwich))


def pairing(V: MatrixField, U: MatrixField) -> float:
    """<V; U> = integral of trace(V' U) over the mode space."""
    if V.shape != U.shape:
        raise ValueError(f"pairing shape mismatch: {V.shape} vs {U.shape}")
    return float(np.einsum("i,iab,iab->", V.grid.weights, V.values, U.values))


@dataclass(frozen=True)
class OperatorHandle:
    """One of the two moment operators, bound to its coefficient field."""

    kind: str  # "L" or "T"
    Q: MatrixField
    kernel: KernelDensity

    def __post_init__(self):
        if self.kind not in ("L", "T"):
            raise ValueError(f"operator kind must be 'L' or 'T', got {self.kind!r}")
        if self.Q.rows != self.Q.cols:
            raise ValueError("spectral analysis needs a square coefficient field")

    @property
    def dim(self) -> int:
        return self.Q.grid.M * self.Q.rows ** 2

    def apply(self, X: MatrixField) -> MatrixField:
        if self.kind == "L":
            return apply_L(self.Q, self.kernel, X)
        return apply_T(self.Q, self.kernel, X)


@dataclass(frozen=True)
class SpectralRadiusResult:
    value: float
    residual: float
    iterations: int
    converged: bool
    method: str  # "power" or "dense"

    def __float__(self) -> float:
        return self.value


def dense_operator_matrix(handle: OperatorHandle) -> np.ndarray:
    """Matrix of the operator acting on row-major vectorized fields.

    Size (M n^2) x (M n^2); intended for small instances (tests, fallback).
    """
    M = handle.Q.grid.M
    n = handle.Q.rows
    d = n * n
    g = handle.kernel.g
    w = handle.Q.grid.weights
    Qv = handle.Q.values
    out = np.zeros((M * d, M * d))
    for i in range(M):
        for j in range(M):
            if handle.kind == "L":
                coeff = g[j, i] * w[j]
                block = np.kron(Qv[j], Qv[j])
            else:
                coeff = g[i, j] * w[j]
                block = np.kron(Qv[i].T, Qv[i].T)
            if coeff != 0.0:
                out[i * d:(i + 1) * d, j * d:(j + 1) * d] = coeff * block
    return out


def spectral_radius(
    handle: OperatorHandle,
    tol: float = 1e-10,
    max_iter: int = 10000,
    dense_fallback: bool = True,
) -> SpectralRadiusResult:
    """Spectral radius of the moment operator by power iteration.

    Starts from the all-identity field, which lies in the interior of
    the positive cone the operator preserves, so the iteration homes in
    on the dominant (Perron) eigenvalue.  If the iteration has not
    settled after max_iter steps and the vectorized dimension is at
    most DENSE_LIMIT, falls back to a dense eigensolve.
    """
    grid = handle.Q.grid
    n = handle.Q.rows
    x = np.tile(np.eye(n), (grid.M, 1, 1))
    x /= np.linalg.norm(x.ravel())
    lam_prev = None
    lam = 0.0
    residual = np.inf
    streak = 0
    its = 0
    for its in range(1, max_iter + 1):
        y = handle.apply(MatrixField(grid, x)).values
        lam = float(np.linalg.norm(y.ravel()))
        if lam == 0.0:
            return SpectralRadiusResult(0.0, 0.0, its, True, "power")
        residual = float(np.linalg.norm((y - lam * x).ravel()))
        if lam_prev is not None and abs(lam - lam_prev) <= tol * max(lam, 1e-30):
            streak += 1
            if streak >= 5:
                return SpectralRadiusResult(lam, residual, its, True, "power")
        else:
            streak = 0
        lam_prev = lam
        x = y / lam
    if dense_fallback and handle.dim <= DENSE_LIMIT:
        eig = np.linalg.eigvals(dense_operator_matrix(handle))
        return SpectralRadiusResult(float(np.abs(eig).max()), 0.0, its, True, "dense")
    return SpectralRadiusResult(lam, residual, its, False, "power")


def sqrt_field(
    P: MatrixField,
    tol: float = 1e-12,
    max_iter: int = 1000,
    indefinite_tol: float = 1e-9,
) -> MatrixField:
    """Unique positive-semidefinite square root of a PSD field.

    Runs the quadratic fixed-point iteration

        Q_0 = (I - P/|P|) / 2,   Q_k = (I - P/|P| + Q_{k-1}^2) / 2,

    with |P| the sup spectral norm, and returns S = |P|^(1/2) (I - Q).
    The iterates are measurable polynomials in P, increase monotonically,
    and stay between 0 and I.  Stops when the sup norm of the increment
    drops below tol; hitting max_iter first is an error (this happens
    for nearly singular P, whose root the iteration approaches only
    sublinearly).

    Cells whose smallest eigenvalue is negative but within
    indefinite_tol * max(1, |P|) are clamped onto the PSD cone first;
    anything more indefinite is rejected.
    """
    if not P.is_symmetric():
        raise ValueError("sqrt_field needs a symmetric field")
    norm = P.norm_inf()
    evals = P.eigvals_sym()
    floor = -indefinite_tol * max(1.0, norm)
    if evals[:, 0].min() < floor:
        i = int(evals[:, 0].argmin())
        raise ValueError(f"field is indefinite beyond tolerance (eig {evals[i, 0]:.3g} at cell {i})")
    if norm == 0.0:
        return MatrixField(P.grid, P.values.copy())
    vals = 0.5 * (P.values + P.values.transpose(0, 2, 1))
    if evals[:, 0].min() < 0.0:
        w, V = np.linalg.eigh(vals)
        w = np.clip(w, 0.0, None)
        vals = np.einsum("iak,ik,ibk->iab", V, w, V)
    n = P.rows
    eye = np.tile(np.eye(n), (P.grid.M, 1, 1))
    base = 0.5 * (eye - vals / norm)
    Q = base.copy()
    for _ in range(max_iter):
        Q_next = base + 0.5 * np.matmul(Q, Q)
        step = float(np.abs(np.linalg.eigvalsh(Q_next - Q)).max())
        Q = Q_next
        if step < tol:
            S = np.sqrt(norm) * (eye - Q)
            return MatrixField(P.grid, 0.5 * (S + S.transpose(0, 2, 1)))
    raise ConvergenceError(
        f"square-root iteration did not reach {tol:g} within {max_iter} steps "
        "(field is nearly singular)"
    )
