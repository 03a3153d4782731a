"""Mode grids, transition kernel densities, and matrix-valued fields.

The mode space is a finite union of labeled real intervals carrying the
length measure.  A midpoint-rule discretization turns it into M cells,
each with a midpoint t_i and a quadrature weight w_i.  A matrix-valued
function on the mode space is stored piecewise-constant as one matrix
per cell (a MatrixField); the transition kernel is stored as the M x M
matrix of density values g[i, j] = g(cell_i, cell_j).

Everything here is immutable after construction and safe to share
across threads.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

__all__ = [
    "GridComponent",
    "ModeGrid",
    "KernelDensity",
    "InitialDensity",
    "MatrixField",
    "build_grid",
    "build_markov_kernel_from_blocks",
    "eval_affine_field",
    "eval_scaled_field",
    "per_component_constant",
]


@dataclass(frozen=True)
class GridComponent:
    """One labeled interval of the mode space."""

    label: str
    lo: float
    hi: float
    cells: int


def _lock(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class ModeGrid:
    """Midpoint-rule discretization of a union of labeled intervals.

    Cell weights are uniform within a component, w = (hi - lo) / cells,
    so the weights of a component sum exactly to its length.
    """

    def __init__(self, components: Sequence[GridComponent]):
        if len(components) == 0:
            raise ValueError("mode grid needs at least one component")
        mids, weights, comp_of = [], [], []
        for ci, comp in enumerate(components):
            if comp.cells < 1:
                raise ValueError(f"component {comp.label!r}: cell count must be >= 1, got {comp.cells}")
            if not comp.hi > comp.lo:
                raise ValueError(f"component {comp.label!r}: degenerate interval [{comp.lo}, {comp.hi}]")
            h = (comp.hi - comp.lo) / comp.cells
            for k in range(comp.cells):
                mids.append(comp.lo + (k + 0.5) * h)
                weights.append(h)
                comp_of.append(ci)
        self.components = tuple(components)
        self.midpoints = _lock(np.asarray(mids, dtype=float))
        self.weights = _lock(np.asarray(weights, dtype=float))
        self.comp_of = _lock(np.asarray(comp_of, dtype=int))
        self.M = len(mids)

    @property
    def n_components(self) -> int:
        return len(self.components)

    @property
    def total_measure(self) -> float:
        return float(self.weights.sum())

    def component_slice(self, ci: int) -> slice:
        idx = np.flatnonzero(self.comp_of == ci)
        return slice(int(idx[0]), int(idx[-1]) + 1)

    def labels(self) -> list[str]:
        return [c.label for c in self.components]

    def __repr__(self) -> str:
        parts = ", ".join(f"{c.label}:[{c.lo},{c.hi}]x{c.cells}" for c in self.components)
        return f"ModeGrid({parts}, M={self.M})"


def build_grid(components: Sequence[tuple[str, Sequence[float], int]]) -> ModeGrid:
    """Build a grid from (label, (lo, hi), cell_count) triples."""
    comps = []
    for label, interval, cells in components:
        lo, hi = float(interval[0]), float(interval[1])
        comps.append(GridComponent(str(label), lo, hi, int(cells)))
    return ModeGrid(comps)


class KernelDensity:
    """Discretized one-step transition density of the mode chain.

    g[i, j] is the density of moving from cell i to cell j, relative to
    the grid measure, so every row must satisfy sum_j g[i, j] w_j = 1
    within ``row_stochastic_tolerance``.
    """

    def __init__(self, grid: ModeGrid, g: np.ndarray, row_stochastic_tolerance: float = 1e-6):
        g = np.asarray(g, dtype=float)
        if g.shape != (grid.M, grid.M):
            raise ValueError(f"kernel density must be {grid.M}x{grid.M}, got {g.shape}")
        if np.any(g < 0):
            i, j = np.argwhere(g < 0)[0]
            raise ValueError(f"kernel density negative at ({i}, {j}): {g[i, j]}")
        row_sums = g @ grid.weights
        bad = np.abs(row_sums - 1.0) > row_stochastic_tolerance
        if np.any(bad):
            i = int(np.flatnonzero(bad)[0])
            raise ValueError(
                f"kernel row {i} integrates to {row_sums[i]:.12g}, "
                f"off by more than {row_stochastic_tolerance:g}"
            )
        self.grid = grid
        self.g = _lock(g.copy())
        self.row_stochastic_tolerance = row_stochastic_tolerance
        # cached mixing matrices: rows for E(U)(i) = sum_j g[i,j] w_j U[j],
        # transposed-and-weighted form for L(V)(i) = sum_j g[j,i] w_j (.)[j]
        self._mix_forward = _lock(g * grid.weights[None, :])
        self._mix_adjoint = _lock(g.T * grid.weights[None, :])

    @property
    def M(self) -> int:
        return self.grid.M

    def column_mass(self) -> np.ndarray:
        """Incoming mass per cell, sum_i g[i, j] w_i."""
        return self.grid.weights @ self.g

    def mix_forward(self, stacked: np.ndarray) -> np.ndarray:
        """sum_j g[i,j] w_j X[j] for a stacked (M, r, c) array."""
        return np.einsum("ij,jab->iab", self._mix_forward, stacked)

    def mix_adjoint(self, stacked: np.ndarray) -> np.ndarray:
        """sum_j g[j,i] w_j X[j] for a stacked (M, r, c) array."""
        return np.einsum("ij,jab->iab", self._mix_adjoint, stacked)


def build_markov_kernel_from_blocks(
    grid: ModeGrid,
    block_probs: np.ndarray,
    row_tolerance: float = 1e-9,
) -> KernelDensity:
    """Kernel whose density is constant on component blocks.

    block_probs[a, b] is the probability of jumping from component a to
    component b; the density on block b is that probability divided by
    the length of component b, which makes the rows integrate to one
    exactly (up to rounding).
    """
    P = np.asarray(block_probs, dtype=float)
    nc = grid.n_components
    if P.shape != (nc, nc):
        raise ValueError(f"block_probs must be {nc}x{nc}, got {P.shape}")
    row_sums = P.sum(axis=1)
    if np.any(np.abs(row_sums - 1.0) > row_tolerance):
        a = int(np.argmax(np.abs(row_sums - 1.0)))
        raise ValueError(f"block_probs row {a} sums to {row_sums[a]:.12g}, not 1")
    lengths = np.array([c.hi - c.lo for c in grid.components])
    dens = P / lengths[None, :]
    g = dens[np.ix_(grid.comp_of, grid.comp_of)]
    return KernelDensity(grid, g, row_stochastic_tolerance=row_tolerance)


class InitialDensity:
    """Density of the initial mode distribution relative to the grid measure."""

    def __init__(self, grid: ModeGrid, values: np.ndarray, tolerance: float = 1e-9):
        values = np.asarray(values, dtype=float)
        if values.shape != (grid.M,):
            raise ValueError(f"initial density must have length {grid.M}, got {values.shape}")
        if np.any(values < 0):
            raise ValueError("initial density has negative entries")
        mass = float(values @ grid.weights)
        if abs(mass - 1.0) > tolerance:
            raise ValueError(f"initial density integrates to {mass:.12g}, not 1")
        self.grid = grid
        self.values = _lock(values.copy())

    @classmethod
    def uniform(cls, grid: ModeGrid) -> "InitialDensity":
        return cls(grid, np.full(grid.M, 1.0 / grid.total_measure))

    def cell_probs(self) -> np.ndarray:
        p = self.values * self.grid.weights
        return p / p.sum()

    def is_positive(self) -> bool:
        return bool(np.all(self.values > 0))


class MatrixField:
    """A matrix-valued function on the mode space, one matrix per cell."""

    __slots__ = ("grid", "values")

    def __init__(self, grid: ModeGrid, values: np.ndarray):
        values = np.asarray(values, dtype=float)
        if values.ndim == 1:
            values = values[:, None, None]
        if values.ndim != 3 or values.shape[0] != grid.M:
            raise ValueError(f"field values must be ({grid.M}, rows, cols), got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("field contains non-finite entries")
        self.grid = grid
        self.values = _lock(np.array(values, dtype=float))

    # -- constructors -------------------------------------------------
    @classmethod
    def zeros(cls, grid: ModeGrid, rows: int, cols: int) -> "MatrixField":
        return cls(grid, np.zeros((grid.M, rows, cols)))

    @classmethod
    def identity(cls, grid: ModeGrid, n: int) -> "MatrixField":
        return cls(grid, np.tile(np.eye(n), (grid.M, 1, 1)))

    @classmethod
    def constant(cls, grid: ModeGrid, mat: np.ndarray) -> "MatrixField":
        mat = np.atleast_2d(np.asarray(mat, dtype=float))
        return cls(grid, np.tile(mat, (grid.M, 1, 1)))

    @classmethod
    def from_function(cls, grid: ModeGrid, fn: Callable[[str, float], np.ndarray]) -> "MatrixField":
        """Evaluate fn(component_label, midpoint) at every cell."""
        labels = grid.labels()
        cells = [np.atleast_2d(np.asarray(fn(labels[grid.comp_of[i]], grid.midpoints[i]), dtype=float))
                 for i in range(grid.M)]
        return cls(grid, np.stack(cells))

    # -- shape and views ----------------------------------------------
    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape[1], self.values.shape[2]

    @property
    def rows(self) -> int:
        return self.values.shape[1]

    @property
    def cols(self) -> int:
        return self.values.shape[2]

    def cell(self, i: int) -> np.ndarray:
        return self.values[i]

    def transpose_cells(self) -> "MatrixField":
        return MatrixField(self.grid, self.values.transpose(0, 2, 1))

    # -- arithmetic (cell-wise) ----------------------------------------
    def _check_same(self, other: "MatrixField") -> None:
        if self.grid is not other.grid and self.grid.M != other.grid.M:
            raise ValueError("fields live on different grids")
        if self.shape != other.shape:
            raise ValueError(f"field shape mismatch: {self.shape} vs {other.shape}")

    def __add__(self, other: "MatrixField") -> "MatrixField":
        self._check_same(other)
        return MatrixField(self.grid, self.values + other.values)

    def __sub__(self, other: "MatrixField") -> "MatrixField":
        self._check_same(other)
        return MatrixField(self.grid, self.values - other.values)

    def __neg__(self) -> "MatrixField":
        return MatrixField(self.grid, -self.values)

    def __mul__(self, scalar: float) -> "MatrixField":
        return MatrixField(self.grid, self.values * float(scalar))

    __rmul__ = __mul__

    def __matmul__(self, other: "MatrixField") -> "MatrixField":
        if self.cols != other.rows:
            raise ValueError(f"cell matmul shape mismatch: {self.shape} @ {other.shape}")
        return MatrixField(self.grid, np.matmul(self.values, other.values))

    def symmetrize(self) -> "MatrixField":
        return MatrixField(self.grid, 0.5 * (self.values + self.values.transpose(0, 2, 1)))

    # -- norms and spectra ----------------------------------------------
    def norm_inf(self) -> float:
        """max over cells of the spectral matrix norm."""
        if self.grid.M == 0:
            return 0.0
        return float(np.linalg.norm(self.values, ord=2, axis=(1, 2)).max())

    def norm_l1(self) -> float:
        """integral of the spectral matrix norm over the mode space."""
        return float(self.grid.weights @ np.linalg.norm(self.values, ord=2, axis=(1, 2)))

    def is_symmetric(self, tol: float = 1e-9) -> bool:
        if self.rows != self.cols:
            return False
        scale = max(1.0, float(np.abs(self.values).max()))
        return bool(np.abs(self.values - self.values.transpose(0, 2, 1)).max() <= tol * scale)

    def eigvals_sym(self) -> np.ndarray:
        """Per-cell eigenvalues (ascending); symmetric square fields only."""
        if self.rows != self.cols:
            raise ValueError("eigenvalues require a square field")
        return np.linalg.eigvalsh(0.5 * (self.values + self.values.transpose(0, 2, 1)))

    def eig_min(self) -> float:
        return float(self.eigvals_sym()[:, 0].min())

    def eig_max(self) -> float:
        return float(self.eigvals_sym()[:, -1].max())

    def allclose(self, other: "MatrixField", tol: float = 1e-10) -> bool:
        self._check_same(other)
        return bool(np.abs(self.values - other.values).max() <= tol)

    def __repr__(self) -> str:
        return f"MatrixField(M={self.grid.M}, shape={self.shape})"


def eval_affine_field(grid: ModeGrid, per_component: Sequence[tuple[np.ndarray, np.ndarray]]) -> MatrixField:
    """Field whose cell value is M1 + t (M2 - M1) at the cell midpoint t.

    One (M1, M2) matrix pair per grid component.
    """
    if len(per_component) != grid.n_components:
        raise ValueError(f"need {grid.n_components} matrix pairs, got {len(per_component)}")
    pairs = []
    shape = None
    for m1, m2 in per_component:
        m1 = np.atleast_2d(np.asarray(m1, dtype=float))
        m2 = np.atleast_2d(np.asarray(m2, dtype=float))
        if m1.shape != m2.shape:
            raise ValueError(f"affine pair shape mismatch: {m1.shape} vs {m2.shape}")
        if shape is None:
            shape = m1.shape
        elif m1.shape != shape:
            raise ValueError(f"affine pairs disagree across components: {m1.shape} vs {shape}")
        pairs.append((m1, m2))
    t = grid.midpoints
    vals = np.empty((grid.M,) + shape)
    for i in range(grid.M):
        m1, m2 = pairs[grid.comp_of[i]]
        vals[i] = m1 + t[i] * (m2 - m1)
    return MatrixField(grid, vals)


def eval_scaled_field(grid: ModeGrid, per_component: Sequence[np.ndarray]) -> MatrixField:
    """Field whose cell value is t * M at the cell midpoint t."""
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in per_component]
    zero = np.zeros_like(mats[0])
    return eval_affine_field(grid, [(zero, m) for m in mats])


def per_component_constant(grid: ModeGrid, per_component: Sequence[np.ndarray]) -> MatrixField:
    """Field constant on each component."""
    mats = [np.atleast_2d(np.asarray(m, dtype=float)) for m in per_component]
    return eval_affine_field(grid, [(m, m) for m in mats])
