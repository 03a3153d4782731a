"""The jump-linear plant: coefficient fields plus mode-chain data.

    x(k+1) = A(m) x(k) + B(m) u(k) + F(m) v(k)
    z(k)   = [C(m) x(k); D(m) u(k)],   m = mode at step k.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fields import InitialDensity, KernelDensity, MatrixField, ModeGrid

__all__ = ["SystemModel"]


@dataclass(frozen=True)
class SystemModel:
    grid: ModeGrid
    kernel: KernelDensity
    nu0: InitialDensity
    A: MatrixField
    B: MatrixField
    C: MatrixField
    D: MatrixField
    F: MatrixField

    def __post_init__(self):
        n = self.A.rows
        if self.A.shape != (n, n):
            raise ValueError(f"A must be square, got {self.A.shape}")
        if self.B.rows != n:
            raise ValueError(f"B must have {n} rows, got {self.B.shape}")
        if self.C.cols != n:
            raise ValueError(f"C must have {n} columns, got {self.C.shape}")
        if self.F.rows != n:
            raise ValueError(f"F must have {n} rows, got {self.F.shape}")
        if self.D.cols != self.B.cols:
            raise ValueError(f"D must have {self.B.cols} columns, got {self.D.shape}")
        for name in ("A", "B", "C", "D", "F"):
            fld: MatrixField = getattr(self, name)
            if fld.grid.M != self.grid.M:
                raise ValueError(f"field {name} lives on a different grid")
        # per-cell D'D = I, required for the quadratic output cost
        dtd = np.matmul(self.D.values.transpose(0, 2, 1), self.D.values)
        eye = np.eye(self.m)
        err = np.abs(dtd - eye[None]).max() if self.m else 0.0
        if err > 1e-9:
            i = int(np.abs(dtd - eye[None]).max(axis=(1, 2)).argmax())
            raise ValueError(f"D'D differs from identity by {err:.3g} (first at cell {i})")

    @property
    def n(self) -> int:
        return self.A.rows

    @property
    def m(self) -> int:
        return self.B.cols

    @property
    def p(self) -> int:
        return self.C.rows

    @property
    def q(self) -> int:
        return self.D.rows

    @property
    def r(self) -> int:
        return self.F.cols

    def output_weight(self) -> MatrixField:
        """C'C, the state weight of the quadratic output cost."""
        return self.C.transpose_cells() @ self.C
