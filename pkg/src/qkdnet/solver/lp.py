from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

LE, EQ, GE = "<=", "=", ">="
SENSES = (LE, EQ, GE)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"


class SolverError(RuntimeError):
    pass


class NumericalBreakdown(SolverError):
    pass


class NodeLimitExceeded(SolverError):
    def __init__(self, message: str, incumbent: MilpSolution | None = None):
        super().__init__(message)
        self.incumbent = incumbent


@dataclass
class LinearProgram:
    """maximize c.x  s.t.  A x (sense) b,  lower <= x <= upper."""

    c: np.ndarray
    A: sp.csr_matrix
    senses: tuple[str, ...]
    b: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    var_names: list[str] | None = None
    row_names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.b = np.asarray(self.b, dtype=float)
        self.A = sp.csr_matrix(self.A, dtype=float)
        n = self.c.shape[0]
        self.lower = np.broadcast_to(np.asarray(self.lower, dtype=float), (n,)).copy()
        self.upper = np.broadcast_to(np.asarray(self.upper, dtype=float), (n,)).copy()
        self.senses = tuple(self.senses)
        m = self.b.shape[0]
        if self.A.shape != (m, n):
            raise ValueError(f"constraint matrix is {self.A.shape}, expected {(m, n)}")
        if len(self.senses) != m:
            raise ValueError("one sense per constraint row is required")
        if any(s not in SENSES for s in self.senses):
            raise ValueError(f"senses must be drawn from {SENSES}")
        for name, arr in (("c", self.c), ("b", self.b), ("A", self.A.data)):
            if not np.all(np.isfinite(arr)):
                raise ValueError(f"non-finite entry in {name}")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("NaN variable bound")
        if self.var_names is not None and len(self.var_names) != n:
            raise ValueError("one name per variable is required")
        if self.row_names is not None and len(self.row_names) != m:
            raise ValueError("one name per row is required")

    @property
    def num_vars(self) -> int:
        return self.c.shape[0]

    @property
    def num_rows(self) -> int:
        return self.b.shape[0]

    @classmethod
    def from_dense(cls, c, rows: Sequence[tuple[Sequence[float], str, float]],
                   lower=0.0, upper=np.inf, **kw) -> LinearProgram:
        """Convenience constructor from ``(coefficients, sense, rhs)`` rows."""
        c = np.asarray(c, dtype=float)
        if rows:
            A = np.array([r[0] for r in rows], dtype=float).reshape(len(rows), c.size)
        else:
            A = np.zeros((0, c.size))
        return cls(c, sp.csr_matrix(A), tuple(r[1] for r in rows),
                   np.array([r[2] for r in rows], dtype=float), lower, upper, **kw)

    def with_bounds(self, lower: np.ndarray, upper: np.ndarray) -> LinearProgram:
        return LinearProgram(self.c, self.A, self.senses, self.b, lower, upper,
                             self.var_names, self.row_names)

    def residuals(self, x: np.ndarray) -> np.ndarray:
        """Constraint violation per row (0 when satisfied), bounds included as extra entries."""
        ax = self.A @ x
        sense = np.asarray(self.senses)
        viol = np.where(sense == LE, np.maximum(ax - self.b, 0.0),
                        np.where(sense == GE, np.maximum(self.b - ax, 0.0), np.abs(ax - self.b)))
        bound_viol = np.maximum(self.lower - x, 0.0) + np.maximum(x - self.upper, 0.0)
        return np.concatenate([viol, bound_viol])

    def is_feasible(self, x: np.ndarray, tol: float = 1e-7) -> bool:
        """Residuals within ``tol`` scaled by 1 + |rhs| (rows) or 1 + |bound| (bounds)."""
        finite = lambda v: np.where(np.isfinite(v), np.abs(v), 0.0)  # noqa: E731
        scale = np.concatenate([1.0 + np.abs(self.b),
                                1.0 + np.maximum(finite(self.lower), finite(self.upper))])
        return bool(np.all(self.residuals(x) <= tol * scale))


@dataclass
class MilpSolution:
    status: str
    objective: float = float("nan")
    x: np.ndarray = field(default_factory=lambda: np.zeros(0))
    nodes: int = 0
    gap: float = 0.0
    iterations: int = 0
    reduced_costs: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == OPTIMAL
