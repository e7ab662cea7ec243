"""LP relaxations through scipy's HiGHS dual simplex, for instances too large for the dense tableau."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from qkdnet.solver.lp import (
    EQ, GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED,
    LinearProgram, MilpSolution, NumericalBreakdown,
)


def solve_lp_highs(lp: LinearProgram) -> MilpSolution:
    senses = np.asarray(lp.senses)
    le, ge, eq = senses == LE, senses == GE, senses == EQ
    A_ub = sp.vstack([lp.A[le], -lp.A[ge]]).tocsr()
    b_ub = np.concatenate([lp.b[le], -lp.b[ge]])
    bounds = np.column_stack([lp.lower, lp.upper])
    res = linprog(-lp.c,
                  A_ub=A_ub if A_ub.shape[0] else None, b_ub=b_ub if b_ub.size else None,
                  A_eq=lp.A[eq] if eq.any() else None, b_eq=lp.b[eq] if eq.any() else None,
                  bounds=bounds, method="highs-ds",
                  options={"presolve": True, "primal_feasibility_tolerance": 1e-9,
                           "dual_feasibility_tolerance": 1e-9})
    if res.status == 2:
        return MilpSolution(INFEASIBLE, iterations=int(res.nit))
    if res.status == 3:
        return MilpSolution(UNBOUNDED, iterations=int(res.nit))
    if res.status != 0:
        raise NumericalBreakdown(f"HiGHS: {res.message}")
    x = np.clip(res.x, lp.lower, lp.upper)
    rc = -(res.lower.marginals + res.upper.marginals)
    return MilpSolution(OPTIMAL, float(lp.c @ x), x, iterations=int(res.nit), reduced_costs=rc)
