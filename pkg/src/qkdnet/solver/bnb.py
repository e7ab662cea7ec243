"""Exact branch-and-bound over LP relaxations."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from qkdnet.solver.highs import solve_lp_highs
from qkdnet.solver.lp import (
    INFEASIBLE, OPTIMAL, UNBOUNDED,
    LinearProgram, MilpSolution, NodeLimitExceeded,
)
from qkdnet.solver.simplex import SimplexOptions, solve_lp_simplex

log = logging.getLogger(__name__)

ENGINES = ("auto", "simplex", "highs")
# dense tableau cells above which "auto" hands LP relaxations to HiGHS
AUTO_DENSE_LIMIT = 1_500_000


@dataclass(frozen=True)
class SolverOptions:
    engine: str = "auto"
    node_limit: int = 1_000_000
    int_tol: float = 1e-6
    pivot_tol: float = 1e-9
    feas_tol: float = 1e-7

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.node_limit < 1:
            raise ValueError("node_limit must be positive")


def _pick_engine(lp: LinearProgram, engine: str) -> str:
    if engine != "auto":
        return engine
    cells = lp.num_rows * (lp.num_vars + 2 * lp.num_rows)
    return "simplex" if cells <= AUTO_DENSE_LIMIT else "highs"


def solve_lp(lp: LinearProgram, options: SolverOptions | None = None) -> MilpSolution:
    """Solve the continuous problem; returns an optimal basic solution or the failure status."""
    o = options or SolverOptions()
    if _pick_engine(lp, o.engine) == "simplex":
        sol = solve_lp_simplex(lp, SimplexOptions(pivot_tol=o.pivot_tol, feas_tol=o.feas_tol))
    else:
        sol = solve_lp_highs(lp)
    sol.nodes = 1
    return sol


def _step_floor(value: float, step: float | None) -> float:
    if step is None:
        return value
    return step * math.floor(value / step + 1e-9)


def solve_milp(lp: LinearProgram, integer_vars: Iterable[int],
               options: SolverOptions | None = None, *,
               incumbent: np.ndarray | None = None,
               objective_step: float | None = None) -> MilpSolution:
    """Maximize ``lp`` with the listed variables restricted to integers.

    Best-bound search, branching on the most fractional variable (lowest
    index on ties). Among nodes with equal bound the deepest is expanded
    first, which dives towards an incumbent.

    ``incumbent`` seeds the search with a known feasible point. When the
    caller knows every integer-feasible objective value is a multiple of
    ``objective_step``, node bounds are rounded down to that grid before
    pruning.
    """
    o = options or SolverOptions()
    ints = np.array(sorted(set(int(i) for i in integer_vars)), dtype=int)
    lower, upper = lp.lower.copy(), lp.upper.copy()
    if ints.size:
        lower[ints] = np.ceil(lower[ints] - o.int_tol)
        upper[ints] = np.floor(upper[ints] + o.int_tol)

    nodes = 0
    iterations = 0

    def relax(lo, hi):
        nonlocal nodes, iterations
        nodes += 1
        sol = solve_lp(lp.with_bounds(lo, hi), o)
        iterations += sol.iterations
        return sol

    best_x: np.ndarray | None = None
    best_obj = -math.inf

    def offer(x):
        nonlocal best_x, best_obj
        x = x.copy()
        x[ints] = np.round(x[ints])
        if ints.size < lp.num_vars:
            # re-optimize the continuous part with the integers pinned
            lo, hi = lower.copy(), upper.copy()
            lo[ints] = hi[ints] = x[ints]
            fixed = solve_lp(lp.with_bounds(lo, hi), o)
            if not fixed.optimal:
                return
            x = fixed.x
            x[ints] = np.round(x[ints])
        if not lp.is_feasible(x, 1e-6):
            return
        obj = float(lp.c @ x)
        if obj > best_obj + 1e-12 * (1.0 + abs(obj)):
            best_x, best_obj = x, obj
            log.debug("incumbent %.12g after %d nodes", obj, nodes)

    if incumbent is not None:
        x0 = np.asarray(incumbent, dtype=float)
        if x0.shape == (lp.num_vars,) and np.all(np.abs(x0[ints] - np.round(x0[ints])) <= o.int_tol):
            offer(x0)

    def prunable(bound):
        return _step_floor(bound, objective_step) <= best_obj + 1e-9 * (1.0 + abs(best_obj))

    root = relax(lower, upper)
    if root.status == INFEASIBLE:
        return MilpSolution(INFEASIBLE, nodes=nodes, iterations=iterations)
    if root.status == UNBOUNDED:
        return MilpSolution(UNBOUNDED, nodes=nodes, iterations=iterations)

    seq = 0
    heap = [(-_step_floor(root.objective, objective_step), 0, seq, lower, upper, root)]
    while heap:
        neg_bound, neg_depth, _, lo, hi, sol = heapq.heappop(heap)
        if prunable(-neg_bound):
            break
        x = sol.x
        frac = np.abs(x[ints] - np.round(x[ints]))
        if not np.any(frac > o.int_tol):
            offer(x)
            continue
        dist = np.minimum(x[ints] - np.floor(x[ints]), np.ceil(x[ints]) - x[ints])
        dist[frac <= o.int_tol] = -1.0
        j = ints[int(np.argmax(dist))]
        value = x[j]

        down_hi = hi.copy()
        down_hi[j] = math.floor(value)
        up_lo = lo.copy()
        up_lo[j] = math.ceil(value)
        children = [(lo, down_hi), (up_lo, hi)]
        if value - math.floor(value) >= 0.5:
            children.reverse()
        for c_lo, c_hi in children:
            if nodes >= o.node_limit:
                partial = None
                if best_x is not None:
                    partial = MilpSolution(OPTIMAL, best_obj, best_x, nodes=nodes,
                                           gap=float(-heap[0][0] - best_obj) if heap else 0.0,
                                           iterations=iterations)
                raise NodeLimitExceeded(f"branch-and-bound hit the node limit of {o.node_limit}",
                                        partial)
            if c_lo[j] > c_hi[j]:
                continue
            child = relax(c_lo, c_hi)
            if child.status != OPTIMAL or prunable(child.objective):
                continue
            seq += 1
            heapq.heappush(heap, (-_step_floor(child.objective, objective_step),
                                  neg_depth - 1, seq, c_lo, c_hi, child))

    if best_x is None:
        return MilpSolution(INFEASIBLE, nodes=nodes, iterations=iterations)
    return MilpSolution(OPTIMAL, best_obj, best_x, nodes=nodes, gap=0.0, iterations=iterations)
