"""Desk-scale exact MILP: dense primal simplex, branch-and-bound, LP-format files."""

from qkdnet.solver.bnb import ENGINES, SolverOptions, solve_lp, solve_milp
from qkdnet.solver.lp import (
    EQ, GE, INFEASIBLE, LE, OPTIMAL, UNBOUNDED,
    LinearProgram, MilpSolution, NodeLimitExceeded, NumericalBreakdown, SolverError,
)
from qkdnet.solver.lpfile import LpFormatError, export_lp_file, format_lp, parse_lp, read_lp_file
from qkdnet.solver.simplex import SimplexOptions, solve_lp_simplex

__all__ = [
    "ENGINES", "EQ", "GE", "INFEASIBLE", "LE", "OPTIMAL", "UNBOUNDED",
    "LinearProgram", "LpFormatError", "MilpSolution", "NodeLimitExceeded",
    "NumericalBreakdown", "SimplexOptions", "SolverError", "SolverOptions",
    "export_lp_file", "format_lp", "parse_lp", "read_lp_file",
    "solve_lp", "solve_lp_simplex", "solve_milp",
]
