"""Determinant-maximization solver and the broadcast-channel minimax driver."""
from .barrier import Solution, SolverError, Status, solve_maxdet
from .kkt import KKTReport, check_kkt
from .minimax import MinimaxResult, inner_max, solve_minimax_bc
from .program import LinExpr, MatExpr, MaxDetProgram, PsdVar, ScalarVar

__all__ = [
    "KKTReport",
    "LinExpr",
    "MatExpr",
    "MaxDetProgram",
    "MinimaxResult",
    "PsdVar",
    "ScalarVar",
    "Solution",
    "SolverError",
    "Status",
    "check_kkt",
    "inner_max",
    "solve_maxdet",
    "solve_minimax_bc",
]
