"""Barrier solver for the per-slot power-allocation problems."""

from .barrier import NumericalFailure, Solution, SolverConfig, kkt_residual, solve
from .kernels import BACKEND
from .problem import (
    ConvexProblem,
    InfeasibleProblemError,
    ProblemFormatError,
    build_dl_problem,
    build_ul_problem,
    concat_problems,
    dump_problem,
    load_problem,
)

__all__ = [
    "BACKEND", "ConvexProblem", "InfeasibleProblemError", "NumericalFailure",
    "ProblemFormatError", "Solution", "SolverConfig", "build_dl_problem",
    "build_ul_problem", "concat_problems", "dump_problem", "kkt_residual",
    "load_problem", "solve",
]
