"""Fractional HBVMs for Caputo fractional differential equations."""

from .basis import JacobiRule, eval_poly_sequence, gauss_jacobi_rule, gauss_legendre_rule, jacobi_recurrence
from .mesh import Mesh, build_graded, build_graded_first_step, build_uniform
from .problems import get_problem, mescd
from .solver import (EvaluationError, FdeProblem, SolveOptions, SolveResult, StepFailure, dense_eval, select_mesh,
                     solve)
from .specfun import mittag_leffler

__all__ = [
    "JacobiRule", "eval_poly_sequence", "gauss_jacobi_rule", "gauss_legendre_rule", "jacobi_recurrence",
    "Mesh", "build_graded", "build_graded_first_step", "build_uniform",
    "get_problem", "mescd",
    "EvaluationError", "FdeProblem", "SolveOptions", "SolveResult", "StepFailure", "dense_eval", "select_mesh", "solve",
    "mittag_leffler",
]

__version__ = "0.1.0"
