"""Quasistatic antiplane frictional contact with adhesion on P1 triangles."""
from .bonding import BetaTrajectory, TimeGrid, picard_solve, rk4_integrate
from .fem import Space, estimate_trace_constant, norm
from .laws import AdhesionSpec, FrictionSpec, check_hypotheses, derive_constants
from .mesh import Mesh, load_mesh, read_mesh, refine_uniform, unit_square, validate_partition
from .scheme import CoupledProblem, SchemeConfig, check_smallness, fit_contraction, run_coupled, uniqueness_probe
from .vi_solver import InnerProblem, optimality_measure, solve_inner

__version__ = "0.1.0"

__all__ = [
    "AdhesionSpec", "BetaTrajectory", "CoupledProblem", "FrictionSpec", "InnerProblem", "Mesh", "SchemeConfig",
    "Space", "TimeGrid", "check_hypotheses", "check_smallness", "derive_constants", "estimate_trace_constant",
    "fit_contraction", "load_mesh", "norm", "optimality_measure", "picard_solve", "read_mesh", "refine_uniform",
    "rk4_integrate", "run_coupled", "solve_inner", "uniqueness_probe", "unit_square", "validate_partition",
]
