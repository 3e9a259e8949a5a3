"""Equal-order pressure-stabilized virtual elements for coupled Stokes / Poisson-Boltzmann flow."""

from .forms import Coefficients, StabParams, build_discretization
from .mesh import (PolygonalMesh, build_mesh, check_regularity, generate_composite_hanging,
                   generate_distorted_hex, generate_nonconvex, generate_structured, generate_voronoi,
                   read_mesh, write_mesh)
from .polyspace import build_dof_map
from .solver import BoundaryData, SolutionState, SolverConfig, coupled_fixed_point, solve_problem
from .verification import error_norms, example1_case, run_convergence

__all__ = [
    "BoundaryData", "Coefficients", "PolygonalMesh", "SolutionState", "SolverConfig", "StabParams",
    "build_discretization", "build_dof_map", "build_mesh", "check_regularity", "coupled_fixed_point",
    "error_norms", "example1_case", "generate_composite_hanging", "generate_distorted_hex",
    "generate_nonconvex", "generate_structured", "generate_voronoi", "read_mesh", "run_convergence",
    "solve_problem", "write_mesh",
]
