"""Hybridized weak Galerkin mixed finite elements on polygonal meshes."""

from .mesh import (
    MeshError,
    PolygonalMesh,
    gen_quad_family,
    gen_rectangular,
    gen_triangular,
    read_mesh,
    refine_quad_barycentric,
    write_mesh,
)
from .problems import ProblemSpec, example1, example2, get_problem
from .hybrid_solver import NumericalError, WGSolution, assemble_schur, solve_hwg, solve_schur
from .errors import ErrorReport, compute_errors, rates

__version__ = "0.1.0"
