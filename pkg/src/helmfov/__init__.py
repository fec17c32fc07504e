"""Field-of-values analysis of preconditioned lossy Helmholtz problems.

P1 finite elements on nested simplicial meshes of the unit square or cube,
Laplace, multigrid-Laplace and two-level preconditioners, right-preconditioned
GMRES and rotation-sweep enclosures of the field of values.
"""

from .assembly import HelmholtzProblem, LossProfile, assemble, assemble_load_constant
from .fov import FovEnclosure, compute_enclosure, diagnostics
from .krylov import LinearOperator, NotSPDError, SolveReport, cg_spd, gmres_right, lanczos_max_eig
from .mesh import MeshError, MeshLevel, build_hierarchy, build_mesh, prolongation_matrix
from .multigrid import MgHierarchy, PoissonSolver, build_mg, measure_gamma, mg_for
from .precond import HelmholtzSetup, PrecondError, PrecondSpec, TwoLevelOperators

__version__ = "0.1.0"

__all__ = [
    "FovEnclosure", "HelmholtzProblem", "HelmholtzSetup", "LinearOperator", "LossProfile",
    "MeshError", "MeshLevel", "MgHierarchy", "NotSPDError", "PoissonSolver", "PrecondError",
    "PrecondSpec", "SolveReport", "TwoLevelOperators", "assemble", "assemble_load_constant",
    "build_hierarchy", "build_mesh", "build_mg", "cg_spd", "compute_enclosure", "diagnostics",
    "gmres_right", "lanczos_max_eig", "measure_gamma", "mg_for", "prolongation_matrix",
]
