"""Divergence-free mixed finite element solver for steady MHD kinematics.

The package discretizes the current density / electric potential / magnetic
vector potential / gauge multiplier system on lattice tetrahedral meshes of
the unit cube with H(div), piecewise-constant, edge-element, and quadratic
Lagrange spaces, and solves the resulting saddle-point system by flexible
GMRES with a block upper-triangular preconditioner.  The discrete current
density and magnetic induction are divergence-free up to solver tolerance.
"""

from .assembly import SpaceSet, apply_constraints, assemble_block, build_block_system, build_spaces
from .drivers import convergence_study, mesh_summary, preconditioner_study, solve_example
from .mesh import Mesh, build_cube_mesh, mesh_size
from .postproc import (
    b_div_check,
    convergence_order,
    div_norm,
    energy_check,
    error_norm,
    improve_phi,
    recover_B,
    recover_E,
)
from .preconditioner import BlockPartition, apply_P_inverse, solve_mhd_system
from .problems import EXAMPLES, ProblemSpec, get_example
from .spaces import FieldFunction, SpaceFamily, build_space, interpolate

__version__ = "0.1.0"

__all__ = [
    "BlockPartition",
    "EXAMPLES",
    "FieldFunction",
    "Mesh",
    "ProblemSpec",
    "SpaceFamily",
    "SpaceSet",
    "apply_P_inverse",
    "apply_constraints",
    "assemble_block",
    "b_div_check",
    "build_block_system",
    "build_cube_mesh",
    "build_space",
    "build_spaces",
    "convergence_order",
    "convergence_study",
    "div_norm",
    "energy_check",
    "error_norm",
    "get_example",
    "improve_phi",
    "interpolate",
    "mesh_size",
    "mesh_summary",
    "preconditioner_study",
    "recover_B",
    "recover_E",
    "solve_example",
    "solve_mhd_system",
    "__version__",
]
