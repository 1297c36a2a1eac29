__version__ = "0.1.0"

from simplexsbp.cubature import CubatureRule, SymmetryOrbit, get_rule, solve_cubature
from simplexsbp.operators import ElementOperators, SbpVerificationReport, build_element_operators, verify_sbp
from simplexsbp.mesh import GlobalNodeMap, PeriodicTriMesh, build_mesh
from simplexsbp.assembly import GlobalOperators, assemble_global
from simplexsbp.advection import AdvectionConfig, run_advection, simulate
from .config import (
    KNOWN_SCHEMES,
    SUPPORTED_DEGREES,
)

__all__ = [
    "CubatureRule",
    "SymmetryOrbit",
    "get_rule",
    "solve_cubature",
    "ElementOperators",
    "SbpVerificationReport",
    "build_element_operators",
    "verify_sbp",
    "GlobalNodeMap",
    "PeriodicTriMesh",
    "build_mesh",
    "GlobalOperators",
    "assemble_global",
    "AdvectionConfig",
    "run_advection",
    "simulate",
    "KNOWN_SCHEMES",
    "SUPPORTED_DEGREES",
]
