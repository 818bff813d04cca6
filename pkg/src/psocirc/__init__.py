"""psocirc: lossy eigenmode analysis of superconducting circuits.

Models the linear electromagnetics of lumped circuits with transmission
lines as positive second order state-space models, solves for complex
eigenfrequencies, transfer functions and transmon relaxation times.
"""

from .model import (
    EigenMode,
    EigenSolution,
    LagrangianDescription,
    PSOModel,
    TransferSample,
    ValidationReport,
    admittance,
    eigenmodes,
    export_lagrangian,
    impedance,
    scattering,
    validate,
)
from .compose import ConstraintSet, ReductionReport, constrain, transform, union
from .graph import CircuitGraph, TreeMaps, assemble_pso, build_tree_maps, terminate_semi_infinite

__version__ = "0.1.0"

__all__ = [
    "CircuitGraph",
    "ConstraintSet",
    "EigenMode",
    "EigenSolution",
    "LagrangianDescription",
    "PSOModel",
    "ReductionReport",
    "TransferSample",
    "TreeMaps",
    "ValidationReport",
    "admittance",
    "assemble_pso",
    "build_tree_maps",
    "constrain",
    "eigenmodes",
    "export_lagrangian",
    "impedance",
    "scattering",
    "terminate_semi_infinite",
    "transform",
    "union",
    "validate",
    "__version__",
]
