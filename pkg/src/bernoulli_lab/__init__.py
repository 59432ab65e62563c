"""Numerical toolkit for one-phase free boundary problems in the plane.

Exact solution families and their geometry, the Weiss monotonicity
functional, blow-up classification, neck detection with conformal
comparison maps, the minimal-surface correspondence, and a discrete
Alt-Caffarelli solver.
"""

from .errors import (
    BernoulliLabError,
    ConvergenceError,
    DomainError,
    FitError,
    ResourceError,
    SolverError,
    StructureError,
    UnsupportedFamilyError,
)
from .grid import GridField
from .solutions import (
    AnalyticSolution,
    ComposedHairpin,
    Hairpin,
    HalfPlane,
    RigidMotion,
    TwoPlane,
    Wedge,
    evaluate,
    sample_to_grid,
)

__version__ = "0.1.0"

__all__ = [
    "AnalyticSolution",
    "BernoulliLabError",
    "ComposedHairpin",
    "ConvergenceError",
    "DomainError",
    "FitError",
    "GridField",
    "Hairpin",
    "HalfPlane",
    "ResourceError",
    "RigidMotion",
    "SolverError",
    "StructureError",
    "TwoPlane",
    "UnsupportedFamilyError",
    "Wedge",
    "evaluate",
    "sample_to_grid",
]
