"""Spectral numerics for 2x2 first-order systems ``-i B^{-1} y' + Q y = lambda y`` on [0, 1]."""

from .errors import (
    BoundaryTooClose,
    BVPError,
    IdenticalOperators,
    InadmissibleZ,
    IntegrationError,
    NotInResolventSet,
    RepresentationUnavailable,
    ValidationError,
)
from .model import (
    BoundaryInvariants,
    BoundarySpec,
    Expr,
    Potential,
    ProblemSpec,
    SolverSettings,
    WeightMatrix,
    apply_equivalence_transform,
    compute_j_invariants,
    quasi_periodic_bc,
    special_bc,
    validate,
)

__all__ = [
    "BVPError",
    "ValidationError",
    "IntegrationError",
    "NotInResolventSet",
    "BoundaryTooClose",
    "RepresentationUnavailable",
    "IdenticalOperators",
    "InadmissibleZ",
    "Expr",
    "WeightMatrix",
    "Potential",
    "BoundarySpec",
    "BoundaryInvariants",
    "SolverSettings",
    "ProblemSpec",
    "compute_j_invariants",
    "apply_equivalence_transform",
    "quasi_periodic_bc",
    "special_bc",
    "validate",
]

__version__ = "0.1.0"
