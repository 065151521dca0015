"""Noisy-circuit entanglement length via bond percolation on the contracted
space-time lattice, with exact small-system checks."""
from .errors import (BracketError, CapacityError, ConfigurationError,
                     DegenerateFitError, EntLengthError, FitError,
                     InsufficientDataError, ScheduleError, ShapeError,
                     ValidationError)
from .lattice import (LatticeSpec, PercolationLattice, SpacetimeGraph,
                      build_lattice, build_spacetime_graph,
                      contract_interactions, interaction_schedule)

__version__ = "0.1.0"

__all__ = [
    "BracketError", "CapacityError", "ConfigurationError", "DegenerateFitError",
    "EntLengthError", "FitError", "InsufficientDataError", "LatticeSpec",
    "PercolationLattice", "ScheduleError", "ShapeError", "SpacetimeGraph",
    "ValidationError", "build_lattice", "build_spacetime_graph",
    "contract_interactions", "interaction_schedule", "__version__",
]
