"""Conic relaxations of optimal reactive power dispatch with round-off and gap certificates."""

from .case_io import parse_case, read_case, validate_case
from .network import Network, TapGrid, build_network, load_network, tap_grid_round
from .relaxations import Model, Objective, RelaxationKind, build_relaxation

__all__ = [
    "Model",
    "Network",
    "Objective",
    "RelaxationKind",
    "TapGrid",
    "build_network",
    "build_relaxation",
    "load_network",
    "parse_case",
    "read_case",
    "tap_grid_round",
    "validate_case",
]

__version__ = "0.1.0"
