"""Deterministic ridepooling dispatch: shared-ride routing, assignment, rebalancing."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    InternalError,
    QueryError,
    RidepoolError,
    RouteError,
)
from .network import Network, UNREACHABLE, load_network, load_network_files

__all__ = [
    "ConfigError",
    "DataError",
    "InternalError",
    "Network",
    "QueryError",
    "RidepoolError",
    "RouteError",
    "UNREACHABLE",
    "load_network",
    "load_network_files",
    "__version__",
]
