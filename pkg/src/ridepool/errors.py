"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3,
InternalError -> 4.
"""


class RidepoolError(Exception):
    """Base class for all package errors."""


class ConfigError(RidepoolError):
    """Invalid configuration value or unusable scenario spec."""


class DataError(RidepoolError):
    """Malformed input data (network files, demand streams, model tables)."""


class QueryError(RidepoolError):
    """Invalid query against an in-memory structure (bad node id, etc.)."""


class RouteError(RidepoolError):
    """Malformed stop sequence handed to a route check."""


class InternalError(RidepoolError):
    """Invariant violation that indicates a bug, not bad input."""
