"""Exception types raised by the package."""


class PTError(Exception):
    """Base class for all package errors."""


class ConfigurationError(PTError, ValueError):
    """Invalid model, scenario or run configuration."""


class QueryError(PTError, ValueError):
    """Lookup-table query outside the tabulated range."""


class SchedulerError(PTError, ValueError):
    """Malformed input to a slot scheduler."""


class AccountingError(PTError, ValueError):
    """Utilization bookkeeping violated its bounds."""


class TableMismatchError(PTError):
    """A stored exit table does not belong to the requested error process."""


class ChecksumError(PTError):
    """A serialized artifact failed its integrity check."""
