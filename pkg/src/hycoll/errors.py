"""Exception hierarchy shared by every hycoll module."""


class HycollError(Exception):
    """Base class for all hycoll errors."""


class ConfigurationError(HycollError, ValueError):
    """Layout, run configuration or kernel configuration is invalid."""


class UnsupportedConfigurationError(ConfigurationError):
    """Valid configuration that a collective deliberately does not support."""


class UsageError(HycollError):
    """An API was called in violation of its contract."""


class BoundsError(UsageError, IndexError):
    pass


class ResourceError(HycollError):
    """Shared arena allocation failed."""


class Cancelled(HycollError):
    """A blocking call was interrupted because the job is shutting down."""


class JobError(HycollError):
    """Runtime failure of a launched job (exit status 3)."""


class RankFailure(JobError):
    def __init__(self, rank, exc):
        super().__init__(f"rank {rank} failed: {type(exc).__name__}: {exc}")
        self.rank = rank
        self.exc = exc


class DeadlockError(JobError):
    def __init__(self, message, blocked=None):
        super().__init__(message)
        # rank -> last operation
        self.blocked = dict(blocked or {})
