"""Exception types shared across the package."""


class ProvTrailError(Exception):
    """Base class for all provtrail errors."""


class StorageError(ProvTrailError):
    pass


class UnknownHashError(StorageError):
    pass


class UnknownNodeError(ProvTrailError):
    pass


class EdgeKindError(ProvTrailError):
    pass


class PatternError(ProvTrailError):
    pass


class LockTimeoutError(ProvTrailError):
    pass


class RecursionGuardError(ProvTrailError):
    pass


class NotARepositoryError(ProvTrailError):
    pass


class AlreadyInitializedError(ProvTrailError):
    pass


class CommandParseError(ProvTrailError):
    """Raised on malformed shell command lines (e.g. unterminated quote)."""

    def __init__(self, message, position=None):
        super().__init__(message)
        self.position = position


class SqlParseError(ProvTrailError):
    def __init__(self, message, position=None):
        super().__init__(f"{message} (at position {position})" if position is not None else message)
        self.position = position


class EvaluationError(ProvTrailError):
    pass


class NameCollisionError(ProvTrailError):
    pass


class UnknownViewError(ProvTrailError):
    pass


class UnknownArtifactError(ProvTrailError):
    pass


class TemplateError(ProvTrailError):
    pass


class GridCapError(ProvTrailError):
    pass


class NoPathError(ProvTrailError):
    pass


class NoCommonAncestorError(ProvTrailError):
    pass


class MonitorError(ProvTrailError):
    pass
