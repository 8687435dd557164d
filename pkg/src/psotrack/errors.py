"""Exception types raised across the package."""


class TrackingError(Exception):
    """Base class for all package errors."""


class DegenerateHomography(TrackingError):
    pass


class PointAtInfinity(TrackingError):
    pass


class InvalidRegion(TrackingError, ValueError):
    pass


class ScheduleMismatch(TrackingError, ValueError):
    pass


class EmptyOverlap(TrackingError):
    pass


class ZeroVariance(TrackingError):
    pass


class DegenerateTemplate(TrackingError):
    pass


class MissingSequence(TrackingError, FileNotFoundError):
    pass


class ConfigError(TrackingError, ValueError):
    """Bad configuration value; ``key`` and ``line`` locate the offender when known."""

    def __init__(self, message, key=None, line=None):
        self.key = key
        self.line = line
        where = []
        if key is not None:
            where.append(f"key '{key}'")
        if line is not None:
            where.append(f"line {line}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)
