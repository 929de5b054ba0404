"""Exception types shared across the package."""


class FPPError(Exception):
    """Base class for all package errors."""


class InvalidArgument(FPPError, ValueError):
    pass


class InvalidState(FPPError, ValueError):
    """Raised when a value is in the wrong normalization/state for an operation."""


class BehindModelError(FPPError, ValueError):
    """A point has non-positive depth in a camera or projector frame."""


class ConfigurationError(FPPError, ValueError):
    pass


class FormatError(FPPError, ValueError):
    """Malformed file contents (mesh, depth, PGM, JSON documents)."""
