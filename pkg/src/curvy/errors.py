"""Exception types shared across the library."""


class CurvyError(Exception):
    """Base class for all library errors."""


class MeshFormatError(CurvyError):
    """Raised for unreadable or malformed mesh files."""


class GeometryError(CurvyError):
    """Raised when a geometric operation cannot produce a valid result."""


class FitError(CurvyError):
    """Raised when contour splitting or curve fitting fails."""


class DivergenceError(CurvyError):
    """Raised when training produces a non-finite loss.

    Carries the last finite-loss parameter state so a caller can still
    persist something useful.
    """

    def __init__(self, message, checkpoint=None, epoch=None):
        super().__init__(message)
        self.checkpoint = checkpoint
        self.epoch = epoch
