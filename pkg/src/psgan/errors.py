"""Exception types shared across the package."""


class PsganError(Exception):
    """Base class for all package errors."""


class ShapeError(PsganError, ValueError):
    pass


class NonFiniteError(PsganError, FloatingPointError):
    pass


class DegeneratePatch(PsganError, ValueError):
    """A mask (or region) has too few active pixels to carry statistics."""


class OverlappingMasks(PsganError, ValueError):
    pass


class SampleSkipped(PsganError):
    """Raised when an image has no usable text regions. Not fatal."""


class AnnotationError(PsganError, ValueError):
    def __init__(self, message, line_number=None):
        if line_number is not None:
            message = f"line {line_number}: {message}"
        super().__init__(message)
        self.line_number = line_number


class CheckpointError(PsganError, ValueError):
    pass


class PlacementError(PsganError, RuntimeError):
    pass


class TrainingDiverged(PsganError, RuntimeError):
    pass
