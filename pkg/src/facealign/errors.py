"""Exception types shared across the package."""


class FaceAlignError(Exception):
    """Base class for all package errors."""


class InvalidArgumentError(FaceAlignError, ValueError):
    """An argument violates a documented precondition (shape, finiteness, range)."""


class SingularTransformError(FaceAlignError):
    """Affine inversion requested for a (near-)singular 2x2 block."""


class DegenerateShapeError(FaceAlignError):
    """A shape is geometrically degenerate for the requested operation
    (coincident pupil centers, zero normalizer distance)."""


class NoConfidentLandmarksError(FaceAlignError):
    """All landmark weights are zero; normalization is undefined."""


class DegenerateMaskError(FaceAlignError):
    """Fewer visible landmarks than the minimum required for reconstruction."""


class PtsParseError(FaceAlignError):
    """Malformed pts annotation file.

    Carries the 1-based line number where parsing failed.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InvalidBBoxError(FaceAlignError):
    """Bounding box does not intersect the image or has non-positive area."""


class TrainingFailureError(FaceAlignError):
    """Training diverged (non-finite loss); carries diagnostics in the message."""


class CheckpointError(FaceAlignError):
    """Checkpoint or dictionary file is missing, corrupt, or schema-incompatible."""
