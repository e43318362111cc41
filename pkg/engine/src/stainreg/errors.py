import logging


class StainRegError(Exception):
    """Base class for errors raised by the registration engine and its commands."""

    log_level: int = logging.INFO
    exit_code: int = 1

    def __init__(self, message: str):
        super().__init__(message)


# --- Argument / Usage Errors ---


class ArgumentError(StainRegError):
    """Raised when an operation receives arguments outside its domain."""

    exit_code = 2

    def __init__(self, message: str):
        super().__init__(message)


class GeometryMismatchError(ArgumentError):
    """Raised when two images that must share a geometry do not."""

    def __init__(self, shape_a: tuple[int, ...], shape_b: tuple[int, ...]):
        self.shape_a = shape_a
        self.shape_b = shape_b
        super().__init__(f"Image geometries differ: {shape_a} vs {shape_b}.")


class ValidationError(StainRegError):
    """Raised when a CSV or transform file violates its schema."""

    log_level = logging.WARNING
    exit_code = 2

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        location = f" (row {row})" if row is not None else ""
        super().__init__(f"{message}{location}")


# --- File Format Errors ---


class FormatError(StainRegError):
    """Raised when a PNM file cannot be decoded."""

    log_level = logging.WARNING
    exit_code = 2

    def __init__(self, path: str, offset: int, reason: str):
        self.path = path
        self.offset = offset
        self.reason = reason
        super().__init__(f"Malformed PNM file '{path}' at byte {offset}: {reason}.")


class UnreadableInputError(StainRegError):
    """Raised when an input file is missing or cannot be decoded at all."""

    log_level = logging.ERROR
    exit_code = 3

    def __init__(self, path: str, original_exception: Exception | None = None):
        self.path = path
        self.original_exception = original_exception
        detail = f": {original_exception}" if original_exception else ""
        super().__init__(f"Cannot read input '{path}'{detail}")


# --- Image / Mask Errors ---


class EmptyMaskError(StainRegError):
    """Raised when a tissue mask or boundary has no foreground."""

    log_level = logging.WARNING

    def __init__(self, what: str = "mask"):
        self.what = what
        super().__init__(f"The {what} has no foreground pixels.")


class EmptyMassError(StainRegError):
    """Raised when a center of mass is requested for an all-zero image."""

    log_level = logging.WARNING

    def __init__(self):
        super().__init__("Image has zero total intensity; center of mass is undefined.")


class DegenerateInputError(StainRegError):
    """Raised when input data cannot support the requested model (e.g. too few distinct values)."""

    log_level = logging.WARNING

    def __init__(self, message: str):
        super().__init__(message)


# --- Numerical Errors ---


class SingularTransformError(StainRegError):
    """Raised when an affine matrix is too close to singular to invert."""

    log_level = logging.WARNING

    def __init__(self, det: float):
        self.det = det
        super().__init__(f"Affine matrix is singular (det = {det:.3e}).")


class OverlapError(StainRegError):
    """Raised when no reference pixel pulls back into the moving image domain."""

    log_level = logging.WARNING

    def __init__(self):
        super().__init__("Transform leaves no overlap between reference and moving image.")


class NumericError(StainRegError):
    """Raised when an objective evaluates to a non-finite value."""

    log_level = logging.ERROR

    def __init__(self, what: str):
        super().__init__(f"Non-finite value encountered in {what}.")


class FitFailureError(StainRegError):
    """Raised when robust fitting finds no acceptable model."""

    log_level = logging.WARNING

    def __init__(self, message: str):
        super().__init__(message)


# --- Benchmark / Evaluation Errors ---


class GenerationError(StainRegError):
    """Raised when a synthetic case cannot be generated from its spec."""

    def __init__(self, message: str):
        super().__init__(message)


class EmptyEvaluationError(StainRegError):
    """Raised when no image pair survives the exclusion rules."""

    log_level = logging.WARNING
    exit_code = 2

    def __init__(self):
        super().__init__("No image pair remains to be scored after exclusion.")


class SelfTestFailure(StainRegError):
    """Raised when a self-test suite fails."""

    log_level = logging.ERROR

    def __init__(self, suite: str, detail: str):
        self.suite = suite
        self.detail = detail
        super().__init__(f"Self-test '{suite}' failed: {detail}")
