"""Exception types shared across the toolkit."""


class KissGevError(Exception):
    """Base class for all toolkit errors."""


class FormatError(KissGevError, ValueError):
    """Unsupported or malformed file encoding."""


class ShapeError(KissGevError, ValueError):
    """Array dimensions are inconsistent or too small."""


class ParameterError(KissGevError, ValueError):
    """A scalar parameter lies outside its valid range."""


class GeometryError(KissGevError, ValueError):
    """Invalid room, array or source geometry."""


class NumericError(KissGevError, ArithmeticError):
    """Non-finite values where finite ones are required."""


class SolverError(KissGevError, ArithmeticError):
    """A linear-algebra solve failed at a specific frequency bin."""

    def __init__(self, message, freq_bin=None):
        super().__init__(message)
        self.freq_bin = freq_bin


class InputError(KissGevError, ValueError):
    """Missing or empty inputs (corpus, references)."""


class ValidationError(KissGevError, ValueError):
    """A configuration field failed validation."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
