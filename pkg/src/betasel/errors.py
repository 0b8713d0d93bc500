"""Exception hierarchy.

Every exception carries a ``category`` drawn from a closed set so the CLI can
report a machine-readable failure class and pick an exit code.
"""

CATEGORIES = ("parse", "validation", "convergence", "quorum", "io")


class BetaselError(Exception):
    category = "validation"


class DomainError(BetaselError, ValueError):
    """Argument outside the mathematical domain of a function."""


class SpecError(BetaselError, ValueError):
    """Model specification inconsistent with the data (dimensions, rank)."""


class ValidationError(BetaselError, ValueError):
    pass


class ParseError(BetaselError):
    category = "parse"

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class NumericError(BetaselError, ArithmeticError):
    category = "convergence"

    def __init__(self, message, index=None):
        if index is not None:
            message = f"{message} (observation {index})"
        super().__init__(message)
        self.index = index


class DegenerateSampleError(BetaselError, ValueError):
    """Sample too small for a small-sample corrected criterion."""


class ConvergenceError(BetaselError):
    category = "convergence"


class QuorumError(BetaselError):
    """Too few bootstrap refits succeeded for the criterion to be reported."""

    category = "quorum"


class SelectionError(BetaselError):
    category = "convergence"


class EnvelopeError(BetaselError):
    category = "convergence"


class InputOutputError(BetaselError, OSError):
    category = "io"
