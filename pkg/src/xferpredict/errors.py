"""Exception hierarchy shared by every module in the package."""


class XferPredictError(Exception):
    """Base class for all package errors."""


class ParseError(XferPredictError):
    """A log line could not be decoded."""

    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field '{field}'")
        prefix = ", ".join(where)
        super().__init__(f"{prefix}: {message}" if prefix else message)


class ValidationError(ParseError):
    """A decoded record violates a domain invariant."""


class InputError(XferPredictError, ValueError):
    """Caller supplied arguments that do not satisfy a precondition."""


class ConfigurationError(XferPredictError, ValueError):
    """Illegal predictor spec, fusion config or run configuration."""


class InsufficientDataError(XferPredictError):
    """Not enough observations to compute the requested quantity."""


# Named for the univariate predictors; same failure class.
InsufficientHistoryError = InsufficientDataError


class DegenerateFitError(XferPredictError):
    """Least-squares problem or statistic is degenerate (zero variance, rank deficiency)."""


class AlignmentError(XferPredictError):
    """Streams cannot be aligned (for example, no probe grid)."""
