"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PropirtError(Exception):
    """Base class for all package errors."""


# --- response model -------------------------------------------------------

class WindowError(PropirtError, ValueError):
    """A propensity window cannot be evaluated as requested."""


class DegenerateWindow(WindowError):
    """Window radius is below the minimum supported radius."""


class OneSidedWindow(WindowError):
    """Normalisation requested for a window with an infinite bound."""


# --- estimation -----------------------------------------------------------

class EmptyData(PropirtError, ValueError):
    pass


class NonFinite(PropirtError, ArithmeticError):
    """Log-likelihood evaluated to NaN, usually from corrupt inputs."""


# --- simulation -----------------------------------------------------------

class SamplingError(PropirtError, RuntimeError):
    pass


# --- assessor -------------------------------------------------------------

class MalformedInstance(PropirtError, ValueError):
    pass


class SingleClass(PropirtError, ValueError):
    pass


class DimensionMismatch(PropirtError, ValueError):
    pass


class DegenerateFold(PropirtError, ValueError):
    pass


# --- annotation -----------------------------------------------------------

class TemplateError(PropirtError, ValueError):
    pass


class ParseFailure(PropirtError, ValueError):
    pass


class OrderViolation(ParseFailure):
    pass


class RangeViolation(ParseFailure):
    pass


class NetworkError(PropirtError, ConnectionError):
    pass


# --- data io --------------------------------------------------------------

class SchemaError(PropirtError, ValueError):
    """A record failed validation. Carries the 1-based line number and field."""

    def __init__(self, line: int, field: str, message: str = ""):
        self.line = line
        self.field = field
        self.message = message
        detail = f": {message}" if message else ""
        super().__init__(f"line {line}, field '{field}'{detail}")


class DuplicateId(SchemaError):
    pass
