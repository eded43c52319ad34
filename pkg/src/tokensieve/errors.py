"""Exception hierarchy shared across the package.

Every exception carries a short machine-readable ``category`` string.
The CLI prints the category on stderr and maps it to a distinct exit
code, so scripted callers can react without parsing message text.
"""

from __future__ import annotations


class TokenSieveError(Exception):
    """Base class for all errors raised by this package."""

    category = "error"


class InvalidInputError(TokenSieveError):
    """A value lies outside its documented domain (non-finite, out of range)."""

    category = "invalid-input"


class DimensionError(TokenSieveError):
    """Inputs that must agree in length or vocabulary size do not."""

    category = "dimension"


class EmptyInputError(TokenSieveError):
    """An operation that needs at least one element received none."""

    category = "empty-input"


class EmptySelectionError(TokenSieveError):
    """A loss or estimate was requested over zero retained positions."""

    category = "empty-selection"


class BiasedEstimatorError(TokenSieveError):
    """An importance-weighted estimate would be biased: some position has
    zero inclusion probability but a nonzero value."""

    category = "biased-estimator"


class ConfigurationError(TokenSieveError):
    """A demo or simulator configuration violates its preconditions."""

    category = "configuration"


class ParseError(TokenSieveError):
    """A record file line is not syntactically valid."""

    category = "parse"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class RecordValidationError(TokenSieveError):
    """A record parsed but violates a value-level contract (e.g. its
    probabilities do not sum to one)."""

    category = "validation"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class SchemaError(TokenSieveError):
    """A record file header or record shape does not match the declared schema."""

    category = "schema"

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OutputError(TokenSieveError):
    """A destination could not be read or written."""

    category = "io"
