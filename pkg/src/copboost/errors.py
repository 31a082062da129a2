class CopboostError(Exception):
    """Base class for all package errors."""


class DomainError(CopboostError, ValueError):
    """An argument lies outside the support or parameter space of a family."""


class SchemaError(CopboostError, ValueError):
    """A dataset or configuration does not have the expected layout."""


class ConfigError(CopboostError, ValueError):
    """Inconsistent or insufficient run configuration."""


class NumericalError(CopboostError, ArithmeticError):
    """Boosting could not continue because every candidate risk was non-finite."""


class ParseError(SchemaError):
    """A data file cell could not be read; carries the 1-based row and the column name."""

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column
