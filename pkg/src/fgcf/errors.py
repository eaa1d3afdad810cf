"""Exception hierarchy.

The CLI maps each family onto an exit code: parameter/config problems exit
with 2, data problems with 3, numerical degeneracies with 4.
"""


class FgcfError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ParameterError(FgcfError, ValueError):
    exit_code = 2


class DataError(FgcfError, ValueError):
    exit_code = 3


class ModelFormatError(DataError):
    """A model or dataset file could not be parsed or failed validation."""


class DegeneracyError(FgcfError, ArithmeticError):
    """A normalizer vanished, so a message or belief is undefined."""

    exit_code = 4
