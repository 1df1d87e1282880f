"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes, so each class carries the code it
should produce.
"""


class TxSelectError(Exception):
    exit_code = 1


class ConfigError(TxSelectError, ValueError):
    exit_code = 2


class DataError(TxSelectError, ValueError):
    exit_code = 4


class SchemaError(DataError):
    pass


class ParseError(DataError):
    def __init__(self, message, row=None):
        super().__init__(message if row is None else f"row {row}: {message}")
        self.row = row


class ValidationError(DataError):
    pass


class InsufficientDataError(DataError):
    pass


class InfeasibleError(TxSelectError):
    exit_code = 3


class NoFeasibleProgressError(InfeasibleError):
    """No iterate passed the constraint check, so there is nothing to average."""

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class BootstrapUnstableError(TxSelectError):
    exit_code = 3


class NormalizationError(TxSelectError, ValueError):
    pass


class CertificationError(TxSelectError):
    """A solver returned a point whose optimality certificate did not check out."""
