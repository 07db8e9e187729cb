"""Exception hierarchy shared by all modules.

Each class carries the CLI exit code it maps to, so the command-line layer
can translate failures without a lookup table.
"""


class XvarError(Exception):
    exit_code = 1


class InputError(XvarError, ValueError):
    """Malformed or out-of-domain user input."""

    exit_code = 2


class InvalidXi(InputError):
    pass


class OutOfRange(InputError):
    pass


class IncompleteInput(InputError):
    pass


class DimensionTooLarge(InputError):
    pass


class ParseError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DataError(XvarError):
    """The data do not support the requested estimate."""

    exit_code = 3


class NoExceedances(DataError):
    pass


class DegenerateSample(DataError):
    pass


class QuantileBelowThreshold(DataError, ValueError):
    pass


class InconsistentInput(XvarError, ValueError):
    """Extremal coefficients that no spectral measure can produce."""

    exit_code = 4


class Infeasible(InconsistentInput):
    pass


class NumericalFailure(XvarError, ArithmeticError):
    exit_code = 5


class NonConvergence(NumericalFailure):
    pass
