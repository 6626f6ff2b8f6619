"""Exception hierarchy shared by the library and the command line."""

from typing import Optional

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERICAL = 3


class HfdpError(Exception):
    """Base class for every error raised by the package."""

    exit_code = EXIT_DATA


class InvalidInputError(HfdpError, ValueError):
    """Inputs violate a documented precondition."""


class CapacityError(InvalidInputError):
    """An exhaustive routine was asked to handle a problem above its size guard."""


class DataFormatError(InvalidInputError):
    """A data or assignment file could not be parsed."""

    def __init__(self, message: str, line: Optional[int] = None) -> None:
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class UsageError(HfdpError):
    """The command line was called with an inconsistent set of options."""

    exit_code = EXIT_USAGE


class NumericalDegeneracyError(HfdpError, ArithmeticError):
    """A numerical routine failed on degenerate input (singular scatter, empty envelope)."""

    exit_code = EXIT_NUMERICAL

    def __init__(
        self,
        message: str,
        attribute: Optional[int] = None,
        cluster: Optional[int] = None,
    ) -> None:
        location = []
        if attribute is not None:
            location.append(f"attribute={attribute}")
        if cluster is not None:
            location.append(f"cluster={cluster}")
        if location:
            message = f"{message} ({', '.join(location)})"
        super().__init__(message)
        self.attribute = attribute
        self.cluster = cluster


class InternalConsistencyError(HfdpError, RuntimeError):
    """The chain reached a state that breaks one of its own invariants."""

    exit_code = EXIT_NUMERICAL
