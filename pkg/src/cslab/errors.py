"""
Exceptions raised by cslab.

Every exception carries the process exit code the command-line driver uses
when it surfaces to the top level:

    0 success, 2 validation error, 3 resource/cap error, 4 solver non-convergence.
"""

import cslab.log

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_RESOURCE = 3
EXIT_CONVERGENCE = 4


class CsLabException(Exception):
    """
    Base class for cslab errors.

    Attributes:
        err (str): The error message.
        ex (Exception): The exception that caused this one, if any.
        exit_code (int): The exit code to return from the command line.
    """

    exit_code: int = 1

    def __init__(self, err: str = None, ex: Exception = None, exit_code: int = None):
        self.err = err
        self.ex = ex
        if exit_code is not None:
            self.exit_code = exit_code

        msg: str = None
        if err is not None:
            msg = err
        elif ex is not None:
            msg = str(ex)
        else:
            msg = "ERROR!"

        super().__init__(msg)

    def to_dict(self) -> dict:
        """
        Returns the error node used in error manifests.

        Returns:
            dict: name, message, exit code and (if set) the causing exception.
        """
        d = {
            "name": self.__class__.__name__,
            "msg": str(self),
            "exit_code": self.exit_code,
        }
        if self.ex is not None:
            d["exception"] = {
                "name": self.ex.__class__.__name__,
                "msg": str(self.ex),
                "trace": cslab.log.exception_to_string(self.ex, with_full_traceback=True),
            }
        return d


class ValidationError(CsLabException):
    """invalid input: broken invariant, bad dimensions, bad configuration."""

    exit_code = EXIT_VALIDATION


class InvalidFilterError(ValidationError):
    """the lowpass filter does not define a unique refinable function."""


class BalancingError(ValidationError):
    """the truncated Gram matrix is singular to tolerance (theta <= 0)."""


class ResourceLimitError(CsLabException):
    """a size limit or an allocation cap would be exceeded."""

    exit_code = EXIT_RESOURCE


class EnumerationCapError(ResourceLimitError):
    """too many supports to enumerate, use the randomized probe instead."""


class ScanCapError(ResourceLimitError):
    """the balancing scan reached its cap without meeting the target."""


class ConvergenceError(CsLabException):
    """a solve did not converge."""

    exit_code = EXIT_CONVERGENCE
