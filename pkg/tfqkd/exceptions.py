# tfqkd/exceptions.py
# Error hierarchy shared by the library and the command line.
# Every error carries the process exit code the CLI reports for it.

from typing import List, Optional


class TfqkdError(Exception):
    exit_code = 1

    def to_dict(self) -> dict:
        return {
            "error": type(self).__name__,
            "message": str(self),
            "exit_code": self.exit_code,
        }


class UsageError(TfqkdError):
    exit_code = 2


class TallyParseError(TfqkdError):
    exit_code = 3

    def __init__(self, message: str, line: Optional[int] = None, column: Optional[int] = None):
        if line is not None:
            message = f"{message} (line {line}, column {column})"
        super().__init__(message)
        self.line = line
        self.column = column


class MissingKeyError(TallyParseError):
    def __init__(self, key: str):
        super().__init__(f"missing key '{key}'")
        self.key = key


class TallyValidationError(TfqkdError):
    exit_code = 4

    def __init__(self, violations: List[str]):
        super().__init__("; ".join(violations))
        self.violations = list(violations)


class DomainError(TfqkdError):
    exit_code = 4


class StructuralError(TfqkdError):
    exit_code = 4


class InfeasibleBoundsError(TfqkdError):
    exit_code = 4


class VacuousBoundError(TfqkdError):
    exit_code = 5


class InsufficientDataError(TfqkdError):
    exit_code = 5


class RateUndefinedError(InsufficientDataError):
    """Raised when a counting rate is requested for a source pair that was never sent."""

    def __init__(self, pair: str):
        super().__init__(f"counting rate undefined: sent[{pair}] is zero")
        self.pair = pair
