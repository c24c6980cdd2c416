"""Custom exceptions for logsync."""

from typing import Any

from .enums import ErrorCode


class LogsyncError(Exception):
    """Base exception for all logsync errors."""

    def __init__(
        self,
        message: str,
        error_code: str | ErrorCode,
        context: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(message)
        self.message = message
        self.error_code = (
            error_code if isinstance(error_code, ErrorCode) else ErrorCode(error_code)
        )
        self.context = context or {}

    def __str__(self) -> str:
        return f"{self.error_code.value}: {self.message}"

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(message='{self.message}', error_code='{self.error_code.value}')"

    def to_report(self) -> dict[str, Any]:
        """Serialize into the diagnostic report format written by the shell."""
        return {
            "error": self.message,
            "error_code": self.error_code.value,
            "context": self.context,
        }


# Validation errors (E001-E003)
class InvalidParameterError(LogsyncError):
    """Invalid or inconsistent parameter (E001)."""

    pass


class ParameterOutOfRangeError(LogsyncError):
    """Parameter value out of valid range (E002)."""

    pass


class MissingReferenceError(LogsyncError):
    """Reference to an unknown machine or channel (E003)."""

    pass


# Domain errors (E004-E005)
class OutsideValidityDomainError(LogsyncError):
    """Input outside the validity domain of a model or window (E004)."""

    pass


class NotRadarLinkableError(LogsyncError):
    """Two worldlines cannot exchange signals inside the window (E005)."""

    pass


# Numerical errors (E006-E007)
class ConvergenceError(LogsyncError):
    """A solver or optimizer did not converge (E006)."""

    pass


class OrderViolationError(LogsyncError):
    """A channel failed to preserve order (E007)."""

    pass


# Scenario errors (E008)
class ScenarioValidationError(LogsyncError):
    """Scenario document failed validation (E008)."""

    def __init__(
        self,
        message: str,
        errors: list[str],
        context: dict[str, Any] | None = None,
    ) -> None:
        super().__init__(
            message, ErrorCode.INVALID_SCENARIO, {**(context or {}), "errors": errors}
        )
        self.errors = errors


# Mapping from error codes to exception classes
ERROR_CODE_TO_EXCEPTION: dict[ErrorCode, type[LogsyncError]] = {
    ErrorCode.INVALID_PARAMETER: InvalidParameterError,
    ErrorCode.PARAMETER_OUT_OF_RANGE: ParameterOutOfRangeError,
    ErrorCode.MISSING_REFERENCE: MissingReferenceError,
    ErrorCode.OUTSIDE_VALIDITY_DOMAIN: OutsideValidityDomainError,
    ErrorCode.NOT_RADAR_LINKABLE: NotRadarLinkableError,
    ErrorCode.NO_CONVERGENCE: ConvergenceError,
    ErrorCode.ORDER_VIOLATION: OrderViolationError,
}

VALIDATION_CODES = frozenset(
    {
        ErrorCode.INVALID_PARAMETER,
        ErrorCode.PARAMETER_OUT_OF_RANGE,
        ErrorCode.MISSING_REFERENCE,
        ErrorCode.OUTSIDE_VALIDITY_DOMAIN,
        ErrorCode.NOT_RADAR_LINKABLE,
        ErrorCode.INVALID_SCENARIO,
    }
)


def create_exception_from_error_report(
    error_report: dict[str, Any],
) -> LogsyncError:
    """Create an appropriate exception from a diagnostic report."""
    error_code = ErrorCode(error_report["error_code"])
    context = error_report.get("context") or {}
    if error_code is ErrorCode.INVALID_SCENARIO:
        return ScenarioValidationError(
            error_report["error"], errors=list(context.get("errors", []))
        )
    exception_class = ERROR_CODE_TO_EXCEPTION.get(error_code, LogsyncError)

    return exception_class(
        message=error_report["error"],
        error_code=error_code,
        context=context,
    )
