# app/core/exceptions.py

from typing import Any, Dict, Optional


class ToolkitError(Exception):
    """Base error. Carries the process exit code used by the CLI."""

    exit_code: int = 1

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "message": self.message,
            "exit_code": self.exit_code,
            "details": self.details,
        }


class InvalidInputError(ToolkitError, ValueError):
    """A precondition of an operation is violated."""

    exit_code = 2


class ScenarioError(ToolkitError):
    """Scenario document is missing, malformed or fails schema validation."""

    exit_code = 2


class NumericalError(ToolkitError):
    """A numerical kernel failed or produced a result that breaks an invariant."""

    exit_code = 3


class InequalityViolation(NumericalError):
    """A hard inequality failed beyond its relative slack."""

    def __init__(
        self,
        name: str,
        lhs: float,
        rhs: float,
        details: Optional[Dict[str, Any]] = None,
    ):
        payload = {"inequality": name, "lhs": lhs, "rhs": rhs}
        payload.update(details or {})
        super().__init__(f"{name} violated: {lhs!r} > {rhs!r}", payload)


class CertificateError(ToolkitError):
    """A growth certificate failed or is missing."""

    exit_code = 4
