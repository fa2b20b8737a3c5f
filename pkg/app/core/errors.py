from typing import Any, Dict, List, Optional

# Exit codes shared with the command line
EXIT_INVALID = 2
EXIT_NUMERIC = 3
EXIT_INTERNAL = 4


class LabError(Exception):
    """Base class for every failure raised by the laboratory"""

    exit_code: int = EXIT_NUMERIC

    def __init__(self, detail: str, **context: Any):
        super().__init__(detail)
        self.detail = detail
        self.context: Dict[str, Any] = context

    def to_dict(self) -> Dict[str, Any]:
        return {
            "error": type(self).__name__,
            "detail": self.detail,
            "exit_code": self.exit_code,
            "context": self.context,
        }


class ConfigurationError(LabError):
    exit_code = EXIT_INVALID


class DomainError(LabError):
    exit_code = EXIT_INVALID


class OutOfRangeError(LabError):
    exit_code = EXIT_INVALID


class ModelInvariantError(LabError):
    exit_code = EXIT_INVALID


class PreconditionError(LabError):
    exit_code = EXIT_INVALID


class InvariantError(LabError):
    exit_code = EXIT_NUMERIC


class ResourceLimitError(LabError):
    exit_code = EXIT_NUMERIC


class ResolutionError(LabError):
    exit_code = EXIT_NUMERIC


class NoConvergenceError(LabError):
    """Eigensolver ran out of iterations; carries its best Ritz data"""

    exit_code = EXIT_NUMERIC

    def __init__(
        self,
        detail: str,
        ritz_values: Optional[List[float]] = None,
        residuals: Optional[List[float]] = None,
        **context: Any,
    ):
        super().__init__(
            detail,
            ritz_values=list(ritz_values or []),
            residuals=list(residuals or []),
            **context,
        )
        self.ritz_values = list(ritz_values or [])
        self.residuals = list(residuals or [])
