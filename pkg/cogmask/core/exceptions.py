"""
Custom exceptions for cogmask
"""
import logging
from typing import Any, List, Optional, Sequence

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ASSERTION_FAILED = 1
EXIT_USAGE = 2


class CogMaskException(Exception):
    """Base exception class for cogmask"""
    pass


class DatasetValidationError(CogMaskException):
    """Raised when a probe/response dataset violates its invariants"""
    pass


class InfeasibleCertificateError(CogMaskException):
    """Raised when a reconstruction is requested from an infeasible certificate"""
    pass


class SolverFailureError(CogMaskException):
    """Raised when the LP/MILP backend fails (distinct from an infeasible verdict)"""

    def __init__(self, message: str, status: Optional[int] = None):
        super().__init__(message)
        self.status = status


class EnumerationOverflowError(CogMaskException):
    """Raised when the active-set enumeration oracle would exceed its pattern budget"""
    pass


class ProjectionError(CogMaskException):
    """Raised when a strategy cannot be projected onto a dataset"""
    pass


class KKTRecoveryError(CogMaskException):
    """Raised when no nonnegative multipliers reproduce stationarity"""
    pass


class ConvergenceError(CogMaskException):
    """Raised when an iterative solver stops without meeting its tolerance"""

    def __init__(self, message: str, best_iterate: Any = None, residual: Optional[float] = None):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.residual = residual


class MaskingInfeasibleError(CogMaskException):
    """Raised when no response sequence meeting the margin cap was found"""

    def __init__(self, message: str, best_iterate: Any = None, best_margin: Optional[float] = None):
        super().__init__(message)
        self.best_iterate = best_iterate
        self.best_margin = best_margin


class BracketError(CogMaskException):
    """Raised when the bisection bracket for a test statistic cannot be established"""
    pass


class ScenarioError(CogMaskException):
    """Raised for unknown scenarios or unusable scenario parameters"""
    pass


class ConfigError(CogMaskException):
    """Raised when an experiment configuration cannot be parsed or validated"""

    def __init__(self, message: str, diagnostics: Optional[Sequence[str]] = None):
        super().__init__(message)
        self.diagnostics: List[str] = list(diagnostics or [])

    def __str__(self) -> str:
        base = super().__str__()
        if not self.diagnostics:
            return base
        return base + "\n" + "\n".join(f"  - {d}" for d in self.diagnostics)


def exit_code_for(exc: BaseException) -> int:
    """Map an exception escaping the CLI to its process exit code"""
    if isinstance(exc, (ConfigError, DatasetValidationError, FileNotFoundError, ScenarioError)):
        return EXIT_USAGE
    return EXIT_ASSERTION_FAILED


def describe_failure(exc: BaseException) -> dict:
    """Flat record of a failed experiment cell for the run summary"""
    return {
        "status": "error",
        "error_type": type(exc).__name__,
        "message": str(exc),
    }
