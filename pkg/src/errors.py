"""
Exception hierarchy shared by the library and the command line front end
"""

from typing import Any, Dict, Optional


class DQSTError(Exception):
    """Base class for all toolkit errors"""


class DimensionError(DQSTError, ValueError):
    """Shapes or dimensions of operators do not match"""


class ValidationError(DQSTError, ValueError):
    """A physical object violates its invariants (Hermiticity, trace, rates...)"""


class ConfigError(DQSTError, ValueError):
    """An experiment configuration could not be parsed or validated"""


class NumericalError(DQSTError, ArithmeticError):
    """A numerical routine produced non-finite values or failed to converge"""


class InfeasibleError(DQSTError):
    """The requested reconstruction is impossible for the given system"""

    def __init__(self, message: str, reason: str, details: Optional[Dict[str, Any]] = None):
        """
        Args:
            message: Human readable explanation
            reason: Machine-readable reason code (e.g. "rank_deficient")
            details: Extra numbers supporting the verdict (rank, d2, residual...)
        """
        super().__init__(message)
        self.reason = reason
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {"error": "infeasible", "reason": self.reason, "message": str(self), **self.details}
