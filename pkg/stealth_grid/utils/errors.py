"""
Error types for the stealth_grid toolkit.

Every error carries a numeric code, a message and an optional structured
payload so that the tool server can forward it as a JSON-RPC error and the
command line can map it to an exit status.
"""

from typing import Any, Optional

# JSON-RPC style codes
INVALID_PARAMS = -32602
INTERNAL_ERROR = -32603


class StealthError(Exception):
    """Base exception for all toolkit errors."""

    code = INTERNAL_ERROR

    def __init__(self, message: str, data: Optional[Any] = None, code: Optional[int] = None):
        self.message = message
        self.data = data
        if code is not None:
            self.code = code
        super().__init__(message)


class CaseParseError(StealthError, ValueError):
    """A MATPOWER case file could not be read or is missing a block."""

    code = INVALID_PARAMS


class CaseValidationError(StealthError, ValueError):
    """A parsed case violates a topology invariant."""

    code = INVALID_PARAMS


class DimensionError(StealthError, ValueError):
    """Matrix or vector shapes do not agree."""

    code = INVALID_PARAMS


class RegimeError(StealthError, ValueError):
    """A parameter lies outside the regime where a result holds."""

    code = INVALID_PARAMS


class ConfigError(StealthError, ValueError):
    """An experiment configuration is invalid."""

    code = INVALID_PARAMS


class NotPositiveDefiniteError(StealthError, ArithmeticError):
    """A covariance is asymmetric, indefinite or numerically singular."""


class IntegrationError(StealthError, ArithmeticError):
    """Numerical quadrature did not reach the requested accuracy."""


class InvariantViolation(StealthError, ArithmeticError):
    """An experiment row broke one of its output invariants."""
