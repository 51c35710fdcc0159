"""
Utilities for the stealth_grid toolkit.
"""

from .base_server import BaseToolServer
from .errors import (
    CaseParseError,
    CaseValidationError,
    ConfigError,
    DimensionError,
    IntegrationError,
    InvariantViolation,
    NotPositiveDefiniteError,
    RegimeError,
    StealthError,
)

__all__ = [
    "BaseToolServer",
    "StealthError",
    "CaseParseError",
    "CaseValidationError",
    "ConfigError",
    "DimensionError",
    "IntegrationError",
    "InvariantViolation",
    "NotPositiveDefiniteError",
    "RegimeError",
]
