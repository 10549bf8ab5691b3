"""
Error hierarchy shared by every nfris package.
"""

from typing import Optional


class NfrisError(Exception):
    """Root of all library errors."""


class DomainError(NfrisError, ValueError):
    """A numeric argument lies outside the domain an operation accepts."""


class GeometryError(NfrisError, ValueError):
    """Positions, masks or partitions are inconsistent with the requested operation."""


class DimensionMismatchError(NfrisError, ValueError):
    """Two inputs that must agree in size do not."""


class ConfigError(NfrisError):
    """
    Experiment configuration failed validation.

    Attributes:
        key_path: Dotted path of the offending key (e.g. ``geometry.lambda``)
    """

    def __init__(self, message: str, key_path: Optional[str] = None):
        self.key_path = key_path
        if key_path:
            message = f"{key_path}: {message}"
        super().__init__(message)
