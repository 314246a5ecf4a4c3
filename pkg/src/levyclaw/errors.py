"""Exception and warning types shared across the package."""

from __future__ import annotations


class LevyClawError(Exception):
    """Base class for errors raised by levyclaw."""


class InvalidMeasure(LevyClawError, ValueError):
    """A Levy measure spec is outside the admissible range or not integrable."""


class KernelUnderresolved(LevyClawError, ValueError):
    """The heat kernel is narrower than one grid cell."""


class CFLViolation(LevyClawError, ValueError):
    """An explicit step was requested with a time step above the stability bound."""


class UnboundedEntropy(LevyClawError, ValueError):
    """The entropy derivative exceeded its declared bound on the visited range."""


class ConfigMismatch(LevyClawError, ValueError):
    """Two runs that must be coupled differ in something besides initial data."""


class ConfigError(LevyClawError, ValueError):
    """An experiment configuration failed validation."""


class SupportWrap(UserWarning):
    """The solution reached the boundary margin of the periodic torus."""
