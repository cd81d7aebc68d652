"""Exception types shared across the package."""

from __future__ import annotations


class ConfigError(ValueError):
    """A configuration value is missing, unknown, or violates an invariant."""


class FieldNullError(ValueError):
    """A field was queried where the standing wave is below the null floor."""


class UndefinedPhaseError(ValueError):
    """An effective pulse phase was requested where it is not defined."""


class EstimationError(RuntimeError):
    """A Monte Carlo estimate could not be formed (e.g. no surviving atoms)."""


class ConversionError(ValueError):
    """A delta-P value could not be converted to a frequency shift."""


class OutputError(OSError):
    """A result file could not be written as requested."""
