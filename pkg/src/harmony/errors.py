"""Exception types shared across the package.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
TrainingError -> 3.
"""


class HarmonyError(Exception):
    """Base class for all package errors."""


class ConfigError(HarmonyError):
    """Invalid configuration or command-line usage."""


class DataError(HarmonyError):
    """Dataset ingestion, validation, or file-format failure."""


class GeometryError(DataError):
    """Synthetic cluster centers cannot be placed as requested."""


class TrainingError(HarmonyError):
    """A model training stage failed (non-finite loss, bad stage input)."""


class WeakDetectionError(HarmonyError):
    """Weak-class detection produced a partition the ensemble cannot use."""
