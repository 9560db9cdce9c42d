"""Exception types shared across the toolkit.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2,
TrainingError -> 3.
"""


class ConfigError(ValueError):
    """Invalid or inconsistent run configuration."""


class DataError(ValueError):
    """Input data violates a contract (empty, misaligned, malformed)."""


class TrainingError(RuntimeError):
    """Model training failed (e.g. loss diverged to a non-finite value)."""
