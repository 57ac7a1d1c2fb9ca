"""Exception hierarchy shared by the toolkit.

Each class maps to one CLI exit code (see ``drugrel.cli``):
config 2, data 3, missing artifact 4, numeric failure 5.
"""


class DrugRelError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(DrugRelError):
    """Invalid or inconsistent run configuration (exit code 2)."""


class DataError(DrugRelError):
    """Malformed corpus files or invariant-violating records (exit code 3)."""


class MissingArtifactError(DrugRelError):
    """A required checkpoint, vocabulary or manifest is absent (exit code 4)."""


class NumericError(DrugRelError):
    """Non-finite values in training or inference (exit code 5)."""
