"""Exception hierarchy shared across the package.

Two branches matter for the CLI / service exit-code contract:
``ConfigError`` maps to a usage failure (exit 1, HTTP 422) and
``DataError`` to a data failure (exit 2, HTTP 400).
"""


class CbmvError(Exception):
    """Base class for all package errors."""


class ConfigError(CbmvError):
    """Invalid configuration: unknown keys, bad values, inconsistent params."""


class DataError(CbmvError):
    """Invalid or unusable input data."""


class FileFormatError(DataError):
    """Malformed or truncated image / disparity / model file."""


class ModelFormatError(FileFormatError):
    """Forest model file fails validation (version, layout, structure)."""


class EmptyTrainingSetError(DataError):
    """No usable ground-truth pixels to sample training data from."""


class DegenerateTrainingError(DataError):
    """Training set contains a single class; no classifier can be fit."""


class EmptyEvaluationError(DataError):
    """No pixels left to evaluate after masking."""
