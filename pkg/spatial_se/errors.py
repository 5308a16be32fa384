"""
Exception types that carry the CLI exit-code contract.

Library functions raise plain built-ins (ValueError for bad arguments or shapes) for
precondition failures; the classes below mark failures the pipeline maps to a
specific process exit status.
"""


class SpatialSEError(Exception):
    exit_code = 1


class ConfigError(SpatialSEError, ValueError):
    """Config validation failure; `key` is the dotted path of the offending field."""
    exit_code = 2

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


class MissingInputError(SpatialSEError, FileNotFoundError):
    exit_code = 3


class PartialOutputError(MissingInputError):
    """A stage directory holds outputs but no completion record."""


class NumericalError(SpatialSEError, ArithmeticError):
    exit_code = 4


class SceneSamplingError(SpatialSEError, RuntimeError):
    exit_code = 4
