"""
Exception hierarchy for the Hawkes POT library.
Every error carries the process exit code the CLI should return for it.
"""


class HawkesPotError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ParameterError(HawkesPotError, ValueError):
    """Raised when distribution or model parameters are invalid."""

    exit_code = 4


class StructuralError(HawkesPotError, ValueError):
    """Raised when a branching structure is inconsistent with its events."""

    exit_code = 4


class DataError(HawkesPotError):
    """Raised for unusable input data (bad rows, duplicates, empty splits)."""

    exit_code = 3


class ConfigError(HawkesPotError):
    """Raised for unknown or malformed configuration keys."""

    exit_code = 2


class NumericalError(HawkesPotError, ArithmeticError):
    """Raised when a sampler hits a numerically degenerate state."""

    exit_code = 4

    def __init__(self, message: str, iteration: int | None = None, model: str | None = None):
        """
        Args:
            message: What went wrong
            iteration: MCMC iteration at which it happened, if known
            model: Model tag (e.g. "DP+hier"), if known
        """
        context = []
        if model:
            context.append(f"model={model}")
        if iteration is not None:
            context.append(f"iteration={iteration}")
        if context:
            message = f"{message} ({', '.join(context)})"
        super().__init__(message)
        self.iteration = iteration
        self.model = model
