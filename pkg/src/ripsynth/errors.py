"""Exception types shared across the toolkit."""


class ToolkitError(Exception):
    """Base class for all errors raised by ripsynth."""


class DimensionError(ToolkitError, ValueError):
    """Matrix or vector shapes are inconsistent with the operation."""


class ParameterError(ToolkitError, ValueError):
    """Physical parameters violate their admissibility constraints."""


class ConvergenceError(ToolkitError, ArithmeticError):
    """An iterative numerical method failed to converge."""


class SingularMatrixError(ToolkitError, ArithmeticError):
    """A matrix required to be invertible is singular to working tolerance."""


class NotPositiveDefiniteError(ToolkitError, ArithmeticError):
    """A matrix required to be positive definite has a non-positive pivot."""


class SynthesisError(ToolkitError, RuntimeError):
    """Controller synthesis failed (non-stabilizable pair or divergence)."""


class PrefilterError(ToolkitError, RuntimeError):
    """A prefilter gain does not exist because an inverse is singular."""


class ConditioningError(ToolkitError, RuntimeError):
    """A kernel matrix stayed indefinite after the jitter escalation ladder."""


class ConfigError(ToolkitError, ValueError):
    """An experiment configuration is invalid or incomplete."""
