"""Exception types raised across the package."""


class SinrLabError(Exception):
    """Base class for all package errors."""


class NotVisible(SinrLabError, ValueError):
    """The satellite is below the user's horizon."""


class DegenerateMixture(SinrLabError, ValueError):
    pass


class EmptyGroup(SinrLabError, ValueError):
    pass


class NumericalFailure(SinrLabError, ArithmeticError):
    pass


class DimensionMismatch(SinrLabError, ValueError):
    pass


class ShapeMismatch(SinrLabError, ValueError):
    pass


class InvalidUv(SinrLabError, ValueError):
    pass


class AllMasked(SinrLabError, ValueError):
    pass


class EmptySet(SinrLabError, ValueError):
    pass


class PopulationTooSmall(SinrLabError, ValueError):
    pass


class ZeroVector(SinrLabError, ValueError):
    pass


class NoEligibleUsers(SinrLabError, RuntimeError):
    pass


class NonFiniteLoss(SinrLabError, ArithmeticError):
    pass


class ConfigError(SinrLabError, ValueError):
    pass


class ModelFileError(SinrLabError, ValueError):
    pass


class DisconnectedGraph(UserWarning):
    """Emitted when a watched tensor does not influence the loss."""
