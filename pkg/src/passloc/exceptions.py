"""Exception types raised across the package."""


class InvalidParameterError(ValueError):
    """A numeric argument is outside its admissible range."""


class DegenerateGeometryError(ValueError):
    """A target coincides with the transmitter or a receiver where that is not allowed."""


class DegenerateLinearizationError(ArithmeticError):
    """A Taylor expansion point sits exactly on the transmitter or a receiver."""


class NoInformationError(ArithmeticError):
    """Every Gaussian factor in a product is vacuous."""


class DegenerateMessageError(ArithmeticError):
    """Dividing one Gaussian by another left a non-positive precision."""


class WeightCollapseError(ArithmeticError):
    """All particle weights of a node vanished and re-drawing did not help."""


class RankDeficiencyError(ArithmeticError):
    """An information matrix (or one of its blocks) is numerically singular."""
