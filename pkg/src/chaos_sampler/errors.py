"""Exception hierarchy shared by all modules."""


class ChaosSamplerError(Exception):
    """Base class for library errors."""


class InvalidArgumentError(ChaosSamplerError, ValueError):
    pass


class InvalidDimensionError(InvalidArgumentError):
    pass


class UnsupportedSizeError(InvalidArgumentError):
    pass


class NumericFailureError(ChaosSamplerError, ArithmeticError):
    pass


class DegenerateConditioningError(NumericFailureError):
    """Collision-free raw probability mass too small to condition on."""

    def __init__(self, mass: float, threshold: float):
        super().__init__(
            f"collision-free raw mass {mass:.3e} is below {threshold:.0e}; "
            "conditional distribution undefined"
        )
        self.mass = mass
        self.threshold = threshold


class EmptyRecordError(InvalidArgumentError):
    pass


class DegenerateSpectrumError(NumericFailureError):
    pass


class UnderflowError(NumericFailureError):
    pass
