"""Exception types raised across the package."""


class Kl2BiasError(Exception):
    """Base class for all errors raised by kl2bias."""


# audio / features
class UnsupportedFormat(Kl2BiasError, ValueError):
    pass


class CorruptHeader(Kl2BiasError, ValueError):
    pass


class InputTooShort(Kl2BiasError, ValueError):
    pass


class MalformedRow(Kl2BiasError, ValueError):
    pass


class NonFiniteValue(Kl2BiasError, ValueError):
    pass


# statistics / metrics
class InsufficientData(Kl2BiasError, ValueError):
    pass


class SingularCovariance(Kl2BiasError, ArithmeticError):
    pass


class DimensionMismatch(Kl2BiasError, ValueError):
    pass


class NumericalAnomaly(Kl2BiasError, ArithmeticError):
    pass


class EmptyInput(Kl2BiasError, ValueError):
    pass


# calibration
class MetricFailure(Kl2BiasError, RuntimeError):
    """Too many trials of one surface cell failed."""

    def __init__(self, message, cell=None):
        super().__init__(message)
        self.cell = cell


class DegenerateSurface(Kl2BiasError, ValueError):
    pass


class SchemaMismatch(Kl2BiasError, ValueError):
    pass


class CorruptFile(Kl2BiasError, ValueError):
    pass


# clustering / evaluation
class InvalidK(Kl2BiasError, ValueError):
    pass


class IdMismatch(Kl2BiasError, ValueError):
    pass


class SubsetTooLarge(Kl2BiasError, ValueError):
    pass
