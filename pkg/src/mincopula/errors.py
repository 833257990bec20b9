"""Exception hierarchy shared by all modules."""


class MinCopulaError(Exception):
    """Base class for all errors raised by the package."""


class ShapeError(MinCopulaError, ValueError):
    pass


class InvalidAxes(MinCopulaError, ValueError):
    pass


class InvalidArray(MinCopulaError, ValueError):
    """Values violate the probability-array or moment-array invariants."""


class InvalidParameter(MinCopulaError, ValueError):
    pass


class DomainError(MinCopulaError, ValueError):
    pass


class NumericalError(MinCopulaError, ArithmeticError):
    pass


class DegenerateMoment(MinCopulaError):
    """The moment array is constant where it matters, so the constraint is vacuous or unsatisfiable."""


class InfeasibleScaling(MinCopulaError):
    """A positive target mass was requested on a block carrying no mass."""


class InvalidGISFamily(MinCopulaError, ValueError):
    pass


class TargetOutOfRange(MinCopulaError):
    """The requested expectation is not attainable by an exponential tilt."""


class OracleBudgetExceeded(MinCopulaError):
    pass


class ConfigError(MinCopulaError, ValueError):
    pass
