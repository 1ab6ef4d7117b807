"""Exception hierarchy shared by all cavsim modules."""


class CavsimError(Exception):
    """Base class for every error raised by cavsim."""


class ConfigurationError(CavsimError, ValueError):
    """Invalid scenario, network or parameter configuration."""


class OutOfRangeError(CavsimError, ValueError):
    """Argument outside the domain of an operation (arc-length, time window)."""


class NumericError(CavsimError, ArithmeticError):
    """Non-finite input or a numerically singular problem."""


class DegenerateHorizonError(NumericError):
    """Planning horizon too short to define a trajectory."""


class ProtocolError(CavsimError, RuntimeError):
    """Coordinator protocol misuse (double registration, unknown vehicle)."""


class UsageError(CavsimError, ValueError):
    """Operation called on arguments that violate its preconditions."""


class ComparisonError(CavsimError, ValueError):
    """Baseline and optimal traces cannot be joined."""


class InfeasiblePlanError(CavsimError):
    """A closed-form plan leaves the admissible speed/control range.

    Raised by the engine so a run aborts instead of executing a plan that
    would need a constrained arc.
    """

    def __init__(self, message, vehicle=None, zone=None, bound=None):
        super().__init__(message)
        self.vehicle = vehicle
        self.zone = zone
        self.bound = bound
