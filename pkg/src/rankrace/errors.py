"""Exception types raised by the solvers.

ValidationError subclasses signal rejected inputs (CLI exit code 2);
NumericalError subclasses signal failures inside a computation (exit code 3).
"""


class RankRaceError(Exception):
    """Base class for all package errors."""


class ValidationError(RankRaceError):
    """An input violates a model assumption."""


class NumericalError(RankRaceError):
    """A numerical routine could not produce a trustworthy result."""


class NotDecreasing(ValidationError):
    """Reward scheme increases somewhere; rewards must be non-increasing in rank."""


class Negative(ValidationError):
    """Reward scheme takes a negative value."""


class NotLeftContinuousAtOne(ValidationError):
    """Reward drops at rank 1 itself.

    Paying strictly less to agents that never finish than the limit paid to
    late finishers makes the supremum unattainable: arbitrarily small effort
    beats every actual control, so no equilibrium exists.
    """


class InvalidParameter(ValidationError):
    """A scalar parameter is outside its admissible range."""


class InvalidGrid(ValidationError):
    """A rank grid is not strictly increasing from 0 to 1, or sizes mismatch."""


class InvalidCost(ValidationError):
    """Cost coefficient is not strictly positive or not continuous."""


class CostAssumptionViolated(ValidationError):
    """The cost shape condition for the optimal-contract formula fails.

    The formula for the optimal reward scheme is only monotone (hence a valid
    scheme) when r -> c(r)(1-r)/(2-r) is non-increasing; outside that regime
    the monotonicity constraint binds and no closed form is available.
    """


class InfeasibleChallenger(ValidationError):
    """A challenger in the optimality certificate violates the budget or shape constraints."""


class AbsorbedBeforeTarget(ValidationError):
    """Equilibrium effort vanishes before the simulation target head count is reached."""


class NonFiniteIntegrand(NumericalError):
    """An integrand evaluated to NaN or infinity inside the integration range."""
