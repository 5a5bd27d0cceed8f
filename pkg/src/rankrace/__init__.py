"""rankrace: equilibria and optimal reward design for rank-based competitions."""

__version__ = "0.1.0"

from .errors import (
    AbsorbedBeforeTarget,
    CostAssumptionViolated,
    InfeasibleChallenger,
    InvalidCost,
    InvalidGrid,
    InvalidParameter,
    Negative,
    NonFiniteIntegrand,
    NotDecreasing,
    NotLeftContinuousAtOne,
    NumericalError,
    RankRaceError,
    ValidationError,
)
from .piecewise import (
    Affine,
    Constant,
    PiecewiseFn,
    Power,
    PowerCombo,
    Tabulated,
    Trajectory,
    constant_fn,
    integrate_sqrt_weight,
    quantile,
    solve_state_ode,
    step_fn,
)

__all__ = [name for name in dir() if not name.startswith("_")]
