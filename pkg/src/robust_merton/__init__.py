"""Robust Merton portfolios under time-dependent drift and volatility uncertainty."""

from .errors import DomainError, InadmissibleStrategyError, InvalidInputError, ValidationError
from .simulator import (
    ParameterPath,
    PathConfig,
    Scheme,
    Segment,
    SimEstimate,
    StepFunction,
    estimate_expected_utility,
    simulate_assets,
    simulate_wealth_cash,
    simulate_wealth_fraction,
)
from .solver import (
    CellSolution,
    ContinuousProfile,
    RobustSolution,
    Scenario,
    continuous_limit_value,
    mesh_refinement_series,
    solve,
    strategy_at,
    value_at,
)
from .uncertainty import (
    DriftBall,
    DriftBox,
    TimeGrid,
    UncertaintyCell,
    UncertaintySchedule,
    VolSet,
    make_cell,
    validate_schedule,
    worst_case_covariance,
    worst_case_drift,
    worst_case_vol_factor,
)
from .utility import ExponentialUtility, LogUtility, PowerUtility
from .verification import (
    analytic_expected_utility,
    hjb_residual,
    martingale_check,
    optimal_strategy,
    saddle_point_scan,
    shape_check,
    worst_case_path,
)

__version__ = "0.1.0"
