"""Carbon-aware GPU power-limit control for DNN training.

Forecast short-term grid carbon intensity from cyclical time features, pick a
GPU power limit per period by minimising a weighted carbon/time cost, and
replay the whole loop deterministically against recorded carbon traces.
"""

from chase.trace import CarbonTrace, TraceError, TraceSource, fetch_trace, intensity_at, parse_trace, window_max
from chase.profile import PowerProfile, ProfileEntry, SimulatedGpu, energy_per_sample, parse_profile, profile_gpu
from chase.optimizer import OptimizerConfig, PeriodDecision, cta, period_cost, select_power_limit, total_cost
from chase.forecast import (
    ForecastModel,
    build_features,
    evaluate_models,
    fit_linear,
    fit_svr,
    forecast_horizon,
    mape,
    predict_one,
)
from chase.simulator import (
    ComparisonSummary,
    ForecasterSpec,
    SimReport,
    SimulationError,
    TrainingJob,
    compare,
    emit_timeline,
    run_baseline,
    run_carbon_aware,
)

__version__ = "0.1.0"

__all__ = [
    "CarbonTrace",
    "ComparisonSummary",
    "ForecastModel",
    "ForecasterSpec",
    "OptimizerConfig",
    "PeriodDecision",
    "PowerProfile",
    "ProfileEntry",
    "SimReport",
    "SimulatedGpu",
    "SimulationError",
    "TraceError",
    "TraceSource",
    "TrainingJob",
    "build_features",
    "compare",
    "cta",
    "emit_timeline",
    "energy_per_sample",
    "evaluate_models",
    "fetch_trace",
    "fit_linear",
    "fit_svr",
    "forecast_horizon",
    "intensity_at",
    "mape",
    "parse_profile",
    "parse_trace",
    "period_cost",
    "predict_one",
    "profile_gpu",
    "run_baseline",
    "run_carbon_aware",
    "select_power_limit",
    "total_cost",
    "window_max",
]
