from chase.forecast.evaluation import EvalReport, evaluate_models, fit_model, mape, walk_forward
from chase.forecast.features import FeatureRow, build_features, feature_row, step_of_day, steps_per_day, time_features
from chase.forecast.models import (
    ConvergenceWarning,
    ForecastModel,
    dumps_model,
    fit_linear,
    fit_svr,
    forecast_horizon,
    loads_model,
    model_from_dict,
    model_to_dict,
    persistence_model,
    predict_one,
)

__all__ = [
    "ConvergenceWarning",
    "EvalReport",
    "FeatureRow",
    "ForecastModel",
    "build_features",
    "dumps_model",
    "evaluate_models",
    "feature_row",
    "fit_linear",
    "fit_model",
    "fit_svr",
    "forecast_horizon",
    "loads_model",
    "mape",
    "model_from_dict",
    "model_to_dict",
    "persistence_model",
    "predict_one",
    "step_of_day",
    "steps_per_day",
    "time_features",
    "walk_forward",
]
