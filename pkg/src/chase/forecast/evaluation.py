"""Walk-forward evaluation of forecasters on a held-out trace suffix."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from chase.forecast.features import build_features, step_of_day, steps_per_day
from chase.forecast.models import ForecastModel, fit_linear, fit_svr, persistence_model, predict_one
from chase.trace import CarbonTrace

KNOWN_MODELS = ("linear", "svr", "persistence")


def mape(actual: Sequence[float], predicted: Sequence[float]) -> float:
    """Mean absolute percentage error, in percent."""
    a = np.asarray(actual, dtype=float)
    p = np.asarray(predicted, dtype=float)
    if a.shape != p.shape:
        raise ValueError(f"length mismatch: {a.shape} vs {p.shape}")
    if a.size == 0:
        raise ValueError("mape of an empty series")
    if np.any(a == 0):
        raise ValueError("mape undefined for zero actual values")
    return float(100.0 / a.size * np.sum(np.abs(a - p) / np.abs(a)))


@dataclass
class EvalReport:
    split: dict
    actual: list[float]
    mape: dict[str, float] = field(default_factory=dict)
    predictions: dict[str, list[float]] = field(default_factory=dict)
    models: dict[str, ForecastModel] = field(default_factory=dict, repr=False)

    def to_dict(self) -> dict:
        return {
            "split": dict(self.split),
            "mape_pct": dict(self.mape),
            "actual": list(self.actual),
            "predictions": {k: list(v) for k, v in self.predictions.items()},
        }

    def table(self) -> str:
        width = max(len("model"), *(len(k) for k in self.mape))
        lines = [f"{'model':<{width}}  {'MAPE %':>8}", "-" * (width + 10)]
        lines += [f"{k:<{width}}  {v:>8.3f}" for k, v in self.mape.items()]
        s = self.split
        lines.append(
            f"fit {s['fit_points']} pts / test {s['test_points']} pts / {s['predictions']} one-step predictions"
        )
        return "\n".join(lines)


def fit_model(kind: str, trace: CarbonTrace, **hyper) -> ForecastModel:
    T = steps_per_day(trace.interval)
    if kind == "persistence":
        return persistence_model(T)
    rows, targets = build_features(trace, T)
    if kind == "linear":
        return fit_linear(rows, targets, T)
    if kind == "svr":
        return fit_svr(rows, targets, T, **hyper)
    raise ValueError(f"unknown model kind {kind!r}; choose from {KNOWN_MODELS}")


def walk_forward(model: ForecastModel, trace: CarbonTrace, first: int) -> list[float]:
    """One-step predictions for indices ``first..`` fed the true previous value."""
    return [
        predict_one(model, step_of_day(trace.timestamp(i), trace.interval), trace.intensities[i - 1])
        for i in range(first, len(trace))
    ]


def evaluate_models(
    trace: CarbonTrace,
    fit_window: int,
    models: Sequence[str] = ("linear", "svr"),
    svr_params: dict | None = None,
) -> EvalReport:
    """Fit on the first ``fit_window`` points, score one-step forecasts on the rest.

    The first test prediction is seeded by the last fit-window value, so the
    number of predictions equals the number of test points. A persistence
    baseline is always appended.
    """
    if fit_window < 2:
        raise ValueError("fit window needs at least 2 points")
    if len(trace) <= fit_window + 1:
        raise ValueError(f"trace of {len(trace)} points too short for fit window {fit_window}")
    fit_trace = CarbonTrace(trace.start_time, trace.interval, trace.intensities[:fit_window])
    actual = list(trace.intensities[fit_window:])
    kinds = [k for k in dict.fromkeys(models) if k != "persistence"] + ["persistence"]

    report = EvalReport(
        split={
            "fit_points": fit_window,
            "test_points": len(trace) - fit_window,
            "predictions": len(actual),
            "fit_start": trace.start_time,
            "test_start": trace.timestamp(fit_window),
            "interval_s": trace.interval,
        },
        actual=actual,
    )
    for kind in kinds:
        hyper = (svr_params or {}) if kind == "svr" else {}
        model = fit_model(kind, fit_trace, **hyper)
        pred = walk_forward(model, trace, fit_window)
        report.models[kind] = model
        report.predictions[kind] = pred
        report.mape[kind] = mape(actual, pred)
    return report
