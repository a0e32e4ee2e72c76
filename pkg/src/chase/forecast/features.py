"""Cyclical time-of-day features with a one-step lag."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np

from chase.trace import CarbonTrace

SECONDS_PER_DAY = 86400


class FeatureRow(NamedTuple):
    sin_time: float
    cos_time: float
    prev_intensity: float


def steps_per_day(interval: int) -> int:
    if interval <= 0 or SECONDS_PER_DAY % interval:
        raise ValueError(f"trace interval {interval} s does not divide a day evenly")
    return SECONDS_PER_DAY // interval


def step_of_day(timestamp: float, interval: int) -> float:
    """Position within the UTC day, in trace steps (midnight is 0)."""
    return (timestamp % SECONDS_PER_DAY) / interval


def time_features(t: float, period: int) -> tuple[float, float]:
    angle = 2.0 * math.pi * t / period
    return math.sin(angle), math.cos(angle)


def feature_row(t: float, period: int, prev: float) -> FeatureRow:
    s, c = time_features(t, period)
    return FeatureRow(s, c, float(prev))


def build_features(trace: CarbonTrace, period: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Design matrix ``(n-1, 3)`` of (sin, cos, previous intensity) and targets.

    Row ``i`` predicts ``intensities[i + 1]``; its time features encode the
    target's time of day.
    """
    if len(trace) < 2:
        raise ValueError("need at least 2 samples to build lagged features")
    expected = steps_per_day(trace.interval)
    if period is None:
        period = expected
    if isinstance(period, bool) or not isinstance(period, int) or period <= 0:
        raise ValueError(f"steps per day must be a positive integer, got {period!r}")
    if period != expected:
        raise ValueError(f"steps per day {period} inconsistent with interval {trace.interval} s (expected {expected})")

    values = np.asarray(trace.intensities, dtype=float)
    rows = np.empty((len(values) - 1, 3))
    for i in range(1, len(values)):
        t = step_of_day(trace.timestamp(i), trace.interval)
        rows[i - 1, 0], rows[i - 1, 1] = time_features(t, period)
        rows[i - 1, 2] = values[i - 1]
    return rows, values[1:].copy()
