"""Seeded synthetic diurnal carbon traces."""

from __future__ import annotations

import numpy as np

from chase.trace import CarbonTrace

# 2023-01-15 00:00 UTC; midnight-aligned so step 0 sits at phase zero
DEFAULT_START = 1673740800


def synth_trace(
    mean: float = 550.0,
    amplitude: float = 150.0,
    period_steps: int = 48,
    noise_sigma: float = 10.0,
    length: int = 552,
    interval: int = 1800,
    start: int = DEFAULT_START,
    seed: int = 0,
) -> CarbonTrace:
    """``mean + amplitude * sin(2 pi k / period_steps) + N(0, noise_sigma)``, floored at 0."""
    if length < 1 or period_steps < 1 or interval < 1:
        raise ValueError("length, period_steps and interval must be positive")
    rng = np.random.default_rng(seed)
    k = np.arange(length)
    values = mean + amplitude * np.sin(2.0 * np.pi * k / period_steps)
    if noise_sigma > 0:
        values = values + rng.normal(0.0, noise_sigma, size=length)
    return CarbonTrace(int(start), int(interval), tuple(float(v) for v in np.maximum(values, 0.0)))
