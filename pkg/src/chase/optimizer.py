"""Carbon/time cost model and per-period power-limit selection.

All costs are in grams of CO2. Power (W) times seconds times intensity
(g/kWh) is converted once, here, by dividing by ``J_PER_KWH``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from chase.profile import PowerProfile

J_PER_KWH = 3.6e6


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class OptimizerConfig:
    """Trade-off weight and the normalising constants of the cost.

    ``eta`` = 1 optimises carbon alone, 0 optimises training time alone.
    ``period`` is the re-optimisation interval in seconds; ``None`` means one
    trace step. ``max_power`` and ``max_carbon_intensity`` left as ``None`` are
    filled in by the simulator (largest profiled limit, and the highest
    intensity seen in the pre-job history window).
    """

    eta: float = 0.5
    max_power: float | None = None
    max_carbon_intensity: float | None = None
    period: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.eta <= 1.0:
            raise ConfigError(f"eta must lie in [0, 1], got {self.eta}")
        if self.max_power is not None and not (math.isfinite(self.max_power) and self.max_power > 0):
            raise ConfigError(f"max_power must be positive, got {self.max_power}")
        if self.max_carbon_intensity is not None and not (
            math.isfinite(self.max_carbon_intensity) and self.max_carbon_intensity > 0
        ):
            raise ConfigError(f"max_carbon_intensity must be positive, got {self.max_carbon_intensity}")
        if self.period is not None and self.period <= 0:
            raise ConfigError(f"period must be positive, got {self.period}")

    def _constants(self) -> tuple[float, float]:
        if self.max_power is None or self.max_carbon_intensity is None:
            raise ConfigError("max_power and max_carbon_intensity must be set before computing costs")
        return self.max_power, self.max_carbon_intensity

    def check_profile(self, profile: PowerProfile) -> None:
        if self.max_power is not None and self.max_power < profile.max_limit:
            raise ConfigError(f"max_power {self.max_power} W is below the largest profiled limit {profile.max_limit} W")

    def check_interval(self, interval: int) -> None:
        if self.period is not None and (self.period < interval or self.period % interval):
            raise ConfigError(f"period {self.period} s must be a positive multiple of the trace interval {interval} s")


@dataclass(frozen=True)
class PeriodDecision:
    period_start: int
    forecast_ci: float | None
    chosen_limit: int
    costs: tuple[tuple[int, float], ...] = ()

    @property
    def chosen_cost(self) -> float | None:
        for limit, c in self.costs:
            if limit == self.chosen_limit:
                return c
        return None


def cta(tta: float, avg_power: float, avg_ci: float) -> float:
    """Carbon to reach the target: seconds x watts x g/kWh, in grams."""
    return tta * avg_power * avg_ci / J_PER_KWH


def total_cost(tta: float, avg_power: float, avg_ci: float, cfg: OptimizerConfig) -> float:
    max_power, max_ci = cfg._constants()
    weighted = cfg.eta * avg_power * avg_ci + (1.0 - cfg.eta) * max_power * max_ci
    return tta * weighted / J_PER_KWH


def period_cost(profile: PowerProfile, limit: int, ci: float, cfg: OptimizerConfig) -> float:
    """Cost per training sample (g) of running one period at ``limit``."""
    max_power, max_ci = cfg._constants()
    e = profile.entry(limit)
    numerator = cfg.eta * e.avg_power * ci + (1.0 - cfg.eta) * max_power * max_ci
    return numerator / (J_PER_KWH * e.throughput)


def select_power_limit(profile: PowerProfile, ci: float, cfg: OptimizerConfig, period_start: int = 0) -> PeriodDecision:
    """Pick the limit with the lowest per-sample cost; ties go to the lower limit."""
    if ci < 0:
        raise ValueError(f"carbon intensity must be non-negative, got {ci}")
    cfg.check_profile(profile)
    costs = tuple((limit, period_cost(profile, limit, ci, cfg)) for limit in profile.limits)
    best_limit, best_cost = costs[0]
    for limit, c in costs[1:]:
        if c < best_cost:
            best_limit, best_cost = limit, c
    return PeriodDecision(period_start, float(ci), best_limit, costs)
