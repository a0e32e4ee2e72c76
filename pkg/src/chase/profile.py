"""Per-power-limit GPU measurements: average power and training throughput."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

# A measured average may overshoot the cap by this factor before we call it bogus.
POWER_OVERSHOOT = 1.05

DEFAULT_LIMITS = tuple(range(100, 301, 25))


class ProfileError(ValueError):
    pass


@dataclass(frozen=True)
class ProfileEntry:
    limit: int
    avg_power: float
    throughput: float


@dataclass(frozen=True)
class PowerProfile:
    entries: tuple[ProfileEntry, ...]
    gpu: str = "unknown"

    def __post_init__(self):
        entries = tuple(self.entries)
        if len(entries) < 2:
            raise ProfileError(f"profile needs at least 2 entries, got {len(entries)}")
        seen = set()
        for e in entries:
            if e.limit in seen:
                raise ProfileError(f"duplicate power limit {e.limit} W")
            seen.add(e.limit)
            if isinstance(e.limit, bool) or not isinstance(e.limit, int) or e.limit <= 0:
                raise ProfileError(f"power limit must be a positive integer, got {e.limit!r}")
            if not (math.isfinite(e.throughput) and e.throughput > 0):
                raise ProfileError(f"throughput at {e.limit} W must be positive, got {e.throughput!r}")
            if not (math.isfinite(e.avg_power) and e.avg_power > 0):
                raise ProfileError(f"average power at {e.limit} W must be positive, got {e.avg_power!r}")
            if e.avg_power > e.limit * POWER_OVERSHOOT:
                raise ProfileError(f"average power {e.avg_power} W exceeds limit {e.limit} W by more than 5%")
        if any(a.limit >= b.limit for a, b in zip(entries, entries[1:])):
            raise ProfileError("power limits must be strictly increasing")
        object.__setattr__(self, "entries", entries)

    @property
    def limits(self) -> list[int]:
        return [e.limit for e in self.entries]

    @property
    def max_limit(self) -> int:
        return self.entries[-1].limit

    def entry(self, limit: int) -> ProfileEntry:
        for e in self.entries:
            if e.limit == limit:
                return e
        raise ProfileError(f"power limit {limit} W not in profile {self.limits}")


def parse_profile(text: str) -> PowerProfile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProfileError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or not isinstance(doc.get("entries"), list):
        raise ProfileError("profile JSON needs an 'entries' list")
    entries = []
    for i, raw in enumerate(doc["entries"]):
        try:
            limit = raw["limit_w"]
            avg_power = raw["avg_power_w"]
            throughput = raw["throughput_sps"]
        except (KeyError, TypeError):
            raise ProfileError(f"entry {i} needs limit_w, avg_power_w, throughput_sps") from None
        if isinstance(limit, float) and limit.is_integer():
            limit = int(limit)
        for name, v in (("avg_power_w", avg_power), ("throughput_sps", throughput)):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ProfileError(f"entry {i}: {name} must be a number")
        entries.append(ProfileEntry(limit, float(avg_power), float(throughput)))
    # Input order is not trusted; the invariant is checked on the sorted list.
    entries.sort(key=lambda e: e.limit if isinstance(e.limit, int) else 0)
    return PowerProfile(tuple(entries), gpu=str(doc.get("gpu", "unknown")))


def serialize_profile(profile: PowerProfile) -> str:
    doc = {
        "gpu": profile.gpu,
        "entries": [
            {"limit_w": e.limit, "avg_power_w": e.avg_power, "throughput_sps": e.throughput}
            for e in profile.entries
        ],
    }
    return json.dumps(doc, indent=2) + "\n"


def energy_per_sample(profile: PowerProfile, limit: int) -> float:
    """Joules per training sample at ``limit``."""
    e = profile.entry(limit)
    return e.avg_power / e.throughput


@dataclass(frozen=True)
class SimulatedGpu:
    """Ground-truth power and throughput curves standing in for real hardware.

    Both curves map a power limit in watts to a value and are expected to be
    monotone non-decreasing over ``[min_power, max_power]``.
    """

    name: str
    max_power: float
    power_curve: Callable[[float], float]
    throughput_curve: Callable[[float], float]
    min_power: float = 0.0


def a40_like() -> SimulatedGpu:
    """A 300 W card with sub-linear throughput scaling.

    Power tracks 95% of the cap and throughput grows as ``p**0.86``, so energy
    per sample rises slowly with the limit while speed rises quickly.
    """
    return SimulatedGpu(
        name="sim-a40",
        max_power=300.0,
        min_power=100.0,
        power_curve=lambda p: 0.95 * p,
        throughput_curve=lambda p: 850.0 * (p / 300.0) ** 0.86,
    )


def profile_gpu(
    gpu: SimulatedGpu,
    limits: Iterable[int] = DEFAULT_LIMITS,
    noise_sigma: float = 0.0,
    seed: int = 0,
) -> PowerProfile:
    """Evaluate ``gpu``'s curves at each requested limit.

    With ``noise_sigma > 0`` each measurement is multiplied by ``1 + N(0, sigma)``
    drawn from a generator seeded with ``seed``.
    """
    limits: Sequence[int] = list(limits)
    rng = np.random.default_rng(seed)
    entries = []
    for limit in limits:
        if not gpu.min_power <= limit <= gpu.max_power:
            raise ProfileError(f"limit {limit} W outside {gpu.name} range [{gpu.min_power}, {gpu.max_power}]")
        power = float(gpu.power_curve(limit))
        thr = float(gpu.throughput_curve(limit))
        if noise_sigma > 0:
            power *= 1.0 + float(rng.normal(0.0, noise_sigma))
            thr *= 1.0 + float(rng.normal(0.0, noise_sigma))
        entries.append(ProfileEntry(int(limit), power, thr))
    return PowerProfile(tuple(entries), gpu=gpu.name)
