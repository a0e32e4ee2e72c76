"""Deterministic replay of a training job over a carbon trace.

The job is a fixed budget of training samples. Time advances in trace steps;
every period (a whole number of steps) starts with a power-limit decision and
then runs at the chosen limit's profiled power and throughput. Energy and
carbon are integrated step by step against the trace, and a job that finishes
inside a step is charged only for the fraction it used.
"""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
from dataclasses import dataclass, field
from statistics import fmean
from typing import Callable

from chase.forecast.evaluation import fit_model
from chase.forecast.features import step_of_day
from chase.forecast.models import ForecastModel, forecast_horizon
from chase.optimizer import J_PER_KWH, OptimizerConfig, PeriodDecision, cta, select_power_limit
from chase.profile import PowerProfile
from chase.trace import CarbonTrace, serialize_trace, window_max

logger = logging.getLogger(__name__)

TIMELINE_COLUMNS = (
    "period_start",
    "forecast_ci",
    "actual_mean_ci",
    "chosen_limit_w",
    "avg_power_w",
    "samples_done",
    "energy_j",
    "carbon_g",
)


class SimulationError(RuntimeError):
    """The run could not complete, e.g. the trace ended before the job did."""

    def __init__(self, message: str, shortfall: float | None = None):
        self.shortfall = shortfall
        super().__init__(message)


class MismatchError(ValueError):
    pass


@dataclass(frozen=True)
class TrainingJob:
    total_samples: int
    start_time: int

    def __post_init__(self):
        if isinstance(self.total_samples, bool) or not isinstance(self.total_samples, int) or self.total_samples <= 0:
            raise ValueError(f"total_samples must be a positive integer, got {self.total_samples!r}")


@dataclass(frozen=True)
class ForecasterSpec:
    """Which forecaster drives the carbon-aware run and how much history it sees.

    ``oracle=True`` replaces the forecast with the true mean intensity of the
    coming period; it exists for bounding experiments only.
    """

    kind: str = "svr"
    fit_hours: int = 24
    svr_params: dict = field(default_factory=dict)
    oracle: bool = False


@dataclass(frozen=True)
class PeriodRecord:
    decision: PeriodDecision
    phase: str
    duration_s: float
    actual_mean_ci: float
    avg_power_w: float
    samples_done: int
    energy_j: float
    carbon_g: float
    # (timestamp, seconds used, intensity) for every trace step touched
    steps: tuple[tuple[int, float, float], ...] = ()


@dataclass(frozen=True)
class SimReport:
    mode: str
    job: TrainingJob
    trace_id: str
    config: dict
    total_time: float
    total_energy: float
    total_carbon: float
    cta_estimate_g: float
    periods: tuple[PeriodRecord, ...]

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "job": {"total_samples": self.job.total_samples, "start_time": self.job.start_time},
            "trace_id": self.trace_id,
            "config": dict(self.config),
            "total_time_s": self.total_time,
            "total_energy_j": self.total_energy,
            "total_carbon_g": self.total_carbon,
            "cta_estimate_g": self.cta_estimate_g,
            "periods": [
                {
                    "period_start": p.decision.period_start,
                    "phase": p.phase,
                    "forecast_ci": p.decision.forecast_ci,
                    "chosen_limit_w": p.decision.chosen_limit,
                    "costs": [{"limit_w": lim, "cost_g_per_sample": c} for lim, c in p.decision.costs],
                    "duration_s": p.duration_s,
                    "actual_mean_ci": p.actual_mean_ci,
                    "avg_power_w": p.avg_power_w,
                    "samples_done": p.samples_done,
                    "energy_j": p.energy_j,
                    "carbon_g": p.carbon_g,
                    "steps": [list(s) for s in p.steps],
                }
                for p in self.periods
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> SimReport:
        periods = []
        for p in doc["periods"]:
            decision = PeriodDecision(
                p["period_start"],
                p["forecast_ci"],
                p["chosen_limit_w"],
                tuple((c["limit_w"], c["cost_g_per_sample"]) for c in p["costs"]),
            )
            periods.append(
                PeriodRecord(
                    decision,
                    p["phase"],
                    p["duration_s"],
                    p["actual_mean_ci"],
                    p["avg_power_w"],
                    p["samples_done"],
                    p["energy_j"],
                    p["carbon_g"],
                    tuple((s[0], s[1], s[2]) for s in p["steps"]),
                )
            )
        return cls(
            mode=doc["mode"],
            job=TrainingJob(doc["job"]["total_samples"], doc["job"]["start_time"]),
            trace_id=doc["trace_id"],
            config=dict(doc["config"]),
            total_time=doc["total_time_s"],
            total_energy=doc["total_energy_j"],
            total_carbon=doc["total_carbon_g"],
            cta_estimate_g=doc["cta_estimate_g"],
            periods=tuple(periods),
        )

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1) + "\n"

    @classmethod
    def loads(cls, text: str) -> SimReport:
        return cls.from_dict(json.loads(text))


@dataclass(frozen=True)
class ComparisonSummary:
    carbon_reduction_pct: float
    time_increase_pct: float
    energy_reduction_pct: float

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def trace_id(trace: CarbonTrace) -> str:
    return hashlib.sha256(serialize_trace(trace).encode()).hexdigest()[:16]


def _check_job(job: TrainingJob, trace: CarbonTrace, history_s: int = 0) -> int:
    offset = job.start_time - trace.start_time
    if offset % trace.interval:
        raise ValueError(f"job start {job.start_time} is not aligned to a trace step")
    if not trace.start_time <= job.start_time < trace.end_time:
        raise ValueError(f"job start {job.start_time} outside trace [{trace.start_time}, {trace.end_time})")
    if offset < history_s:
        raise ValueError(f"job needs {history_s} s of trace history before its start, trace provides {offset} s")
    return offset // trace.interval


def _period_steps(period: int | None, interval: int) -> int:
    if period is None:
        return 1
    if period < interval or period % interval:
        raise ValueError(f"period {period} s must be a positive multiple of the trace interval {interval} s")
    return period // interval


Chooser = Callable[[int, int], PeriodDecision]


def _replay(
    job: TrainingJob,
    trace: CarbonTrace,
    profile: PowerProfile,
    first_index: int,
    steps_per_period: int,
    choose: Chooser,
    prelude: list[PeriodRecord] | None = None,
) -> list[PeriodRecord]:
    """Run the job from ``first_index``, asking ``choose`` for a decision every period."""
    records = list(prelude or [])
    total = float(job.total_samples)
    done = 0.0
    reported = 0
    idx = first_index
    while done < total:
        if idx >= len(trace):
            short = total - done
            raise SimulationError(
                f"trace ends at {trace.end_time} with {short:.6g} of {job.total_samples} samples unprocessed",
                shortfall=short,
            )
        n = min(steps_per_period, len(trace) - idx)
        decision = choose(idx, n)
        entry = profile.entry(decision.chosen_limit)
        power, thr = entry.avg_power, entry.throughput
        steps = []
        energy = carbon = seconds = 0.0
        for k in range(idx, idx + n):
            ci = trace.intensities[k]
            capacity = thr * trace.interval
            if total - done <= capacity:
                dt = (total - done) / thr
                done = total
            else:
                dt = float(trace.interval)
                done += capacity
            steps.append((trace.timestamp(k), dt, ci))
            energy += power * dt
            carbon += power * dt * ci / J_PER_KWH
            seconds += dt
            if done >= total:
                break
        # integer sample counts telescope exactly to the job size
        cum = job.total_samples if done >= total else round(done)
        records.append(
            PeriodRecord(
                decision=decision,
                phase="train",
                duration_s=seconds,
                actual_mean_ci=sum(c * d for _, d, c in steps) / seconds,
                avg_power_w=power,
                samples_done=cum - reported,
                energy_j=energy,
                carbon_g=carbon,
                steps=tuple(steps),
            )
        )
        reported = cum
        idx += n
    return records


def _report(mode: str, job: TrainingJob, trace: CarbonTrace, config: dict, records: list[PeriodRecord]) -> SimReport:
    total_time = sum(p.duration_s for p in records)
    total_energy = sum(p.energy_j for p in records)
    total_carbon = sum(p.carbon_g for p in records)
    all_steps = [s for p in records for s in p.steps]
    avg_ci = sum(c * d for _, d, c in all_steps) / total_time
    # the product form assumes power and intensity are uncorrelated; kept for contrast with the exact integral
    estimate = cta(total_time, total_energy / total_time, avg_ci)
    return SimReport(
        mode=mode,
        job=job,
        trace_id=trace_id(trace),
        config=config,
        total_time=total_time,
        total_energy=total_energy,
        total_carbon=total_carbon,
        cta_estimate_g=estimate,
        periods=tuple(records),
    )


def run_baseline(job: TrainingJob, trace: CarbonTrace, profile: PowerProfile, period: int | None = None) -> SimReport:
    """Train at the largest profiled limit throughout."""
    first = _check_job(job, trace)
    limit = profile.max_limit

    def choose(idx: int, n: int) -> PeriodDecision:
        return PeriodDecision(trace.timestamp(idx), None, limit, ())

    records = _replay(job, trace, profile, first, _period_steps(period, trace.interval), choose)
    config = {"limit_w": limit, "period_s": period or trace.interval, "gpu": profile.gpu}
    return _report("baseline", job, trace, config, records)


def _profiling_prelude(trace: CarbonTrace, profile: PowerProfile, first: int) -> list[PeriodRecord]:
    records = []
    for k, entry in enumerate(profile.entries):
        idx = first + k
        if idx >= len(trace):
            raise SimulationError("trace ends during the profiling phase")
        ci = trace.intensities[idx]
        dt = float(trace.interval)
        ts = trace.timestamp(idx)
        records.append(
            PeriodRecord(
                decision=PeriodDecision(ts, None, entry.limit, ()),
                phase="profile",
                duration_s=dt,
                actual_mean_ci=ci,
                avg_power_w=entry.avg_power,
                samples_done=0,
                energy_j=entry.avg_power * dt,
                carbon_g=entry.avg_power * dt * ci / J_PER_KWH,
                steps=((ts, dt, ci),),
            )
        )
    return records


def run_carbon_aware(
    job: TrainingJob,
    trace: CarbonTrace,
    profile: PowerProfile,
    forecaster: ForecasterSpec | None = None,
    cfg: OptimizerConfig | None = None,
    count_profiling: bool = False,
) -> SimReport:
    """Forecast, choose a power limit, and train, one period at a time.

    The forecaster is fitted once on the ``fit_hours`` of trace preceding the
    job. At each period start it is fed the last observed intensity, and the
    mean of its recursive forecast over the period drives the decision.
    Unset ``cfg.max_power`` defaults to the largest profiled limit and unset
    ``cfg.max_carbon_intensity`` to the highest intensity in the history window.
    """
    forecaster = forecaster or ForecasterSpec()
    cfg = cfg or OptimizerConfig()
    history_s = forecaster.fit_hours * 3600
    needs_history = not forecaster.oracle or cfg.max_carbon_intensity is None
    first = _check_job(job, trace, history_s if needs_history else 0)
    steps_per_period = _period_steps(cfg.period, trace.interval)

    updates = {}
    if cfg.max_power is None:
        updates["max_power"] = float(profile.max_limit)
    if cfg.max_carbon_intensity is None:
        updates["max_carbon_intensity"] = window_max(trace, job.start_time - history_s, job.start_time)
    cfg = dataclasses.replace(cfg, **updates)
    cfg.check_profile(profile)

    model: ForecastModel | None = None
    if not forecaster.oracle:
        history = trace.slice(job.start_time - history_s, job.start_time)
        try:
            model = fit_model(forecaster.kind, history, **(forecaster.svr_params if forecaster.kind == "svr" else {}))
        except (ValueError, ArithmeticError) as exc:
            raise SimulationError(f"forecaster fit failed: {exc}") from exc

    def choose(idx: int, n: int) -> PeriodDecision:
        ts = trace.timestamp(idx)
        if model is None:
            predicted = fmean(trace.intensities[idx : idx + n])
        else:
            # no lookahead: the newest value we know is the step that just ended
            lag = trace.intensities[idx - 1]
            predicted = fmean(forecast_horizon(model, step_of_day(ts, trace.interval), lag, n))
        return select_power_limit(profile, predicted, cfg, period_start=ts)

    prelude = _profiling_prelude(trace, profile, first) if count_profiling else []
    records = _replay(job, trace, profile, first + len(prelude), steps_per_period, choose, prelude)
    config = {
        "eta": cfg.eta,
        "max_power_w": cfg.max_power,
        "max_ci": cfg.max_carbon_intensity,
        "period_s": cfg.period or trace.interval,
        "forecaster": "oracle" if forecaster.oracle else forecaster.kind,
        "fit_hours": forecaster.fit_hours,
        "count_profiling": count_profiling,
        "gpu": profile.gpu,
    }
    return _report("carbon-aware", job, trace, config, records)


def compare(aware: SimReport, baseline: SimReport) -> ComparisonSummary:
    """Percent carbon and energy saved, and percent extra time, versus the baseline."""
    if aware.job != baseline.job:
        raise MismatchError(f"reports describe different jobs: {aware.job} vs {baseline.job}")
    if aware.trace_id != baseline.trace_id:
        raise MismatchError(f"reports replay different traces: {aware.trace_id} vs {baseline.trace_id}")
    return ComparisonSummary(
        carbon_reduction_pct=100.0 * (baseline.total_carbon - aware.total_carbon) / baseline.total_carbon,
        time_increase_pct=100.0 * (aware.total_time - baseline.total_time) / baseline.total_time,
        energy_reduction_pct=100.0 * (baseline.total_energy - aware.total_energy) / baseline.total_energy,
    )


def _cell(v) -> str:
    if v is None:
        return ""
    return repr(v) if isinstance(v, float) else str(v)


def emit_timeline(report: SimReport) -> str:
    """Per-period CSV for plotting power limit and intensity over time."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TIMELINE_COLUMNS)
    for p in report.periods:
        writer.writerow(
            _cell(v)
            for v in (
                p.decision.period_start,
                p.decision.forecast_ci,
                p.actual_mean_ci,
                p.decision.chosen_limit,
                p.avg_power_w,
                p.samples_done,
                p.energy_j,
                p.carbon_g,
            )
        )
    return buf.getvalue()
