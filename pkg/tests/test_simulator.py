import math
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from chase import schemas
from chase.forecast import fit_model, forecast_horizon, step_of_day
from chase.optimizer import OptimizerConfig, select_power_limit
from chase.profile import PowerProfile, ProfileEntry, a40_like, profile_gpu
from chase.simulator import (
    TIMELINE_COLUMNS,
    ForecasterSpec,
    MismatchError,
    SimReport,
    SimulationError,
    TrainingJob,
    compare,
    emit_timeline,
    run_baseline,
    run_carbon_aware,
)
from chase.synth import synth_trace
from chase.trace import CarbonTrace

from conftest import HALF_HOUR, MIDNIGHT, golden_scenario
from oracles import stepwise_replay_exact

FLAT = PowerProfile((ProfileEntry(200, 190.0, 700.0), ProfileEntry(300, 295.0, 850.0)))
DAY = 48


def flat_history(*tail, level=500.0):
    return CarbonTrace(MIDNIGHT, HALF_HOUR, tuple([level] * DAY + list(tail)))


JOB_START = MIDNIGHT + DAY * HALF_HOUR


def test_baseline_constant_rate():
    trace = flat_history(500.0, 500.0)
    r = run_baseline(TrainingJob(8500, JOB_START), trace, FLAT)
    assert r.total_time == pytest.approx(10.0, rel=1e-15)
    assert r.total_energy == pytest.approx(2950.0, rel=1e-15)
    assert r.total_carbon == pytest.approx(2950.0 / 3.6e6 * 500, rel=1e-15)
    assert [p.decision.chosen_limit for p in r.periods] == [300]


def test_baseline_two_step_integral():
    trace = flat_history(400.0, 800.0)
    r = run_baseline(TrainingJob(850 * 1800 * 2, JOB_START), trace, FLAT)
    E = r.total_energy
    assert E == 295.0 * 3600
    assert r.total_carbon == pytest.approx(0.5 * E * 400 / 3.6e6 + 0.5 * E * 800 / 3.6e6, rel=1e-14)


def test_trace_exhaustion():
    trace = flat_history(500.0)
    with pytest.raises(SimulationError) as err:
        run_baseline(TrainingJob(850 * 1800 + 10, JOB_START), trace, FLAT)
    assert err.value.shortfall == pytest.approx(10.0)
    with pytest.raises(SimulationError):
        run_carbon_aware(TrainingJob(10**9, JOB_START), trace, FLAT, ForecasterSpec("linear"), OptimizerConfig(0.5))


def test_job_validation():
    trace = flat_history(500.0, 500.0)
    with pytest.raises(ValueError, match="aligned"):
        run_baseline(TrainingJob(10, JOB_START + 1), trace, FLAT)
    with pytest.raises(ValueError, match="history"):
        run_carbon_aware(TrainingJob(10, MIDNIGHT + HALF_HOUR), trace, FLAT, ForecasterSpec("linear"))
    with pytest.raises(ValueError):
        TrainingJob(0, 0)


def test_golden_two_periods(golden):
    trace, profile, job, cfg = golden
    aware = run_carbon_aware(job, trace, profile, ForecasterSpec(oracle=True), cfg)
    assert [p.decision.chosen_limit for p in aware.periods] == [200, 300]
    assert [p.decision.forecast_ci for p in aware.periods] == [600.0, 200.0]
    assert [p.samples_done for p in aware.periods] == [1_260_000, 765_000]

    t, e, c = stepwise_replay_exact(job.total_samples, [600, 200], [(190, 700), (295, 850)], HALF_HOUR)
    assert (t, e, c) == (2700, 607500, Fraction(287, 4))
    assert aware.total_time == pytest.approx(float(t), rel=1e-15)
    assert aware.total_energy == pytest.approx(float(e), rel=1e-15)
    assert aware.total_carbon == pytest.approx(float(c), rel=1e-15)

    base = run_baseline(job, trace, profile)
    t, e, c = stepwise_replay_exact(job.total_samples, [600, 200], [(295, 850)] * 2, HALF_HOUR)
    assert base.total_time == pytest.approx(float(t), rel=1e-14)
    assert base.total_energy == pytest.approx(float(e), rel=1e-14)
    assert base.total_carbon == pytest.approx(float(c), rel=1e-14)
    assert base.total_carbon == pytest.approx(98.04411764705883, rel=1e-12)

    summary = compare(aware, base)
    assert summary.carbon_reduction_pct == pytest.approx(float(100 * (c - Fraction(287, 4)) / c), rel=1e-12)
    assert summary.carbon_reduction_pct == pytest.approx(26.81865906704665, rel=1e-12)
    assert summary.time_increase_pct == pytest.approx(40 / 3, rel=1e-12)
    assert summary.energy_reduction_pct == pytest.approx(13.559322033898301, rel=1e-12)


def test_golden_eta_choice(golden):
    # at eta=0.9 the 200 W limit stays cheaper down to ci = 750*0.1/0.9 ~ 83 g/kWh,
    # so 200 g/kWh would not switch back to 300 W; eta=0.7 puts the crossover at ~321
    trace, profile, job, _ = golden
    strong = run_carbon_aware(job, trace, profile, ForecasterSpec(oracle=True), OptimizerConfig(0.9, 300.0, 750.0))
    assert [p.decision.chosen_limit for p in strong.periods][:2] == [200, 200]
    d = select_power_limit(profile, 200.0, OptimizerConfig(0.9, 300.0, 750.0))
    assert [c * 3.6e6 for _, c in d.costs] == pytest.approx([81.0, 75600 / 850], rel=1e-12)


def test_golden_timeline(golden):
    trace, profile, job, cfg = golden
    text = emit_timeline(run_carbon_aware(job, trace, profile, ForecasterSpec(oracle=True), cfg))
    assert text == (
        ",".join(TIMELINE_COLUMNS) + "\n"
        "1673827200,600.0,600.0,200,190.0,1260000,342000.0,57.0\n"
        "1673829000,200.0,200.0,300,295.0,765000,265500.0,14.75\n"
    )


def test_baseline_timeline_flat_at_max():
    trace = synth_trace()
    prof = profile_gpu(a40_like())
    r = run_baseline(TrainingJob(850 * 1800 * 5, trace.timestamp(DAY)), trace, prof)
    lines = emit_timeline(r).splitlines()
    assert len(lines) == 6
    assert {line.split(",")[3] for line in lines[1:]} == {"300"}
    assert all(line.split(",")[1] == "" for line in lines[1:])


def test_single_period_job_uses_forecast():
    trace = flat_history(640.0, 300.0, level=520.0)
    r = run_carbon_aware(TrainingJob(1000, JOB_START), trace, FLAT, ForecasterSpec("persistence"), OptimizerConfig(0.5))
    assert len(r.periods) == 1
    # persistence forecasts the last observed value, never the upcoming one
    assert r.periods[0].decision.forecast_ci == 520.0
    assert len(emit_timeline(r).splitlines()) == 2


def test_multi_step_period_uses_mean_horizon():
    trace = synth_trace(length=DAY + 12)
    cfg = OptimizerConfig(0.5, period=4 * HALF_HOUR)
    r = run_carbon_aware(TrainingJob(700 * 1800 * 6, trace.timestamp(DAY)), trace, FLAT, ForecasterSpec("linear"), cfg)
    model = fit_model("linear", trace.slice(trace.start_time, trace.timestamp(DAY)))
    for p, idx in zip(r.periods, range(DAY, DAY + 12, 4)):
        t = step_of_day(trace.timestamp(idx), HALF_HOUR)
        expected = forecast_horizon(model, t, trace.intensities[idx - 1], 4)
        assert p.decision.forecast_ci == pytest.approx(sum(expected) / 4, rel=1e-12)
        assert len(p.steps) <= 4


def test_max_ci_defaults_to_history_max():
    values = [400.0] * DAY
    values[5] = 750.0
    trace = CarbonTrace(MIDNIGHT, HALF_HOUR, tuple(values + [600.0] * 4))
    r = run_carbon_aware(TrainingJob(1000, JOB_START), trace, FLAT, ForecasterSpec("linear"), OptimizerConfig(0.5))
    assert r.config["max_ci"] == 750.0
    assert r.config["max_power_w"] == 300.0


def test_period_must_align():
    trace = flat_history(500.0, 500.0)
    with pytest.raises(ValueError, match="multiple"):
        run_carbon_aware(TrainingJob(10, JOB_START), trace, FLAT, ForecasterSpec("linear"), OptimizerConfig(0.5, period=2000))


def test_count_profiling():
    trace = flat_history(*([500.0] * 10))
    job = TrainingJob(850 * 1800, JOB_START)
    plain = run_carbon_aware(job, trace, FLAT, ForecasterSpec("persistence"), OptimizerConfig(0.0))
    charged = run_carbon_aware(job, trace, FLAT, ForecasterSpec("persistence"), OptimizerConfig(0.0), count_profiling=True)
    prelude = [p for p in charged.periods if p.phase == "profile"]
    assert [p.decision.chosen_limit for p in prelude] == [200, 300]
    assert all(p.samples_done == 0 for p in prelude)
    assert charged.total_time == pytest.approx(plain.total_time + 2 * HALF_HOUR)
    assert charged.total_energy == pytest.approx(plain.total_energy + (190 + 295) * HALF_HOUR)


def test_eta_zero_matches_baseline():
    trace = synth_trace()
    prof = profile_gpu(a40_like())
    job = TrainingJob(850 * 1800 * 40 + 17, trace.timestamp(DAY))
    aware = run_carbon_aware(job, trace, prof, ForecasterSpec("svr"), OptimizerConfig(0.0))
    base = run_baseline(job, trace, prof)
    assert (aware.total_time, aware.total_energy, aware.total_carbon) == (base.total_time, base.total_energy, base.total_carbon)
    for a, b in zip(aware.periods, base.periods, strict=True):
        assert a.decision.chosen_limit == b.decision.chosen_limit
        assert (a.samples_done, a.energy_j, a.carbon_g, a.steps) == (b.samples_done, b.energy_j, b.carbon_g, b.steps)


def test_deterministic_and_json_round_trip():
    trace = synth_trace(seed=2)
    prof = profile_gpu(a40_like())
    job = TrainingJob(2_000_000, trace.timestamp(DAY))
    a = run_carbon_aware(job, trace, prof, ForecasterSpec("svr"), OptimizerConfig(0.8))
    b = run_carbon_aware(job, trace, prof, ForecasterSpec("svr"), OptimizerConfig(0.8))
    assert a == b
    assert a.dumps() == b.dumps()
    schemas.validate(a.to_dict(), "sim_report")
    assert SimReport.loads(a.dumps()) == a


def test_compare_identity_and_mismatch():
    trace = synth_trace()
    prof = profile_gpu(a40_like())
    job = TrainingJob(10**6, trace.timestamp(DAY))
    base = run_baseline(job, trace, prof)
    s = compare(base, base)
    assert (s.carbon_reduction_pct, s.time_increase_pct, s.energy_reduction_pct) == (0.0, 0.0, 0.0)
    with pytest.raises(MismatchError):
        compare(run_baseline(TrainingJob(10**6 + 1, job.start_time), trace, prof), base)
    with pytest.raises(MismatchError):
        compare(run_baseline(job, synth_trace(seed=9), prof), base)


def test_time_increase_sign():
    trace, profile, job, cfg = golden_scenario()
    aware = run_carbon_aware(job, trace, profile, ForecasterSpec(oracle=True), cfg)
    base = run_baseline(job, trace, profile)
    assert aware.total_time > base.total_time
    assert compare(aware, base).time_increase_pct > 0


def test_cta_estimate_differs_from_exact_integral():
    trace = flat_history(900.0, 100.0)
    aware = run_carbon_aware(
        TrainingJob(700 * 1800 + 850 * 1800, JOB_START), trace, FLAT, ForecasterSpec(oracle=True), OptimizerConfig(0.7, 300, 750)
    )
    # power is low while intensity is high, so the average-product form overestimates
    assert aware.cta_estimate_g > aware.total_carbon


# --- dominance under a perfect forecast -----------------------------------------


def _increasing_efficiency_profile(rng, n):
    limits = sorted(rng.sample(range(100, 301, 25), n))
    thr = sorted(rng.uniform(200, 1000) for _ in limits)
    eps = sorted(rng.uniform(0.15, 0.35) for _ in limits)
    return PowerProfile(tuple(ProfileEntry(l, min(e * t, l), t) for l, e, t in zip(limits, eps, thr)))


def test_dominance_fails_when_work_spills_into_dirtier_step():
    # slowing down in a clean step pushes work into a dirty one
    trace = flat_history(100.0, 1000.0, 1000.0)
    prof = PowerProfile((ProfileEntry(100, 95.0, 500.0), ProfileEntry(300, 285.0, 850.0)))
    job = TrainingJob(850 * 1800, JOB_START)
    aware = run_carbon_aware(job, trace, prof, ForecasterSpec(oracle=True), OptimizerConfig(1.0))
    assert aware.total_carbon > run_baseline(job, trace, prof).total_carbon


@given(st.integers(0, 10**6), st.floats(0.01, 1.0))
def test_dominance_on_non_increasing_intensity(seed, eta):
    rng = random.Random(seed)
    tail = sorted((rng.uniform(50, 900) for _ in range(80)), reverse=True)
    trace = flat_history(*tail)
    prof = _increasing_efficiency_profile(rng, rng.randint(2, 6))
    if any(a.throughput > b.throughput for a, b in zip(prof.entries, prof.entries[1:])):
        return
    job = TrainingJob(int(prof.entries[-1].throughput * 1800 * rng.uniform(0.2, 30)), JOB_START)
    try:
        aware = run_carbon_aware(job, trace, prof, ForecasterSpec(oracle=True), OptimizerConfig(eta))
    except SimulationError:
        return
    assert aware.total_carbon <= run_baseline(job, trace, prof).total_carbon * (1 + 1e-12)


@pytest.mark.parametrize("seed", range(20))
def test_dominance_on_diurnal_traces(seed):
    rng = random.Random(seed)
    trace = synth_trace(mean=rng.uniform(300, 700), amplitude=rng.uniform(50, 250), noise_sigma=rng.uniform(0, 30), seed=seed)
    prof = _increasing_efficiency_profile(rng, rng.randint(2, 6))
    job = TrainingJob(int(prof.entries[0].throughput * 1800 * rng.uniform(1, 200)), trace.timestamp(DAY))
    aware = run_carbon_aware(job, trace, prof, ForecasterSpec(oracle=True), OptimizerConfig(rng.uniform(0.05, 1)))
    assert aware.total_carbon <= run_baseline(job, trace, prof).total_carbon


@given(st.integers(0, 10**6))
def test_time_bounds(seed):
    rng = random.Random(seed)
    prof = _increasing_efficiency_profile(rng, rng.randint(2, 6))
    trace = synth_trace(mean=500, amplitude=rng.uniform(0, 300), noise_sigma=5, seed=seed, length=DAY + 100)
    job = TrainingJob(int(prof.entries[0].throughput * 1800 * rng.uniform(0.1, 90)), trace.timestamp(DAY))
    r = run_carbon_aware(job, trace, prof, ForecasterSpec("linear"), OptimizerConfig(rng.uniform(0, 1)))
    lo = job.total_samples / max(e.throughput for e in prof.entries)
    hi = job.total_samples / min(e.throughput for e in prof.entries)
    assert lo * (1 - 1e-12) <= r.total_time <= hi * (1 + 1e-12)
    assert sum(p.samples_done for p in r.periods) == job.total_samples
