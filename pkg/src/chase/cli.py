"""Command-line entry point.

Exit codes: 0 success, 2 input or validation error, 3 simulation runtime error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import jsonschema

from chase import schemas
from chase.forecast.evaluation import evaluate_models
from chase.forecast.features import steps_per_day
from chase.optimizer import ConfigError, OptimizerConfig
from chase.profile import DEFAULT_LIMITS, ProfileError, a40_like, parse_profile, profile_gpu, serialize_profile
from chase.simulator import (
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
from chase.synth import DEFAULT_START, synth_trace
from chase.trace import FetchError, TraceError, TraceSource, fetch_trace, load_trace, save_trace

logger = logging.getLogger("chase")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_RUNTIME = 3

ENDPOINT_ENV = "CHASE_TRACE_ENDPOINT"


class InputError(Exception):
    pass


def _write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _svr_params(args) -> dict:
    params = {"C": args.svr_c, "epsilon": args.svr_epsilon, "tol": args.svr_tol, "max_iter": args.svr_max_iter}
    if args.svr_gamma is not None:
        params["gamma"] = args.svr_gamma
    return params


def cmd_trace_validate(args) -> int:
    trace = load_trace(args.path, fill=args.fill)
    summary = {
        "start_time": trace.start_time,
        "interval_s": trace.interval,
        "points": len(trace),
        "end_time": trace.end_time,
        "min_ci": min(trace.intensities),
        "max_ci": max(trace.intensities),
    }
    print(_dump(summary), end="")
    return EXIT_OK


def cmd_trace_fetch(args) -> int:
    if args.file:
        source = TraceSource(path=args.file)
    else:
        url = args.endpoint or os.environ.get(ENDPOINT_ENV)
        if not url:
            raise InputError(f"no endpoint: pass --endpoint or set {ENDPOINT_ENV}")
        source = TraceSource(url=url, region=args.region)
    trace = fetch_trace(source, (args.start, args.end))
    if args.out:
        save_trace(trace, args.out)
    logger.info("fetched %d points", len(trace))
    print(f"fetched {len(trace)} points {trace.start_time}..{trace.end_time} interval {trace.interval} s")
    return EXIT_OK


def cmd_forecast_eval(args) -> int:
    trace = load_trace(args.trace)
    steps_per_day(trace.interval)
    if (args.fit_hours * 3600) % trace.interval:
        raise InputError(f"--fit-hours {args.fit_hours} is not a whole number of {trace.interval} s steps")
    fit_window = args.fit_hours * 3600 // trace.interval
    report = evaluate_models(trace, fit_window, args.model or ["linear", "svr"], svr_params=_svr_params(args))
    doc = report.to_dict()
    schemas.validate(doc, "forecast_eval")
    if args.out_dir:
        _write(Path(args.out_dir) / "forecast_eval.json", _dump(doc))
    print(_dump(doc) if args.json else report.table())
    return EXIT_OK


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read manifest {path}: {exc}") from None
    try:
        schemas.validate(doc, "manifest")
    except jsonschema.ValidationError as exc:
        raise InputError(f"manifest {path}: {exc.message}") from None
    base = path.parent
    for key in ("trace", "profile"):
        p = Path(doc[key])
        doc[key] = str(p if p.is_absolute() else base / p)
        if not Path(doc[key]).exists():
            raise InputError(f"manifest {key} file not found: {doc[key]}")
    if "out_dir" in doc and not Path(doc["out_dir"]).is_absolute():
        doc["out_dir"] = str(base / doc["out_dir"])
    return doc


def cmd_simulate(args) -> int:
    m = load_manifest(args.manifest)
    fc = dict(m.get("forecaster", {}))
    opt = dict(m.get("optimizer", {}))
    # command-line flags win over the manifest
    for flag, key in (("eta", "eta"), ("max_power_w", "max_power_w"), ("max_ci", "max_ci"), ("period_s", "period_s")):
        if getattr(args, flag) is not None:
            opt[key] = getattr(args, flag)
    if args.fit_hours is not None:
        fc["fit_hours"] = args.fit_hours
    if args.model is not None:
        fc["kind"] = args.model[-1]
    baseline = args.baseline or m.get("baseline", False)
    oracle = args.oracle_forecast or m.get("oracle_forecast", False)
    count_profiling = args.count_profiling or m.get("count_profiling", False)
    out_dir = Path(args.out_dir or m.get("out_dir") or ".")

    trace = load_trace(m["trace"])
    profile = parse_profile(Path(m["profile"]).read_text(encoding="utf-8"))
    job = TrainingJob(m["job"]["total_samples"], m["job"]["start_time"])
    if baseline:
        report = run_baseline(job, trace, profile, period=opt.get("period_s"))
    else:
        svr_params = {k: fc[k] for k in ("C", "epsilon", "gamma", "tol", "max_iter") if fc.get(k) is not None}
        spec = ForecasterSpec(
            kind=fc.get("kind", "svr"),
            fit_hours=fc.get("fit_hours", 24),
            svr_params=svr_params,
            oracle=oracle,
        )
        cfg = OptimizerConfig(
            eta=opt.get("eta", 0.5),
            max_power=opt.get("max_power_w"),
            max_carbon_intensity=opt.get("max_ci"),
            period=opt.get("period_s"),
        )
        report = run_carbon_aware(job, trace, profile, spec, cfg, count_profiling=count_profiling)

    doc = report.to_dict()
    schemas.validate(doc, "sim_report")
    _write(out_dir / "report.json", report.dumps())
    _write(out_dir / "timeline.csv", emit_timeline(report))
    print(
        f"{report.mode}: time {report.total_time:.1f} s, energy {report.total_energy:.1f} J, "
        f"carbon {report.total_carbon:.3f} g"
    )
    return EXIT_OK


def _load_report(path: str) -> SimReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        schemas.validate(doc, "sim_report")
    except (OSError, json.JSONDecodeError, jsonschema.ValidationError) as exc:
        raise InputError(f"cannot read report {path}: {exc}") from None
    return SimReport.from_dict(doc)


def cmd_compare(args) -> int:
    aware = _load_report(args.report_a)
    base = _load_report(args.report_b)
    summary = compare(aware, base)
    doc = summary.to_dict()
    schemas.validate(doc, "comparison")
    if args.out_dir:
        _write(Path(args.out_dir) / "comparison.json", _dump(doc))
    if args.json:
        print(_dump(doc), end="")
    else:
        print(f"carbon reduction  {summary.carbon_reduction_pct:8.3f} %")
        print(f"energy reduction  {summary.energy_reduction_pct:8.3f} %")
        print(f"time increase     {summary.time_increase_pct:8.3f} %")
    return EXIT_OK


def cmd_synth_trace(args) -> int:
    trace = synth_trace(
        mean=args.mean,
        amplitude=args.amplitude,
        period_steps=args.period_steps,
        noise_sigma=args.noise,
        length=args.length,
        interval=args.interval,
        start=args.start,
        seed=args.seed,
    )
    save_trace(trace, args.out)
    print(f"wrote {len(trace)} points to {args.out}")
    return EXIT_OK


def cmd_profile_gpu(args) -> int:
    limits = [int(x) for x in args.limits.split(",")] if args.limits else list(DEFAULT_LIMITS)
    profile = profile_gpu(a40_like(), limits, noise_sigma=args.noise, seed=args.seed)
    _write(Path(args.out), serialize_profile(profile))
    print(f"wrote {len(profile.entries)} entries to {args.out}")
    return EXIT_OK


def _add_svr_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--svr-c", type=float, default=1.0, help="box constraint C")
    p.add_argument("--svr-epsilon", type=float, default=0.1, help="tube half-width in standardized target units")
    p.add_argument("--svr-gamma", type=float, default=None, help="RBF width (default 1/(3*feature variance))")
    p.add_argument("--svr-tol", type=float, default=1e-3)
    p.add_argument("--svr-max-iter", type=int, default=10_000)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="chase", description="Carbon-aware GPU power-limit control for DNN training.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    trace = sub.add_parser("trace", help="trace utilities").add_subparsers(dest="trace_command", required=True)
    p = trace.add_parser("validate", help="parse a CSV/JSON trace and print a summary")
    p.add_argument("path")
    p.add_argument("--fill", choices=["hold"], default=None, help="forward-fill single missing steps")
    p.set_defaults(func=cmd_trace_validate)

    p = trace.add_parser("fetch", help="retrieve a trace window from an HTTP endpoint or a file")
    p.add_argument("--endpoint", default=None, help=f"HTTP endpoint (default: ${ENDPOINT_ENV})")
    p.add_argument("--file", default=None, help="read from a local trace file instead of HTTP")
    p.add_argument("--region", default="default")
    p.add_argument("--start", type=int, required=True, help="window start, epoch seconds")
    p.add_argument("--end", type=int, required=True, help="window end (exclusive), epoch seconds")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_trace_fetch)

    forecast = sub.add_parser("forecast", help="forecaster evaluation").add_subparsers(dest="forecast_command", required=True)
    p = forecast.add_parser("eval", help="walk-forward MAPE of each model")
    p.add_argument("trace")
    p.add_argument("--fit-hours", type=int, default=24)
    p.add_argument("--model", action="append", choices=["linear", "svr", "persistence"])
    p.add_argument("--json", action="store_true", help="print JSON instead of the table")
    p.add_argument("--out-dir", default=None)
    _add_svr_flags(p)
    p.set_defaults(func=cmd_forecast_eval)

    p = sub.add_parser("simulate", help="replay a training job described by a manifest")
    p.add_argument("manifest")
    p.add_argument("--eta", type=float, default=None)
    p.add_argument("--period-s", type=int, default=None)
    p.add_argument("--max-power-w", type=float, default=None)
    p.add_argument("--max-ci", type=float, default=None)
    p.add_argument("--fit-hours", type=int, default=None)
    p.add_argument("--model", action="append", choices=["linear", "svr", "persistence"])
    p.add_argument("--baseline", action="store_true", help="run at the maximum limit throughout")
    p.add_argument("--oracle-forecast", action="store_true", help="feed true future intensities")
    p.add_argument("--count-profiling", action="store_true", help="charge one trace step per profiled limit")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="carbon/energy/time deltas of a run against a baseline")
    p.add_argument("report_a", help="carbon-aware report.json")
    p.add_argument("report_b", help="baseline report.json")
    p.add_argument("--json", action="store_true")
    p.add_argument("--out-dir", default=None)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("synth-trace", help="seeded sinusoid-plus-noise trace")
    p.add_argument("--mean", type=float, default=550.0)
    p.add_argument("--amplitude", type=float, default=150.0)
    p.add_argument("--period-steps", type=int, default=48)
    p.add_argument("--noise", type=float, default=10.0, help="Gaussian noise sigma, g/kWh")
    p.add_argument("--length", type=int, default=552)
    p.add_argument("--interval", type=int, default=1800)
    p.add_argument("--start", type=int, default=DEFAULT_START)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_trace)

    p = sub.add_parser("profile-gpu", help="profile the built-in simulated 300 W GPU")
    p.add_argument("--limits", default=None, help="comma-separated watts (default 100..300 step 25)")
    p.add_argument("--noise", type=float, default=0.0, help="relative measurement noise sigma")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_profile_gpu)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except SimulationError as exc:
        print(f"chase: simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (InputError, TraceError, FetchError, ProfileError, ConfigError, MismatchError, ValueError, OSError) as exc:
        print(f"chase: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
