"""Command-line entry point.

Exit codes: 0 success, 2 invalid input, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import io
from .anomaly import DetectorConfig
from .domain import ConfigGrid, FailurePlan, ProfilingMatrix
from .errors import CkptTunerError, ParameterError
from .experiment import load_scenario, normalized_report, run_experiment, write_bundle
from .modeling import fit
from .profiler import Margins, run_profiling, write_fit_csv
from .simulator import PipelineSpec
from .workload import KINDS, generate_trace, phase1

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("ckpt_tuner")


def _out(args) -> Path:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate_trace(args) -> None:
    trace = generate_trace(
        args.kind, args.duration, args.base_rate, args.amplitude, args.seed,
        period=args.period, noise=args.noise,
    )
    path = _out(args) / "trace.csv"
    io.write_trace_csv(path, trace)
    print(path)


def cmd_phase1(args) -> None:
    trace = io.read_trace_csv(args.trace)
    sw, plan = phase1(trace, args.m, args.mode, args.window)
    out = _out(args)
    io.write_json(out / "failure_plan.json", plan)
    io.write_json(out / "smoothed.json", {"start_time": trace.start_time, "window_w": sw.window_w, "values": list(sw.values)})
    print(out / "failure_plan.json")


def cmd_profile(args) -> None:
    trace = io.read_trace_csv(args.trace)
    plan = io.read_json(args.plan, FailurePlan)
    spec = PipelineSpec.from_dict(json.loads(Path(args.pipeline).read_text())) if args.pipeline else PipelineSpec()
    detector = DetectorConfig.from_dict(json.loads(Path(args.detector).read_text())) if args.detector else DetectorConfig()
    matrix = run_profiling(
        trace, plan, ConfigGrid.parse(args.grid), spec, Margins(args.margin_before, args.margin_after),
        args.seed, epsilon=args.epsilon, detector_config=detector, workers=args.workers,
    )
    out = _out(args)
    io.write_json(out / "profiling.json", matrix)
    write_fit_csv(out / "fit.csv", matrix)
    if matrix.invalid:
        log.warning("%d invalid cells", len(matrix.invalid))
    print(out / "profiling.json")


def cmd_fit(args) -> None:
    matrix = io.read_json(args.profiling, ProfilingMatrix)
    out = _out(args)
    for target in ("latency", "recovery"):
        model = fit(matrix.samples(target), target, args.degree)
        io.write_json(out / f"model_{target}.json", model.to_dict())
        print(out / f"model_{target}.json")


def cmd_run_experiment(args) -> None:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        from dataclasses import replace

        scenario = replace(scenario, seed=args.seed)
    result = run_experiment(scenario, workers=args.workers)
    out = write_bundle(result, _out(args))
    print((out / "report.csv").read_text(), end="")


def cmd_report(args) -> None:
    bundle = Path(args.bundle)
    if not (bundle / "report.json").exists():
        raise ParameterError(f"{bundle}: no report.json in bundle")
    text, warnings = normalized_report(bundle)
    for w in warnings:
        log.warning(w)
    path = _out(args) / "normalized.csv"
    path.write_text(text)
    print(text, end="")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ckpt-tuner", description="Profile, model and tune checkpoint intervals of a simulated stream job.")
    parser.add_argument("--seed", type=int, default=None, help="random seed (default 0; run-experiment defaults to the scenario's)")
    parser.add_argument("--out-dir", default=".", help="directory for outputs")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate-trace", help="synthetic workload trace as CSV")
    p.add_argument("--kind", choices=KINDS, default="diurnal")
    p.add_argument("--duration", type=int, default=21600, help="seconds")
    p.add_argument("--base-rate", type=float, default=1000.0)
    p.add_argument("--amplitude", type=float, default=400.0)
    p.add_argument("--period", type=float, default=None)
    p.add_argument("--noise", type=float, default=0.02)
    p.set_defaults(func=cmd_generate_trace)

    p = sub.add_parser("phase1", help="smooth a trace and pick failure points")
    p.add_argument("--trace", required=True)
    p.add_argument("--m", type=int, default=12)
    p.add_argument("--mode", choices=("rate", "time"), default="rate")
    p.add_argument("--window", type=int, default=61)
    p.set_defaults(func=cmd_phase1)

    p = sub.add_parser("profile", help="profile every (failure point, interval) pair")
    p.add_argument("--trace", required=True)
    p.add_argument("--plan", required=True)
    p.add_argument("--grid", default="10:120:5", help="ci_min:ci_max:z")
    p.add_argument("--pipeline", help="PipelineSpec JSON")
    p.add_argument("--detector", help="DetectorConfig JSON")
    p.add_argument("--margin-before", type=float, default=300.0)
    p.add_argument("--margin-after", type=float, default=900.0)
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("fit", help="fit latency and recovery models")
    p.add_argument("--profiling", required=True)
    p.add_argument("--degree", type=int, choices=(1, 2), default=2)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("run-experiment", help="adaptive run against static baselines")
    p.add_argument("--scenario", required=True)
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("report", help="normalized summary of an experiment bundle")
    p.add_argument("--bundle", required=True)
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.seed is None and args.command != "run-experiment":
        args.seed = 0
    try:
        args.func(args)
    except (ParameterError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (CkptTunerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
