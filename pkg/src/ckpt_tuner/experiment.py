"""End-to-end experiment: profile, fit, then run the adaptive job against static baselines.

A scenario is one JSON document. Its single seed fans out through
``numpy.random.SeedSequence`` into fixed sub-seeds for the recording trace,
the experiment trace, profiling and every run, so a scenario file fully
determines the outputs.
"""

from __future__ import annotations

import csv
import dataclasses
import io as _io
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io
from .anomaly import DetectorConfig
from .domain import ConfigGrid, QoSConstraints, WorkloadTrace, validate
from .errors import ParameterError
from .modeling import ForecastModel, RegressionModel, avg_percent_error, fit
from .optimizer import RECONFIGURE, LoopConfig, control_loop
from .profiler import Margins, run_profiling
from .simulator import PipelineSpec, SimRun, Simulator
from .workload import KINDS, generate_trace, phase1

log = logging.getLogger(__name__)

ADAPTIVE = "adaptive"
COLUMNS = ("Avg. Latency", "Lat Violations", "Recovery Time", "Rec Violations")
# sub-seed slots; order is part of the reproducibility contract
_RECORDING, _EXPERIMENT, _PROFILING, _RUNS = range(4)


@dataclass(frozen=True)
class WorkloadParams:
    kind: str = "diurnal"
    duration_k: int = 21600
    base_rate: float = 1000.0
    amplitude: float = 400.0
    period: Optional[float] = None
    noise: float = 0.02


@dataclass(frozen=True)
class Scenario:
    name: str
    seed: int
    workload: WorkloadParams
    pipeline: PipelineSpec
    constraints: QoSConstraints
    grid: ConfigGrid
    m: int = 12
    phase1_mode: str = "rate"
    window_w: int = 61
    margins: Margins = Margins()
    detector: DetectorConfig = DetectorConfig()
    degree: int = 2
    loop: LoopConfig = LoopConfig()
    initial_ci: float = 60.0
    forecast_learning_rate: float = 0.05
    n_failures: int = 12
    baselines: tuple[float, ...] = (10.0, 30.0, 60.0, 90.0, 120.0)
    epsilon: float = 1.0
    evaluate_models: bool = True


_TOP_KEYS = {
    "name", "seed", "workload", "pipeline", "constraints", "grid", "phase1", "margins",
    "detector", "model", "optimizer", "experiment",
}


def _sub(data: dict, key: str, cls, problems: list[str]):
    raw = data.get(key, {})
    if not isinstance(raw, dict):
        problems.append(f"{key}: must be an object")
        return cls()
    known = {f.name for f in dataclasses.fields(cls)}
    for k in sorted(set(raw) - known):
        problems.append(f"{key}.{k}: unknown field")
    try:
        return cls(**{k: v for k, v in raw.items() if k in known})
    except (TypeError, ValueError) as exc:
        problems.append(f"{key}: {exc}")
        return cls()


def scenario_from_dict(data: dict) -> Scenario:
    """Build and validate a scenario; every problem is reported with its path."""
    problems: list[str] = []
    if not isinstance(data, dict):
        raise ParameterError("scenario: must be a JSON object")
    for k in sorted(set(data) - _TOP_KEYS):
        problems.append(f"{k}: unknown field")
    workload = _sub(data, "workload", WorkloadParams, problems)
    if workload.kind not in KINDS:
        problems.append(f"workload.kind: one of {sorted(KINDS)}")
    if workload.duration_k < 2:
        problems.append("workload.duration_k: ≥ 2")
    pipeline = _sub(data, "pipeline", PipelineSpec, problems)
    problems += [f"pipeline.{p}" for p in pipeline.validate()]
    margins = _sub(data, "margins", Margins, problems)
    detector = _sub(data, "detector", DetectorConfig, problems)
    problems += [f"detector.{p}" for p in detector.validate()]

    c = data.get("constraints", {})
    constraints = QoSConstraints(float(c.get("l_const", 1000.0)), float(c.get("r_const", 240.0)))
    problems += [f"constraints.{p}" for p in validate(constraints)]
    try:
        g = data.get("grid", "10:120:5")
        grid = ConfigGrid.parse(g) if isinstance(g, str) else ConfigGrid.from_range(g["ci_min"], g["ci_max"], g["z"])
        problems += [f"grid.{p}" for p in validate(grid)]
    except (ValueError, KeyError, TypeError) as exc:
        problems.append(f"grid: {exc}")
        grid = ConfigGrid.parse("10:120:5")

    p1 = data.get("phase1", {})
    model = data.get("model", {})
    opt = dict(data.get("optimizer", {}))
    exp = data.get("experiment", {})
    loop = LoopConfig(
        cycle_period=float(opt.pop("cycle_period", 60.0)),
        window=float(opt.pop("window", 120.0)),
        rescale_window_k=int(opt.pop("rescale_window_k", 5)),
    )
    initial_ci = float(opt.pop("initial_ci", 60.0))
    forecast_lr = float(opt.pop("forecast_learning_rate", 0.05))
    for k in sorted(opt):
        problems.append(f"optimizer.{k}: unknown field")
    if loop.cycle_period <= 0:
        problems.append("optimizer.cycle_period: > 0")
    if loop.window <= 0:
        problems.append("optimizer.window: > 0")
    if loop.rescale_window_k < 1:
        problems.append("optimizer.rescale_window_k: ≥ 1")
    if initial_ci <= 0:
        problems.append("optimizer.initial_ci: > 0")

    m = int(p1.get("m", 12))
    if m < 2:
        problems.append("phase1.m: m ≥ 2")
    mode = p1.get("mode", "rate")
    if mode not in ("rate", "time", "rate-equidistant", "time-equidistant"):
        problems.append("phase1.mode: rate or time")
    degree = int(model.get("degree", 2))
    if degree not in (1, 2):
        problems.append("model.degree: 1 or 2")
    n_failures = int(exp.get("n_failures", 12))
    if n_failures < 0:
        problems.append("experiment.n_failures: ≥ 0")
    baselines = tuple(float(b) for b in exp.get("baselines", (10, 30, 60, 90, 120)))
    if any(b <= 0 for b in baselines):
        problems.append("experiment.baselines: every ci > 0")
    epsilon = float(exp.get("epsilon", 1.0))
    if not 0 < epsilon < min(grid.values + baselines):
        problems.append("experiment.epsilon: 0 < epsilon < smallest ci")
    if problems:
        raise ParameterError("; ".join(problems))
    return Scenario(
        name=str(data.get("name", "scenario")),
        seed=int(data.get("seed", 0)),
        workload=workload,
        pipeline=pipeline,
        constraints=constraints,
        grid=grid,
        m=m,
        phase1_mode=mode,
        window_w=int(p1.get("window_w", 61)),
        margins=margins,
        detector=detector,
        degree=degree,
        loop=loop,
        initial_ci=initial_ci,
        forecast_learning_rate=forecast_lr,
        n_failures=n_failures,
        baselines=baselines,
        epsilon=epsilon,
        evaluate_models=bool(exp.get("evaluate_models", True)),
    )


def load_scenario(path) -> Scenario:
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParameterError(f"scenario: invalid JSON ({exc})") from exc
    return scenario_from_dict(data)


def sub_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def _trace(params: WorkloadParams, seed: int) -> WorkloadTrace:
    return generate_trace(params.kind, params.duration_k, params.base_rate, params.amplitude, seed, period=params.period, noise=params.noise)


def failure_times(trace: WorkloadTrace, n: int) -> list[float]:
    """``n`` nominal failure times evenly spaced in time, away from both ends."""
    step = trace.duration_k / (n + 1)
    return [float(trace.start_time + round(step * (k + 1))) for k in range(n)]


@dataclass
class RunSummary:
    label: str
    avg_latency: float
    lat_violation_fraction: float
    recovery_total: float
    rec_violation_seconds: float
    recoveries: list
    reconfigurations: int = 0

    def row(self) -> dict:
        return {
            "run": self.label,
            "Avg. Latency": self.avg_latency,
            "Lat Violations": self.lat_violation_fraction,
            "Recovery Time": self.recovery_total,
            "Rec Violations": self.rec_violation_seconds,
        }


def summarize(label: str, run: SimRun, constraints: QoSConstraints) -> RunSummary:
    """Table metrics of one run. Recovery uses the simulator's ground truth;
    a failure that never caught up counts until the end of the run."""
    end = float(run.t[-1] + 1) if len(run.t) else 0.0
    recs = [(c if c is not None else end) - f for f, c in run.recoveries()]
    reconfigs = len(run.events_of("Reconfigured"))
    return RunSummary(
        label=label,
        avg_latency=float(np.mean(run.avg_latency)) if len(run.t) else 0.0,
        lat_violation_fraction=float(np.mean(run.avg_latency > constraints.l_const)) if len(run.t) else 0.0,
        recovery_total=float(sum(recs)),
        rec_violation_seconds=float(sum(max(0.0, r - constraints.r_const) for r in recs)),
        recoveries=recs,
        reconfigurations=reconfigs,
    )


def _static_run(args) -> RunSummary:
    label, spec, trace, ci, times, seed, epsilon, constraints = args
    sim = Simulator(spec, trace, ci, times, seed=seed, injection_mode="worst-case", epsilon=epsilon)
    return summarize(label, sim.run_to_end(), constraints)


def _adaptive_run(args):
    spec, trace, times, seed, sc, m_l, m_r, recording = args
    forecaster = ForecastModel(learning_rate=sc.forecast_learning_rate, horizon=int(round(sc.loop.cycle_period)))
    # pretrain on the tail of the recorded workload so the first cycles are not cold
    forecaster.warmup([float(x) for x in recording.counts[-3600:]])
    sim = Simulator(spec, trace, sc.initial_ci, times, seed=seed, injection_mode="worst-case", epsilon=sc.epsilon)
    decisions, run = control_loop(sim, m_l, m_r, forecaster, sc.constraints, sc.grid, sc.loop)
    return summarize(ADAPTIVE, run, sc.constraints), decisions


@dataclass
class ExperimentResult:
    scenario: Scenario
    summaries: list[RunSummary]
    decisions: list[dict]
    models: dict[str, RegressionModel]
    profiling: object
    model_errors: dict = field(default_factory=dict)

    def summary(self, label: str) -> RunSummary:
        return next(s for s in self.summaries if s.label == label)


def baseline_label(ci: float) -> str:
    return f"{ci:g}s"


def run_experiment(sc: Scenario, *, workers: int = 1) -> ExperimentResult:
    seeds = sub_seeds(sc.seed, 4)
    recording = _trace(sc.workload, seeds[_RECORDING])
    experiment_trace = _trace(sc.workload, seeds[_EXPERIMENT])
    spec = sc.pipeline.resolved(recording)

    _, plan = phase1(recording, sc.m, sc.phase1_mode, sc.window_w)
    matrix = run_profiling(
        recording, plan, sc.grid, spec, sc.margins, seeds[_PROFILING],
        epsilon=sc.epsilon, detector_config=sc.detector, workers=workers,
    )
    m_l = fit(matrix.samples("latency"), "latency", sc.degree)
    m_r = fit(matrix.samples("recovery"), "recovery", sc.degree)

    model_errors = {}
    if sc.evaluate_models:
        _, held_plan = phase1(experiment_trace, sc.m, sc.phase1_mode, sc.window_w)
        held = run_profiling(
            experiment_trace, held_plan, sc.grid, spec, sc.margins, seeds[_PROFILING],
            epsilon=sc.epsilon, detector_config=sc.detector, workers=workers,
        )
        model_errors = {
            "latency": avg_percent_error(m_l, held.samples("latency")),
            "recovery": avg_percent_error(m_r, held.samples("recovery")),
        }

    times = failure_times(experiment_trace, sc.n_failures)
    run_seeds = sub_seeds(seeds[_RUNS], 1 + len(sc.baselines))
    static_args = [
        (baseline_label(ci), spec, experiment_trace, ci, times, s, sc.epsilon, sc.constraints)
        for ci, s in zip(sc.baselines, run_seeds[1:])
    ]
    adaptive_args = (spec, experiment_trace, times, run_seeds[0], sc, m_l, m_r, recording)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            fut = pool.submit(_adaptive_run, adaptive_args)
            statics = list(pool.map(_static_run, static_args))
            adaptive, decisions = fut.result()
    else:
        adaptive, decisions = _adaptive_run(adaptive_args)
        statics = [_static_run(a) for a in static_args]
    return ExperimentResult(sc, [adaptive, *statics], decisions, {"latency": m_l, "recovery": m_r}, matrix, model_errors)


def _fmt(x: float) -> str:
    return repr(round(float(x), 6))


def report_csv(summaries: list[RunSummary]) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", *COLUMNS])
    for s in summaries:
        row = s.row()
        w.writerow([s.label, *(_fmt(row[c]) for c in COLUMNS)])
    return buf.getvalue()


def write_bundle(result: ExperimentResult, out_dir) -> Path:
    """Write the report bundle: tables, per-run details, models, decision log."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "report.csv").write_text(report_csv(result.summaries))
    runs = {
        s.label: {
            "avg_latency": s.avg_latency,
            "lat_violation_fraction": s.lat_violation_fraction,
            "recovery_total": s.recovery_total,
            "rec_violation_seconds": s.rec_violation_seconds,
            "recoveries": s.recoveries,
            "reconfigurations": s.reconfigurations,
        }
        for s in result.summaries
    }
    io.write_json(
        out / "report.json",
        {
            "scenario": result.scenario.name,
            "seed": result.scenario.seed,
            "constraints": io.to_dict(result.scenario.constraints),
            "runs": runs,
            "model_errors": result.model_errors,
        },
    )
    io.write_json(out / "profiling.json", result.profiling)
    io.write_json(out / "model_latency.json", result.models["latency"].to_dict())
    io.write_json(out / "model_recovery.json", result.models["recovery"].to_dict())
    io.write_jsonl(out / "decisions.jsonl", result.decisions)
    return out


def normalized_report(bundle_dir) -> tuple[str, list[str]]:
    """CSV of latency-violation fractions and recovery figures normalized to the adaptive run.

    Returns the CSV text and a list of warnings. Without an adaptive run the
    report is partial: raw values, empty normalized columns.
    """
    data = io.read_json(Path(bundle_dir) / "report.json")
    runs = data["runs"]
    warnings = []
    ref = runs.get(ADAPTIVE)
    if ref is None:
        warnings.append(f"run {ADAPTIVE!r} missing; normalized columns left empty")
    expected = [ADAPTIVE] + sorted((k for k in runs if k != ADAPTIVE), key=_label_order)
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["run", "lat_violation_fraction", "recovery_time_norm", "rec_violation_norm"])
    for label in expected:
        r = runs.get(label)
        if r is None:
            continue
        rec = _ratio(r["recovery_total"], ref["recovery_total"]) if ref else None
        viol = _ratio(r["rec_violation_seconds"], ref["rec_violation_seconds"]) if ref else None
        w.writerow([label, _fmt(r["lat_violation_fraction"]), "" if rec is None else _fmt(rec), "" if viol is None else _fmt(viol)])
    return buf.getvalue(), warnings


def _label_order(label: str):
    # report.json keys are sorted as text; put "10s" before "120s" again
    try:
        return (0, float(label.removesuffix("s")), label)
    except ValueError:
        return (1, 0.0, label)


def _ratio(x: float, ref: float) -> float:
    # a zero reference normalizes equal zeros to 1 and anything else to inf
    if ref == 0:
        return 1.0 if x == 0 else math.inf
    return x / ref


def reconfiguration_count(decisions: list[dict]) -> int:
    return sum(1 for d in decisions if d["kind"] == RECONFIGURE)
