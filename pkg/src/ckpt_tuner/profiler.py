"""Parallel profiling: one simulated deployment per checkpoint interval.

Every deployment replays the recorded workload around each failure point,
gets a failure injected just before a checkpoint would complete, and
reports the pre-failure average latency and the anomaly-measured recovery
time. Results fill the latency and recovery matrices used to fit models.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .anomaly import AnomalyDetector, DetectorConfig, measure_recovery
from .domain import ConfigGrid, FailurePlan, InvalidCell, ProfilingMatrix, WorkloadTrace, validate
from .errors import DetectionMissError, InsufficientDataError, ParameterError, ProfilingFailedError
from .simulator import PipelineSpec, replay_window, run

LATENCY_WINDOW = 60
MAX_INVALID_FRACTION = 0.2


@dataclass(frozen=True)
class Margins:
    before: float = 300.0
    after: float = 900.0


def schedule_worst_case_injection(
    ci: float,
    checkpoint_schedule_origin: float,
    nominal_time: float,
    epsilon: float = 1.0,
    checkpoint_duration: float = 2.0,
    *,
    relative_to: str = "completion",
) -> float:
    """Injection time that maximizes reprocessing for a failure due at ``nominal_time``.

    Checkpoints start at ``origin + n * ci`` for n ≥ 1. With
    ``relative_to="completion"`` the failure lands ``epsilon`` before the
    first completion that comes strictly after ``nominal_time`` (and no
    earlier than it). ``relative_to="start"`` uses scheduled starts instead.
    """
    if not 0 < epsilon < ci:
        raise ParameterError("need 0 < epsilon < ci")
    if relative_to not in ("completion", "start"):
        raise ParameterError(f"unknown relative_to {relative_to!r}")
    lag = checkpoint_duration if relative_to == "completion" else 0.0
    # smallest n ≥ 1 with origin + n*ci + lag - epsilon ≥ nominal and the mark > nominal
    n = max(1, math.ceil((nominal_time + epsilon - lag - checkpoint_schedule_origin) / ci - 1e-12))
    while True:
        mark = checkpoint_schedule_origin + n * ci + lag
        if mark > nominal_time and mark - epsilon >= nominal_time - 1e-12:
            return mark - epsilon
        n += 1


@dataclass(frozen=True)
class CellResult:
    i: int
    j: int
    latency: float
    recovery: Optional[float]
    reason: Optional[str] = None


def _profile_cell(args) -> CellResult:
    i, j, segment, nominal, ci, spec, margins, epsilon, detector_config, seed, relative_to = args
    t0 = schedule_worst_case_injection(ci, segment.start_time, nominal, epsilon, spec.checkpoint_duration, relative_to=relative_to)
    if t0 >= segment.end_time:
        return CellResult(i, j, float("nan"), None, "injection beyond replay window")
    sim = run(spec, segment, ci, [t0], seed=seed)
    # latency over the minute before the failure; sample t covers [t, t+1)
    win = (sim.t + 1 <= t0) & (sim.t >= t0 - LATENCY_WINDOW)
    latency = float(np.mean(sim.avg_latency[win])) if win.any() else float("nan")
    try:
        rec = measure_recovery(AnomalyDetector(detector_config), sim.metrics, t0, detection_timeout=spec.detection_timeout)
    except (DetectionMissError, InsufficientDataError) as exc:
        return CellResult(i, j, latency, None, f"detection miss: {exc}")
    if sim.recovery_times()[0] is None:
        return CellResult(i, j, latency, None, "no catch-up within replay window")
    return CellResult(i, j, latency, rec)


def run_profiling(
    trace: WorkloadTrace,
    plan: FailurePlan,
    grid: ConfigGrid,
    spec: PipelineSpec,
    margins: Margins = Margins(),
    seed: int = 0,
    *,
    epsilon: float = 1.0,
    detector_config: DetectorConfig = DetectorConfig(),
    relative_to: str = "completion",
    workers: int = 1,
) -> ProfilingMatrix:
    """Profile every (failure point, interval) pair and assemble the matrices.

    Each cell is an isolated deployment: the replay segment containing the
    failure point, with only that failure injected.
    """
    problems = validate(plan, trace=trace) + validate(grid)
    if problems:
        raise ParameterError("; ".join(problems))
    spec = spec.resolved(trace)
    if spec.capacity_mu <= max(plan.rates):
        raise ParameterError(f"capacity {spec.capacity_mu} does not exceed max plan rate {max(plan.rates)}")

    segments = replay_window(trace, plan, margins.before, margins.after)
    tasks = []
    for i, point in enumerate(plan.points):
        segment = next(s for s in segments if s.start_time <= point.timestamp < s.end_time)
        for j, ci in enumerate(grid.values):
            tasks.append((i, j, segment, point.timestamp, ci, spec, margins, epsilon, detector_config, seed, relative_to))

    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            cells = list(pool.map(_profile_cell, tasks))
    else:
        cells = [_profile_cell(t) for t in tasks]

    lat = [[None] * grid.z for _ in range(plan.m)]
    rec = [[None] * grid.z for _ in range(plan.m)]
    invalid = []
    for c in sorted(cells, key=lambda c: (c.i, c.j)):
        lat[c.i][c.j] = None if math.isnan(c.latency) else c.latency
        rec[c.i][c.j] = c.recovery
        if c.reason is not None:
            invalid.append(InvalidCell(c.i, c.j, c.reason))
    if len(invalid) > MAX_INVALID_FRACTION * plan.m * grid.z:
        raise ProfilingFailedError(f"{len(invalid)} of {plan.m * grid.z} cells invalid; first: {invalid[0].reason}")
    return ProfilingMatrix(tuple(map(tuple, lat)), tuple(map(tuple, rec)), grid, plan, tuple(invalid))


def write_fit_csv(path, matrix: ProfilingMatrix) -> None:
    """Flat ``rate,ci,latency,recovery`` rows; missing values are left empty."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rate", "ci", "latency", "recovery"])
        for i, point in enumerate(matrix.plan.points):
            for j, ci in enumerate(matrix.grid.values):
                l, r = matrix.latencies[i][j], matrix.recoveries[i][j]
                w.writerow([repr(point.rate), repr(ci), "" if l is None else repr(l), "" if r is None else repr(r)])
