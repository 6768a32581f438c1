"""Domain types shared by every phase, plus invariant checking.

Time is integer seconds for workloads and failure schedules, fractional
seconds inside the simulator. Latency is in milliseconds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import singledispatch
from typing import Optional, Sequence

import numpy as np

from .errors import ParameterError

EQUIDISTANCE_TOL = 1e-9


@dataclass(frozen=True)
class WorkloadTrace:
    """Per-second event counts over a recording period."""

    start_time: int
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "start_time", int(self.start_time))
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))

    @property
    def duration_k(self) -> int:
        return len(self.counts)

    @property
    def end_time(self) -> int:
        """Exclusive end of the covered time range."""
        return self.start_time + len(self.counts)

    @property
    def timestamps(self) -> np.ndarray:
        return np.arange(self.start_time, self.end_time)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.counts, dtype=float)

    def rate_at(self, t: int) -> int:
        """W(t), the event count for second ``t``."""
        idx = int(t) - self.start_time
        if not 0 <= idx < len(self.counts):
            raise ParameterError(f"timestamp {t} outside trace [{self.start_time}, {self.end_time})")
        return self.counts[idx]

    def slice(self, start: int, stop: int) -> "WorkloadTrace":
        """Sub-trace covering absolute seconds ``[start, stop)`` clipped to bounds."""
        lo = max(start, self.start_time)
        hi = min(stop, self.end_time)
        if hi <= lo:
            raise ParameterError(f"empty slice [{start}, {stop})")
        return WorkloadTrace(lo, self.counts[lo - self.start_time : hi - self.start_time])


@dataclass(frozen=True)
class FailurePoint:
    timestamp: int
    rate: float


@dataclass(frozen=True)
class FailurePlan:
    """Failure timestamps with the smoothed throughput rate at each."""

    points: tuple[FailurePoint, ...]

    def __post_init__(self):
        object.__setattr__(self, "points", tuple(self.points))

    @property
    def m(self) -> int:
        return len(self.points)

    @property
    def timestamps(self) -> list[int]:
        return [p.timestamp for p in self.points]

    @property
    def rates(self) -> list[float]:
        return [p.rate for p in self.points]


@dataclass(frozen=True)
class ConfigGrid:
    """``z`` equidistant checkpoint intervals between ``ci_min`` and ``ci_max``."""

    ci_min: float
    ci_max: float
    z: int
    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @classmethod
    def from_range(cls, ci_min: float, ci_max: float, z: int) -> "ConfigGrid":
        if not (0 < ci_min < ci_max) or z < 2:
            raise ParameterError(f"need 0 < ci_min < ci_max and z >= 2, got {ci_min}, {ci_max}, {z}")
        values = np.linspace(ci_min, ci_max, z)
        values[0], values[-1] = ci_min, ci_max
        return cls(float(ci_min), float(ci_max), int(z), tuple(values.tolist()))

    @classmethod
    def parse(cls, text: str) -> "ConfigGrid":
        """Parse the ``min:max:z`` form used on the command line."""
        try:
            lo, hi, z = text.split(":")
            return cls.from_range(float(lo), float(hi), int(z))
        except ValueError as exc:
            raise ParameterError(f"bad grid spec {text!r}, expected min:max:z") from exc


@dataclass(frozen=True)
class QoSConstraints:
    l_const: float  # ms, bound on average end-to-end latency
    r_const: float  # s, bound on predicted recovery time


@dataclass(frozen=True)
class MetricsSample:
    t: float
    input_throughput: float
    consumer_lag: float
    avg_latency: float


@dataclass(frozen=True)
class InvalidCell:
    i: int
    j: int
    reason: str


@dataclass(frozen=True)
class ProfilingMatrix:
    """Latency (ms) and recovery (s) observations per (failure i, config j).

    Missing recovery cells are ``None`` and listed in ``invalid``.
    """

    latencies: tuple[tuple[Optional[float], ...], ...]
    recoveries: tuple[tuple[Optional[float], ...], ...]
    grid: ConfigGrid
    plan: FailurePlan
    invalid: tuple[InvalidCell, ...] = field(default=())

    def __post_init__(self):
        fix = lambda rows: tuple(tuple(None if v is None else float(v) for v in row) for row in rows)
        object.__setattr__(self, "latencies", fix(self.latencies))
        object.__setattr__(self, "recoveries", fix(self.recoveries))
        object.__setattr__(self, "invalid", tuple(self.invalid))

    @property
    def shape(self) -> tuple[int, int]:
        return (len(self.latencies), len(self.latencies[0]) if self.latencies else 0)

    def latency_array(self) -> np.ndarray:
        return _to_array(self.latencies)

    def recovery_array(self) -> np.ndarray:
        return _to_array(self.recoveries)

    def samples(self, target: str) -> list[tuple[float, float, float]]:
        """Valid ``(ci, tr, value)`` triples for fitting; missing cells are skipped."""
        rows = self.latencies if target == "latency" else self.recoveries
        out = []
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                if v is not None:
                    out.append((self.grid.values[j], self.plan.points[i].rate, v))
        return out


def _to_array(rows: Sequence[Sequence[Optional[float]]]) -> np.ndarray:
    return np.array([[np.nan if v is None else v for v in row] for row in rows], dtype=float)


# -- invariant checking ------------------------------------------------------


@singledispatch
def validate(value, **context) -> list[str]:
    """Return every violated invariant as ``"path: rule"``; empty means valid."""
    raise TypeError(f"no invariants registered for {type(value).__name__}")


@validate.register
def _(value: WorkloadTrace, **context) -> list[str]:
    out = []
    if value.duration_k < 2:
        out.append("duration_k: duration_k ≥ 2")
    for i, c in enumerate(value.counts):
        if c < 0:
            out.append(f"counts[{i}]: count ≥ 0")
    return out


@validate.register
def _(value: FailurePlan, trace: WorkloadTrace | None = None, smoothed=None, **context) -> list[str]:
    out = []
    if value.m < 2:
        out.append("m: m ≥ 2")
    ts = value.timestamps
    if any(b <= a for a, b in zip(ts, ts[1:])):
        out.append("points: timestamps strictly increasing")
    if trace is not None:
        for i, p in enumerate(value.points):
            if not trace.start_time <= p.timestamp < trace.end_time:
                out.append(f"points[{i}].timestamp: within trace range")
    if smoothed is not None:
        lo, hi = float(np.min(smoothed)), float(np.max(smoothed))
        for i, p in enumerate(value.points):
            if not lo - 1e-9 <= p.rate <= hi + 1e-9:
                out.append(f"points[{i}].rate: within smoothed workload range")
    return out


@validate.register
def _(value: ConfigGrid, **context) -> list[str]:
    out = []
    if not 0 < value.ci_min:
        out.append("ci_min: 0 < ci_min")
    if not value.ci_min < value.ci_max:
        out.append("ci_max: ci_min < ci_max")
    if value.z < 2:
        out.append("z: z ≥ 2")
    if len(value.values) != value.z:
        out.append("values: |values| = z")
        return out
    if value.values and value.values[0] != value.ci_min:
        out.append("values[0]: values[0] = ci_min")
    if value.values and value.values[-1] != value.ci_max:
        out.append("values[-1]: values[z−1] = ci_max")
    diffs = np.diff(value.values)
    if len(diffs) and np.max(np.abs(diffs - diffs[0])) > EQUIDISTANCE_TOL:
        out.append("values: consecutive differences equal")
    return out


@validate.register
def _(value: QoSConstraints, **context) -> list[str]:
    out = []
    if not value.l_const > 0:
        out.append("l_const: l_const > 0")
    if not value.r_const > 0:
        out.append("r_const: r_const > 0")
    return out


@validate.register
def _(value: MetricsSample, **context) -> list[str]:
    return [
        f"{name}: {name} ≥ 0"
        for name in ("t", "input_throughput", "consumer_lag", "avg_latency")
        if not getattr(value, name) >= 0
    ]


@validate.register
def _(value: ProfilingMatrix, **context) -> list[str]:
    out = []
    m, z = value.plan.m, value.grid.z
    for name in ("latencies", "recoveries"):
        rows = getattr(value, name)
        if len(rows) != m or any(len(r) != z for r in rows):
            out.append(f"{name}: dimensions ({m}, {z})")
            continue
        for i, row in enumerate(rows):
            for j, v in enumerate(row):
                if v is not None and not (math.isfinite(v) and v >= 0):
                    out.append(f"{name}[{i}][{j}]: finite and ≥ 0")
    return out


def validate_series(samples: Sequence[MetricsSample]) -> list[str]:
    """Per-sample checks plus monotone time ordering."""
    out = []
    for i, s in enumerate(samples):
        out.extend(f"[{i}].{v}" for v in validate(s))
        if i and not s.t > samples[i - 1].t:
            out.append(f"[{i}].t: t monotonically increasing")
    return out
