"""Workload recording stand-ins, smoothing, and failure point extraction."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .domain import FailurePlan, FailurePoint, WorkloadTrace
from .errors import DegenerateWorkloadError, ParameterError

KINDS = ("sinusoidal", "diurnal", "random-walk", "constant")
DEFAULT_WINDOW = 61


def generate_trace(
    kind: str,
    duration_k: int,
    base_rate: float,
    amplitude: float,
    seed: int,
    *,
    period: Optional[float] = None,
    noise: float = 0.02,
    start_time: int = 0,
) -> WorkloadTrace:
    """Synthesize a per-second event count trace.

    ``period`` is the cycle length in seconds for the sinusoidal kind
    (default: the whole trace) and the length of one simulated day for the
    diurnal kind (default: a seventh of the trace, i.e. a week compressed
    into ``duration_k``). ``noise`` is uniform jitter as a fraction of the
    amplitude. Sinusoidal and diurnal counts stay within
    ``[base_rate - amplitude, base_rate + amplitude]``.
    """
    if kind not in KINDS:
        raise ParameterError(f"unknown trace kind {kind!r}; expected one of {KINDS}")
    if duration_k < 2:
        raise ParameterError("duration_k must be ≥ 2")
    if amplitude < 0 or base_rate < amplitude:
        raise ParameterError("need base_rate ≥ amplitude ≥ 0")
    if not 0 <= noise < 1:
        raise ParameterError("noise must be in [0, 1)")

    rng = np.random.default_rng(seed)
    t = np.arange(duration_k, dtype=float)
    jitter = noise * amplitude

    if kind == "constant":
        values = np.full(duration_k, float(base_rate))
    elif kind == "sinusoidal":
        period = float(period or duration_k)
        values = base_rate + (amplitude - jitter) * np.sin(2 * np.pi * t / period)
        values += rng.uniform(-jitter, jitter, duration_k)
    elif kind == "diurnal":
        day = float(period or duration_k / 7)
        values = _diurnal(t, day, base_rate, amplitude - jitter, rng)
        values += rng.uniform(-jitter, jitter, duration_k)
    else:
        step = max(amplitude, 1.0) * 0.02
        lo, hi = base_rate - amplitude, base_rate + amplitude
        values = np.empty(duration_k)
        x = float(base_rate)
        for i, dx in enumerate(rng.normal(0.0, step, duration_k)):
            x += dx
            # reflect at the bounds
            if x > hi:
                x = 2 * hi - x
            if x < lo:
                x = 2 * lo - x
            values[i] = min(max(x, lo), hi)

    counts = np.clip(np.rint(values), max(base_rate - amplitude, 0), base_rate + amplitude)
    if kind == "constant":
        counts = np.full(duration_k, round(base_rate))
    return WorkloadTrace(start_time, counts.astype(np.int64).tolist())


def _diurnal(t, day, base, amp, rng):
    # Night trough, morning and evening peaks; per-day scale varies with the seed.
    x = (t % day) / day
    shape = -np.cos(2 * np.pi * x) + 0.35 * np.sin(4 * np.pi * x - 0.6)
    shape = (shape - shape.min()) / (shape.max() - shape.min()) * 2 - 1
    n_days = int(np.ceil(len(t) / day)) + 1
    scales = rng.uniform(0.75, 1.0, n_days)
    day_idx = (t // day).astype(int)
    # blend scales across day boundaries to keep the curve continuous
    frac = x
    scale = scales[day_idx] * (1 - frac) + scales[day_idx + 1] * frac
    return base + amp * scale * shape


@dataclass(frozen=True)
class SmoothedWorkload:
    source: WorkloadTrace
    window_w: int
    values: tuple[float, ...]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    def value_at(self, t: int) -> float:
        return self.values[int(t) - self.source.start_time]


def smooth(trace: WorkloadTrace, window_w: int = DEFAULT_WINDOW) -> SmoothedWorkload:
    """Centered moving average; windows are truncated at the trace edges."""
    k = trace.duration_k
    if window_w < 1 or window_w % 2 == 0 or window_w > k:
        raise ParameterError(f"window must be odd and in [1, {k}], got {window_w}")
    x = trace.as_array()
    half = window_w // 2
    csum = np.concatenate([[0.0], np.cumsum(x)])
    idx = np.arange(k)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, k)
    values = (csum[hi] - csum[lo]) / (hi - lo)
    return SmoothedWorkload(trace, window_w, tuple(values.tolist()))


def extract_failure_points(sw: SmoothedWorkload, m: int, mode: str = "rate") -> FailurePlan:
    """Pick ``m`` failure points spanning the observed workload range.

    ``mode="rate"`` spaces target rates evenly between the smoothed minimum and
    maximum and takes the nearest timestamp for each (earliest on ties, no
    repeats). ``mode="time"`` spaces timestamps evenly between the argmin and
    argmax. The stride is floored in magnitude and the last point is pinned to
    the argmax.
    """
    if m < 2:
        raise ParameterError("m must be ≥ 2")
    mode = {"rate-equidistant": "rate", "time-equidistant": "time"}.get(mode, mode)
    if mode not in ("rate", "time"):
        raise ParameterError(f"unknown mode {mode!r}")
    w = sw.as_array()
    if m > len(w):
        raise ParameterError(f"m={m} exceeds trace length {len(w)}")
    start = sw.source.start_time
    i_min, i_max = int(np.argmin(w)), int(np.argmax(w))

    if mode == "time":
        span = i_max - i_min
        if abs(span) < m - 1:
            raise DegenerateWorkloadError(f"argmin and argmax are {abs(span)} s apart; cannot place {m} distinct points")
        h = int(math.copysign(math.floor(abs(span) / (m - 1)), span))
        idx = [i_min + n * h for n in range(m - 1)] + [i_max]
    else:
        lo, hi = w[i_min], w[i_max]
        if hi == lo and m > 2:
            raise DegenerateWorkloadError("constant workload has no rate range to cover")
        if hi == lo:
            # the two endpoints coincide in value; fall back to distinct earliest points
            idx = [i_min, i_max if i_max != i_min else (i_min + 1)]
        else:
            targets = np.linspace(lo, hi, m)
            used: set[int] = set()
            idx = []
            for target in targets:
                # stable sort keeps the earliest timestamp first among equal distances
                for cand in np.argsort(np.abs(w - target), kind="stable"):
                    if int(cand) not in used:
                        used.add(int(cand))
                        idx.append(int(cand))
                        break
    idx = sorted(idx)
    return FailurePlan(tuple(FailurePoint(start + i, float(w[i])) for i in idx))


def phase1(trace: WorkloadTrace, m: int, mode: str = "rate", window_w: int = DEFAULT_WINDOW) -> tuple[SmoothedWorkload, FailurePlan]:
    """Smooth ``trace`` and extract its failure plan in one call."""
    sw = smooth(trace, window_w)
    return sw, extract_failure_points(sw, m, mode)
