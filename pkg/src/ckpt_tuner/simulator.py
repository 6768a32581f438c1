"""Deterministic simulator of a checkpointed stream processing job.

The job reads a replayed trace from a queue. Each one-second tick is split at
every checkpoint, failure, restart and reconfiguration instant that falls
inside it, so fractional schedule times are handled exactly. Within a
segment the queue fills at the tick's arrival rate and drains at the tick's
capacity while there is lag, which makes lag piecewise linear. A checkpoint
stall of ``checkpoint_pause`` removes that fraction of a second from the
capacity of the tick it starts in (spilling into later ticks if longer).

Latency model, per metric sample::

    base_latency + queue_latency_coeff * lag
        + checkpoint_pause * utilization * overhead_horizon / (ci + overhead_horizon)

The last term amortizes the per-checkpoint stall over the interval; it
behaves as ``pause / ci`` for long intervals and saturates for short ones.
"""

from __future__ import annotations

import bisect
import dataclasses
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .domain import FailurePlan, MetricsSample, WorkloadTrace
from .errors import NoCatchUpError, ParameterError

CHECKPOINT_STARTED = "CheckpointStarted"
CHECKPOINT_COMPLETED = "CheckpointCompleted"
FAILURE_INJECTED = "FailureInjected"
PROCESSING_RESUMED = "ProcessingResumed"
CAUGHT_UP = "CaughtUp"
RECONFIGURED = "Reconfigured"

_EPS = 1e-9
PRE_FAILURE_WINDOW = 60


@dataclass(frozen=True)
class PipelineSpec:
    capacity_mu: Optional[float] = None  # events/s; None means 2x the trace peak
    base_latency: float = 200.0  # ms
    queue_latency_coeff: float = 0.5  # ms per event of lag
    checkpoint_pause: float = 400.0  # ms of processing stall per checkpoint
    checkpoint_duration: float = 2.0  # s from start to completion
    detection_timeout: float = 50.0  # s
    restart_duration: float = 10.0  # s
    controlled_restart_downtime: float = 15.0  # s
    overhead_horizon: float = 20.0  # s, saturation scale of the amortized checkpoint overhead
    latency_jitter: float = 0.0  # relative std of multiplicative latency noise

    @property
    def downtime(self) -> float:
        """Time from a failure until processing resumes."""
        return self.detection_timeout + self.restart_duration

    def resolved(self, trace: WorkloadTrace) -> "PipelineSpec":
        if self.capacity_mu is not None:
            return self
        return dataclasses.replace(self, capacity_mu=2.0 * max(trace.counts))

    def validate(self) -> list[str]:
        out = []
        if self.capacity_mu is not None and not self.capacity_mu > 0:
            out.append("capacity_mu: capacity_mu > 0")
        for f in dataclasses.fields(self):
            if f.name != "capacity_mu" and getattr(self, f.name) < 0:
                out.append(f"{f.name}: ≥ 0")
        return out

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineSpec":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ParameterError(f"unknown PipelineSpec fields: {sorted(unknown)}")
        return cls(**data)

    def overhead_ms(self, ci: float, rate: float) -> float:
        util = rate / self.capacity_mu
        return self.checkpoint_pause * util * self.overhead_horizon / (ci + self.overhead_horizon)

    def steady_latency(self, ci: float, rate: float) -> float:
        """Latency with no lag, i.e. the failure-free steady state."""
        return self.base_latency + self.overhead_ms(ci, rate)


@dataclass(frozen=True)
class SimEvent:
    t: float
    kind: str
    data: tuple = ()  # sorted (key, value) pairs

    def to_dict(self) -> dict:
        return {"t": round(self.t, 9), "kind": self.kind, **dict(self.data)}


@dataclass
class SimRun:
    """Metrics at 1 Hz plus the ordered event log of one simulated deployment."""

    t: np.ndarray
    input_throughput: np.ndarray
    consumer_lag: np.ndarray
    avg_latency: np.ndarray
    arrival_rate: np.ndarray
    active_ci: np.ndarray
    events: list[SimEvent]
    seed: int

    @property
    def metrics(self) -> list[MetricsSample]:
        return [
            MetricsSample(float(a), float(b), float(c), float(d))
            for a, b, c, d in zip(self.t, self.input_throughput, self.consumer_lag, self.avg_latency)
        ]

    def events_of(self, kind: str) -> list[SimEvent]:
        return [e for e in self.events if e.kind == kind]

    def recoveries(self) -> list[tuple[float, Optional[float]]]:
        """``(failure time, caught-up time or None)`` for each injected failure."""
        out = []
        for e in self.events_of(FAILURE_INJECTED):
            fid = dict(e.data)["failure_id"]
            end = next((c.t for c in self.events_of(CAUGHT_UP) if dict(c.data)["failure_id"] == fid), None)
            out.append((e.t, end))
        return out

    def recovery_times(self) -> list[Optional[float]]:
        return [None if end is None else end - start for start, end in self.recoveries()]

    def window(self, start: float, stop: float) -> slice:
        """Index slice of samples with ``start <= t < stop``."""
        lo = int(np.searchsorted(self.t, start, side="left"))
        hi = int(np.searchsorted(self.t, stop, side="left"))
        return slice(lo, hi)

    def equals(self, other: "SimRun") -> bool:
        arrays = ("t", "input_throughput", "consumer_lag", "avg_latency", "arrival_rate", "active_ci")
        return (
            all(np.array_equal(getattr(self, a), getattr(other, a)) for a in arrays)
            and self.events == other.events
            and self.seed == other.seed
        )

    def event_log(self) -> list[dict]:
        return [e.to_dict() for e in self.events]


@dataclass
class _Recovery:
    failure_id: int
    t0: float
    band: float


class Simulator:
    """Steppable simulation of one deployment.

    ``run`` covers the batch case. The optimizer drives an instance directly
    through ``advance_to`` and ``reconfigure``.
    """

    def __init__(
        self,
        spec: PipelineSpec,
        trace: WorkloadTrace,
        ci: float,
        injections: Sequence[float] = (),
        *,
        seed: int = 0,
        injection_mode: str = "exact",
        epsilon: float = 1.0,
    ):
        if ci <= 0:
            raise ParameterError("ci must be > 0")
        if injection_mode not in ("exact", "worst-case"):
            raise ParameterError(f"unknown injection_mode {injection_mode!r}")
        for t0 in injections:
            if not trace.start_time <= t0 < trace.end_time:
                raise ParameterError(f"injection at {t0} outside trace [{trace.start_time}, {trace.end_time})")
        self.spec = spec.resolved(trace)
        problems = self.spec.validate()
        if problems:
            raise ParameterError("; ".join(problems))
        self.trace = trace
        self._counts = trace.counts
        self.seed = seed
        self._rng = np.random.default_rng(seed)
        self.epsilon = epsilon
        self.injection_mode = injection_mode

        self.ci = float(ci)
        self.now = float(trace.start_time)
        self._tick = 0
        self.produced = 0.0
        self.offset = 0.0
        self.completed_offset = 0.0
        self.next_start: Optional[float] = self.now + self.ci
        self.pending: list[tuple[float, float]] = []  # (completion time, captured offset)
        self.down_until: Optional[float] = None
        self.stall = 0.0
        self._exact = sorted(float(t) for t in injections) if injection_mode == "exact" else []
        self._requests = sorted(float(t) for t in injections) if injection_mode == "worst-case" else []
        self._reconfigs: list[tuple[float, float]] = []
        self._recovering: list[_Recovery] = []
        self._failure_count = 0

        n = trace.duration_k
        self._t = np.arange(trace.start_time, trace.end_time, dtype=float)
        self._thr = np.zeros(n)
        self._lag = np.zeros(n)
        self._lat = np.zeros(n)
        self._ci = np.zeros(n)
        self.events: list[SimEvent] = []

    # -- public control surface ---------------------------------------------

    @property
    def finished(self) -> bool:
        return self._tick >= self.trace.duration_k

    @property
    def lag(self) -> float:
        return max(self.produced - self.offset, 0.0)

    def schedule_reconfigure(self, t: float, new_ci: float) -> None:
        if new_ci <= 0:
            raise ParameterError("new ci must be > 0")
        if not self.trace.start_time <= t < self.trace.end_time:
            raise ParameterError(f"reconfiguration at {t} outside trace")
        if t < self.now:
            raise ParameterError(f"reconfiguration at {t} is in the past (now={self.now})")
        bisect.insort(self._reconfigs, (float(t), float(new_ci)))

    def reconfigure(self, new_ci: float) -> None:
        """Controlled restart with ``new_ci`` at the current simulated time."""
        self.schedule_reconfigure(self.now, new_ci)

    def samples(self, start: Optional[float] = None, stop: Optional[float] = None) -> list[MetricsSample]:
        """Metric samples produced so far with ``start <= t < stop``."""
        hi = self._tick
        lo = 0
        if start is not None:
            lo = max(0, int(np.searchsorted(self._t[:hi], start, side="left")))
        if stop is not None:
            hi = min(hi, int(np.searchsorted(self._t[:hi], stop, side="left")))
        return [
            MetricsSample(float(self._t[i]), float(self._thr[i]), float(self._lag[i]), float(self._lat[i]))
            for i in range(lo, hi)
        ]

    def advance_to(self, t: float) -> None:
        """Simulate whole ticks until simulated time reaches ``t`` or the trace ends."""
        while not self.finished and self.trace.start_time + self._tick < t:
            self._run_tick()

    def run_to_end(self) -> SimRun:
        self.advance_to(float("inf"))
        return self.result()

    def result(self) -> SimRun:
        n = self._tick
        counts = np.asarray(self._counts[:n], dtype=float)
        return SimRun(
            t=self._t[:n].copy(),
            input_throughput=self._thr[:n].copy(),
            consumer_lag=self._lag[:n].copy(),
            avg_latency=self._lat[:n].copy(),
            arrival_rate=counts,
            active_ci=self._ci[:n].copy(),
            events=list(self.events),
            seed=self.seed,
        )

    # -- internals ----------------------------------------------------------

    def _log(self, t: float, kind: str, **data) -> None:
        self.events.append(SimEvent(t, kind, tuple(sorted(data.items()))))

    def _run_tick(self) -> None:
        i = self._tick
        T = float(self.trace.start_time + i)
        end = T + 1.0
        rate = float(self._counts[i])
        # checkpoint stalls reduce this tick's capacity uniformly
        upcoming = self.spec.checkpoint_pause / 1000.0 if self._starts_within(end) else 0.0
        paused = min(1.0, self.stall + upcoming)
        mu = self.spec.capacity_mu * (1.0 - paused)
        processed = 0.0
        cur = T
        while True:
            nxt = self._next_event_time(cur, end)
            dt = nxt - cur
            if dt > 0:
                processed += self._advance_segment(cur, dt, rate, mu)
            cur = nxt
            if cur >= end - _EPS:
                break
            self._fire_events(cur, rate)
        # events landing exactly on the tick boundary belong to the next tick
        self.stall = max(0.0, self.stall - paused)
        self.now = end
        lag = self.lag
        self._thr[i] = processed
        self._lag[i] = lag
        latency = self.spec.base_latency + self.spec.queue_latency_coeff * lag + self.spec.overhead_ms(self.ci, rate)
        if self.spec.latency_jitter > 0:
            latency *= max(0.0, 1.0 + self.spec.latency_jitter * self._rng.standard_normal())
        self._lat[i] = latency
        self._ci[i] = self.ci
        self._tick += 1

    def _starts_within(self, end: float) -> bool:
        return self.down_until is None and self.next_start is not None and self.next_start < end - _EPS

    def _next_event_time(self, cur: float, end: float) -> float:
        cands = [end]
        up = self.down_until is None
        if up and self.next_start is not None:
            cands.append(self.next_start)
        if self.pending:
            cands.append(self.pending[0][0])
        if self._exact:
            cands.append(self._exact[0])
        if self._reconfigs:
            cands.append(self._reconfigs[0][0])
        if not up:
            cands.append(self.down_until)
        nxt = min(cands)
        return max(nxt, cur)

    def _advance_segment(self, cur: float, dt: float, rate: float, mu: float) -> float:
        arrived = rate * dt
        lag0 = self.lag
        self.produced += arrived
        if self.down_until is not None:
            return 0.0
        done = min(mu * dt, lag0 + arrived)
        self.offset += done
        if self._recovering:
            band = self._recovering[0].band
            if lag0 <= band:
                self._caught_up(cur)
            elif self.lag <= band + _EPS and mu > rate:
                self._caught_up(cur + (lag0 - band) / (mu - rate))
        return done

    def _caught_up(self, t: float) -> None:
        for r in self._recovering:
            self._log(t, CAUGHT_UP, failure_id=r.failure_id, failed_at=r.t0)
        self._recovering = []

    def _fire_events(self, t: float, rate: float) -> None:
        # resume, completions, failures, reconfigurations, then checkpoint starts
        if self.down_until is not None and self.down_until <= t + _EPS:
            self.down_until = None
            self.next_start = t + self.ci
            self._log(t, PROCESSING_RESUMED)
        while self.pending and self.pending[0][0] <= t + _EPS:
            _, captured = self.pending.pop(0)
            self.completed_offset = captured
            self._log(t, CHECKPOINT_COMPLETED, offset=captured)
        while self._exact and self._exact[0] <= t + _EPS:
            self._exact.pop(0)
            self._fail(t, rate)
        while self._reconfigs and self._reconfigs[0][0] <= t + _EPS:
            _, new_ci = self._reconfigs.pop(0)
            self._controlled_restart(t, new_ci)
        if self.down_until is None and self.next_start is not None and self.next_start <= t + _EPS:
            self._start_checkpoint(t)

    def _start_checkpoint(self, t: float) -> None:
        completion = t + self.spec.checkpoint_duration
        self.pending.append((completion, self.offset))
        self.stall += self.spec.checkpoint_pause / 1000.0
        self.next_start = t + self.ci
        self._log(t, CHECKPOINT_STARTED, ci=self.ci)
        if self._requests and self._requests[0] <= completion - self.epsilon + _EPS:
            self._requests.pop(0)
            inject_at = completion - self.epsilon
            if inject_at < self.trace.end_time:
                bisect.insort(self._exact, inject_at)

    def _steady_lag(self) -> float:
        n = self._tick
        if n == 0:
            return self.lag
        return float(np.mean(self._lag[max(0, n - PRE_FAILURE_WINDOW) : n]))

    def _fail(self, t: float, rate: float) -> None:
        self._failure_count += 1
        fid = self._failure_count
        if self._recovering:
            band = self._recovering[0].band
        else:
            band = max(self._steady_lag(), 0.01 * rate)
        self._recovering.append(_Recovery(fid, t, band))
        rolled_back = self.offset - self.completed_offset
        self.offset = self.completed_offset
        self.pending.clear()
        self.stall = 0.0
        resume = t + self.spec.downtime
        self.down_until = resume if self.down_until is None else max(self.down_until, resume)
        self._log(t, FAILURE_INJECTED, failure_id=fid, rolled_back=rolled_back, ci=self.ci)

    def _controlled_restart(self, t: float, new_ci: float) -> None:
        # savepoint first: nothing is rolled back
        self.completed_offset = self.offset
        self.pending.clear()
        self.stall = 0.0
        old = self.ci
        self.ci = new_ci
        resume = t + self.spec.controlled_restart_downtime
        self.down_until = resume if self.down_until is None else max(self.down_until, resume)
        self._log(t, RECONFIGURED, old_ci=old, new_ci=new_ci)


def run(
    spec: PipelineSpec,
    trace: WorkloadTrace,
    ci: float,
    injections: Sequence[float] = (),
    reconfig_commands: Iterable[tuple[float, float]] = (),
    seed: int = 0,
    *,
    injection_mode: str = "exact",
    epsilon: float = 1.0,
) -> SimRun:
    """Simulate one deployment over the whole trace."""
    sim = Simulator(spec, trace, ci, injections, seed=seed, injection_mode=injection_mode, epsilon=epsilon)
    for t, new_ci in reconfig_commands:
        sim.schedule_reconfigure(t, new_ci)
    return sim.run_to_end()


def oracle_recovery_time(spec: PipelineSpec, rate_w: float, ci: float) -> float:
    """Closed-form worst-case recovery time under a constant input rate.

    Downtime ``d`` plus the time to drain a backlog of one full interval of
    reprocessing and everything that arrived while down.
    """
    mu = spec.capacity_mu
    if mu is None:
        raise ParameterError("oracle needs an explicit capacity_mu")
    if mu <= rate_w:
        raise NoCatchUpError(f"capacity {mu} does not exceed rate {rate_w}")
    d = spec.downtime
    backlog = rate_w * (ci + d)
    return d + backlog / (mu - rate_w)


def replay_window(trace: WorkloadTrace, plan: FailurePlan | Sequence[int], margin_before: float, margin_after: float) -> list[WorkloadTrace]:
    """Sub-traces around each failure point, with overlapping spans merged."""
    if margin_before < 0 or margin_after < 0:
        raise ParameterError("margins must be ≥ 0")
    stamps = plan.timestamps if isinstance(plan, FailurePlan) else list(plan)
    spans = sorted(
        (max(trace.start_time, int(f - margin_before)), min(trace.end_time, int(f + margin_after)))
        for f in stamps
    )
    merged: list[list[int]] = []
    for lo, hi in spans:
        if merged and lo <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], hi)
        else:
            merged.append([lo, hi])
    return [trace.slice(lo, hi) for lo, hi in merged if hi > lo]
