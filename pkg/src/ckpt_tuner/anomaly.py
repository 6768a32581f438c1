"""Online ARIMA anomaly detector used to measure recovery times.

Two channels are monitored, input throughput and consumer lag, both divided
by the mean warmup throughput so that lag reads as seconds of input. Each
channel has its own ARIMA predictor and a window of recent absolute
prediction errors. Throughput is differenced, so its untrained predictor is
persistence. Lag is modeled on its level: a draining backlog is abnormal for
as long as it exists, not only while its slope is steep. A sample is anomalous on a channel when its error exceeds
``mean + threshold_multiplier * std`` of that window (never less than
``min_threshold``). The system is anomalous while either channel is, and
returns to normal after ``consecutive_normal_needed`` clean samples in a row.
"""

from __future__ import annotations

import copy
import dataclasses
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .arima import OnlineARIMA
from .domain import MetricsSample
from .errors import DetectionMissError, InsufficientDataError, ParameterError

CHANNELS = ("input_throughput", "consumer_lag")
NORMAL = "Normal"
ANOMALOUS = "Anomalous"


@dataclass(frozen=True)
class DetectorConfig:
    ar_order: int = 5
    diff_order: int = 1  # throughput channel
    lag_diff_order: int = 0  # lag is a level signal; see module docstring
    threshold_multiplier: float = 4.0
    error_window: int = 120
    consecutive_normal_needed: int = 30
    learning_rate: float = 1e-6
    min_threshold: float = 0.05  # in units of mean warmup throughput

    def validate(self) -> list[str]:
        out = []
        if self.ar_order < 1:
            out.append("ar_order: ar_order ≥ 1")
        if self.error_window < self.ar_order:
            out.append("error_window: w_e ≥ ar_order")
        if not self.threshold_multiplier > 0:
            out.append("threshold_multiplier: > 0")
        if self.consecutive_normal_needed < 1:
            out.append("consecutive_normal_needed: ≥ 1")
        return out

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "DetectorConfig":
        return cls(**data)


@dataclass(frozen=True)
class AnomalyInterval:
    start: float
    end: Optional[float]  # None while still open
    channel: str

    def to_dict(self) -> dict:
        return {"start": self.start, "end": self.end, "channel": self.channel}


@dataclass(frozen=True)
class Observation:
    prediction: dict
    error: dict
    status: str
    anomalous_channels: tuple[str, ...]


class AnomalyDetector:
    def __init__(self, config: DetectorConfig = DetectorConfig()):
        problems = config.validate()
        if problems:
            raise ParameterError("; ".join(problems))
        self.config = config
        self.scale = 1.0
        self.models = self._new_models()
        self.errors = {c: deque(maxlen=config.error_window) for c in CHANNELS}
        self.status = NORMAL
        self.anomalous_since: Optional[float] = None
        self.trigger_channel: Optional[str] = None
        self._normal_run = 0
        self._normal_run_start: Optional[float] = None
        self.intervals: list[AnomalyInterval] = []
        self.warm = False

    def _new_models(self) -> dict[str, OnlineARIMA]:
        c = self.config
        return {
            "input_throughput": OnlineARIMA(c.ar_order, c.diff_order, c.learning_rate),
            "consumer_lag": OnlineARIMA(c.ar_order, c.lag_diff_order, c.learning_rate),
        }

    def clone(self) -> "AnomalyDetector":
        return copy.deepcopy(self)

    @property
    def coefficients(self) -> dict:
        return {c: m.coefficients.copy() for c, m in self.models.items()}

    def warmup(self, normal_metrics: Sequence[MetricsSample]) -> "AnomalyDetector":
        """Fit on failure-free samples and fill the error windows."""
        need = 10 * self.config.ar_order
        if len(normal_metrics) < need:
            raise InsufficientDataError(f"warmup needs ≥ {need} samples, got {len(normal_metrics)}")
        mean_thr = float(np.mean([s.input_throughput for s in normal_metrics]))
        self.scale = mean_thr if mean_thr > 0 else 1.0
        self.models = self._new_models()
        self.errors = {c: deque(maxlen=self.config.error_window) for c in CHANNELS}
        for s in normal_metrics:
            for c in CHANNELS:
                x = getattr(s, c) / self.scale
                pred = self.models[c].update(x)
                self.errors[c].append(abs(x - pred))
        self.status = NORMAL
        self.anomalous_since = None
        self._normal_run = 0
        self.intervals = []
        self.warm = True
        return self

    def threshold(self, channel: str) -> float:
        win = self.errors[channel]
        if not win:
            return self.config.min_threshold
        arr = np.asarray(win)
        return max(float(arr.mean() + self.config.threshold_multiplier * arr.std()), self.config.min_threshold)

    def observe(self, sample: MetricsSample) -> Observation:
        cfg = self.config
        preds, errs, flagged = {}, {}, []
        for c in CHANNELS:
            x = getattr(sample, c) / self.scale
            model = self.models[c]
            pred = model.predict() if model.history else x
            err = abs(x - pred)
            preds[c] = pred * self.scale
            errs[c] = err
            if err > self.threshold(c):
                flagged.append(c)
        learn = self.status == NORMAL and not flagged
        for c in CHANNELS:
            self.models[c].update(getattr(sample, c) / self.scale, learn=learn)

        if self.status == NORMAL:
            if flagged:
                self.status = ANOMALOUS
                self.anomalous_since = sample.t
                self.trigger_channel = flagged[0]
                self._normal_run = 0
            else:
                for c in CHANNELS:
                    self.errors[c].append(errs[c])
        else:
            # error windows stay frozen while anomalous
            if flagged:
                self._normal_run = 0
            else:
                if self._normal_run == 0:
                    self._normal_run_start = sample.t
                self._normal_run += 1
                if self._normal_run >= cfg.consecutive_normal_needed:
                    self.intervals.append(AnomalyInterval(self.anomalous_since, self._normal_run_start, self.trigger_channel))
                    self.status = NORMAL
                    self.anomalous_since = None
                    self._normal_run = 0
        return Observation(preds, errs, self.status, tuple(flagged))

    def stream(self, samples: Sequence[MetricsSample]) -> list[AnomalyInterval]:
        """Observe every sample; returns closed intervals plus a trailing open one."""
        for s in samples:
            self.observe(s)
        return self.all_intervals()

    def all_intervals(self) -> list[AnomalyInterval]:
        out = list(self.intervals)
        if self.status == ANOMALOUS:
            out.append(AnomalyInterval(self.anomalous_since, None, self.trigger_channel))
        return out


def warmup(detector: AnomalyDetector, normal_metrics: Sequence[MetricsSample]) -> AnomalyDetector:
    return detector.warmup(normal_metrics)


def observe(detector: AnomalyDetector, sample: MetricsSample) -> Observation:
    return detector.observe(sample)


def measure_recovery(
    detector: AnomalyDetector,
    metrics: Sequence[MetricsSample],
    failure_time: float,
    *,
    detection_timeout: float = 50.0,
    warmup_span: int = 180,
) -> float:
    """Length of the anomaly that follows ``failure_time``, in seconds.

    An unwarmed detector is first trained on up to ``warmup_span`` samples
    preceding the failure. The first anomaly that begins within
    ``2 * detection_timeout`` of the failure is taken, and its start is
    clamped to the failure time.
    """
    det = detector.clone()
    # sample t covers [t, t+1); the one containing the failure is already affected
    before = [s for s in metrics if s.t + 1 <= failure_time]
    after = [s for s in metrics if s.t + 1 > failure_time]
    if not det.warm:
        det.warmup(before[-warmup_span:])
    else:
        after = before[-det.config.error_window :] + after
    grace_end = failure_time + 2 * detection_timeout
    det.stream(after)
    for iv in det.all_intervals():
        if failure_time - 1 < iv.start <= grace_end:
            if iv.end is None:
                raise DetectionMissError(f"anomaly starting at {iv.start} never ended")
            return float(iv.end - failure_time)
    raise DetectionMissError(f"no anomaly within [{failure_time}, {grace_end}]")
