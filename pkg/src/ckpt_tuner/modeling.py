"""Latency and recovery regression models, the latency rescaling factor,
and the workload forecaster."""

from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .arima import OnlineARIMA
from .errors import DegenerateFitError, InsufficientDataError, ParameterError

log = logging.getLogger(__name__)

FEATURES = {
    1: ("1", "ci", "tr"),
    2: ("1", "ci", "tr", "ci^2", "tr^2", "ci*tr"),
}


def _design(ci: np.ndarray, tr: np.ndarray, degree: int) -> np.ndarray:
    cols = [np.ones_like(ci), ci, tr]
    if degree == 2:
        cols += [ci * ci, tr * tr, ci * tr]
    return np.column_stack(cols)


@dataclass(frozen=True)
class RegressionModel:
    """Polynomial least-squares model of ``(ci, tr) -> value``.

    Inputs are z-scored with the training means and standard deviations;
    ``coefficients`` live in that standardized space.
    """

    target: str
    degree: int
    coefficients: tuple[float, ...]
    ci_mean: float
    ci_std: float
    tr_mean: float
    tr_std: float
    n_samples: int = 0
    residual: float = 0.0

    def _z(self, ci, tr):
        ci = (np.asarray(ci, dtype=float) - self.ci_mean) / self.ci_std
        tr = (np.asarray(tr, dtype=float) - self.tr_mean) / self.tr_std
        return ci, tr

    def raw_value(self, ci, tr) -> np.ndarray:
        """Polynomial value before clamping; accepts scalars or arrays."""
        zc, zt = self._z(ci, tr)
        zc, zt = np.atleast_1d(zc), np.atleast_1d(zt)
        return _design(zc, zt, self.degree) @ np.asarray(self.coefficients)

    def raw_coefficients(self) -> dict[str, float]:
        """Coefficients expanded back onto unstandardized features."""
        a, b = 1 / self.ci_std, -self.ci_mean / self.ci_std  # z_ci = a*ci + b
        c, d = 1 / self.tr_std, -self.tr_mean / self.tr_std
        w = dict(zip(FEATURES[self.degree], self.coefficients))
        out = {name: 0.0 for name in FEATURES[self.degree]}
        out["1"] += w["1"] + w["ci"] * b + w["tr"] * d
        out["ci"] += w["ci"] * a
        out["tr"] += w["tr"] * c
        if self.degree == 2:
            out["1"] += w["ci^2"] * b * b + w["tr^2"] * d * d + w["ci*tr"] * b * d
            out["ci"] += 2 * w["ci^2"] * a * b + w["ci*tr"] * a * d
            out["tr"] += 2 * w["tr^2"] * c * d + w["ci*tr"] * b * c
            out["ci^2"] += w["ci^2"] * a * a
            out["tr^2"] += w["tr^2"] * c * c
            out["ci*tr"] += w["ci*tr"] * a * c
        return out

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "degree": self.degree,
            "coefficients": list(self.coefficients),
            "standardization": {
                "ci_mean": self.ci_mean,
                "ci_std": self.ci_std,
                "tr_mean": self.tr_mean,
                "tr_std": self.tr_std,
            },
            "training_summary": {"n_samples": self.n_samples, "residual": self.residual},
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RegressionModel":
        st = data["standardization"]
        summary = data.get("training_summary", {})
        return cls(
            data["target"],
            int(data["degree"]),
            tuple(float(c) for c in data["coefficients"]),
            st["ci_mean"],
            st["ci_std"],
            st["tr_mean"],
            st["tr_std"],
            int(summary.get("n_samples", 0)),
            float(summary.get("residual", 0.0)),
        )


def fit(samples: Sequence[tuple[float, float, float]], target: str, degree: int = 2) -> RegressionModel:
    """Least-squares fit of ``value ~ poly(ci, tr)`` on ``(ci, tr, value)`` triples."""
    if target not in ("latency", "recovery"):
        raise ParameterError(f"unknown target {target!r}")
    if degree not in FEATURES:
        raise ParameterError("degree must be 1 or 2")
    names = FEATURES[degree]
    if len(samples) < 2 * len(names):
        raise InsufficientDataError(f"need ≥ {2 * len(names)} samples for degree {degree}, got {len(samples)}")
    data = np.asarray(samples, dtype=float)
    ci, tr, y = data[:, 0], data[:, 1], data[:, 2]
    if np.any(y < 0):
        raise ParameterError("values must be ≥ 0")
    for name, col in (("ci", ci), ("tr", tr)):
        if np.ptp(col) == 0:
            raise DegenerateFitError(f"feature {name!r} is constant; the design is rank deficient", name)
    ci_mean, ci_std = float(ci.mean()), float(ci.std())
    tr_mean, tr_std = float(tr.mean()), float(tr.std())
    X = _design((ci - ci_mean) / ci_std, (tr - tr_mean) / tr_std, degree)
    rank = np.linalg.matrix_rank(X)
    if rank < X.shape[1]:
        # name the first column that adds nothing to the span of the ones before it
        for k in range(1, X.shape[1]):
            if np.linalg.matrix_rank(X[:, : k + 1]) <= k:
                raise DegenerateFitError(f"feature {names[k]!r} is collinear with earlier features", names[k])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    resid = float(np.sqrt(np.mean((X @ coef - y) ** 2)))
    return RegressionModel(target, degree, tuple(coef.tolist()), ci_mean, ci_std, tr_mean, tr_std, len(y), resid)


def predict(model: RegressionModel, ci: float, tr: float, *, with_flag: bool = False):
    """Model value at ``(ci, tr)``; negative values are clamped to 0.

    With ``with_flag=True`` returns ``(value, clamped)``.
    """
    raw = float(model.raw_value(ci, tr)[0])
    clamped = raw < 0
    value = 0.0 if clamped else raw
    return (value, clamped) if with_flag else value


def avg_percent_error(model: RegressionModel, observations: Iterable[tuple[float, float, float]]) -> float:
    """Mean of ``|prediction - actual| / actual``; zero actuals are skipped."""
    errs = []
    skipped = 0
    for ci, tr, actual in observations:
        if actual == 0:
            skipped += 1
            continue
        errs.append(abs(predict(model, ci, tr) - actual) / abs(actual))
    if skipped:
        log.warning("avg_percent_error: skipped %d observations with zero actual value", skipped)
    if not errs:
        raise ParameterError("no usable observations")
    return float(np.mean(errs))


@dataclass
class RescaleState:
    """Running correction factor ``p`` for latency predictions."""

    rescale_window_k: int = 5
    history: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.rescale_window_k < 1:
            raise ParameterError("rescale_window_k must be ≥ 1")
        self.history = deque(self.history, maxlen=self.rescale_window_k)

    @property
    def p(self) -> float:
        if not self.history:
            return 1.0
        return float(np.mean([obs / pred for obs, pred in self.history]))

    def update(self, observed_latency: float, predicted_latency: float) -> float:
        if not predicted_latency > 0:
            raise ParameterError("predicted latency must be > 0")
        self.history.append((float(observed_latency), float(predicted_latency)))
        return self.p


def update_rescale(state: RescaleState, observed_latency: float, predicted_latency: float) -> float:
    return state.update(observed_latency, predicted_latency)


class ForecastModel:
    """Online ARIMA forecaster of the incoming message rate.

    Same learner as the detector, single channel, with a drift term and a
    normalized step so it adapts quickly on a 1 Hz rate series.
    """

    def __init__(self, ar_order: int = 5, diff_order: int = 1, learning_rate: float = 0.05, horizon: int = 60):
        if horizon < 1:
            raise ParameterError("horizon must be ≥ 1")
        self.model = OnlineARIMA(ar_order, diff_order, learning_rate, normalized_step=True, drift=True)
        self.horizon = horizon
        self.scale = None

    @property
    def ar_order(self) -> int:
        return self.model.ar_order

    @property
    def warm(self) -> bool:
        return self.scale is not None and self.model.n_seen >= 10 * self.ar_order

    def warmup(self, rates: Sequence[float]) -> "ForecastModel":
        if len(rates) < 10 * self.ar_order:
            raise InsufficientDataError(f"forecaster needs ≥ {10 * self.ar_order} samples, got {len(rates)}")
        mean = float(np.mean(rates))
        self.scale = mean if mean > 0 else 1.0
        for r in rates:
            self.model.update(r / self.scale)
        return self

    def update(self, rate: float) -> None:
        if self.scale is None:
            self.scale = rate if rate > 0 else 1.0
        self.model.update(rate / self.scale)

    def forecast(self, horizon: int | None = None) -> np.ndarray:
        if not self.warm:
            raise InsufficientDataError("forecaster is cold")
        return self.model.forecast(horizon or self.horizon) * self.scale


def forecast(model: ForecastModel, horizon: int) -> np.ndarray:
    return model.forecast(horizon)
