"""Online ARIMA(p, d, 0) learner shared by the anomaly detector and the forecaster.

The model predicts the next d-th difference as a weighted sum of the last
``ar_order`` differences (plus an optional drift term) and integrates the
prediction back to the level scale. Weights are fitted online by stochastic
gradient descent on the one-step-ahead squared error.
"""

from __future__ import annotations

import copy
from collections import deque
from math import comb

import numpy as np


class OnlineARIMA:
    def __init__(
        self,
        ar_order: int = 5,
        diff_order: int = 1,
        learning_rate: float = 1e-6,
        *,
        normalized_step: bool = False,
        drift: bool = False,
    ):
        if ar_order < 1:
            raise ValueError("ar_order must be ≥ 1")
        if diff_order < 0:
            raise ValueError("diff_order must be ≥ 0")
        self.ar_order = ar_order
        self.diff_order = diff_order
        self.learning_rate = learning_rate
        self.normalized_step = normalized_step
        self.drift = drift
        self.coefficients = np.zeros(ar_order + (1 if drift else 0))
        self.history: deque[float] = deque(maxlen=ar_order + diff_order + 1)
        self.n_seen = 0

    def clone(self) -> "OnlineARIMA":
        return copy.deepcopy(self)

    @property
    def ready(self) -> bool:
        return len(self.history) == self.history.maxlen

    def _features(self, hist: list[float]) -> np.ndarray:
        d = np.asarray(hist, dtype=float)
        for _ in range(self.diff_order):
            d = np.diff(d)
        lags = d[::-1][: self.ar_order]  # most recent first
        if self.drift:
            return np.concatenate([[1.0], lags])
        return lags

    def _integrate(self, hist: list[float], next_diff: float) -> float:
        # x_next = next_diff + sum_{k=1..d} (-1)^(k+1) C(d,k) x_{t-k+1}
        d = self.diff_order
        level = next_diff
        for k in range(1, d + 1):
            level += (-1) ** (k + 1) * comb(d, k) * hist[-k]
        return level

    def predict(self, hist: list[float] | None = None) -> float:
        """One-step-ahead prediction; persistence until enough history exists."""
        hist = list(self.history) if hist is None else hist
        if not hist:
            return float("nan")
        if len(hist) < self.history.maxlen:
            return hist[-1]
        x = self._features(hist)
        return self._integrate(hist, float(self.coefficients @ x))

    def update(self, value: float, learn: bool = True) -> float:
        """Consume ``value``; returns the prediction that was made for it."""
        hist = list(self.history)
        pred = self.predict(hist) if hist else value
        if learn and len(hist) == self.history.maxlen:
            x = self._features(hist)
            err = value - pred
            step = self.learning_rate
            if self.normalized_step:
                step = step / (1e-8 + float(x @ x))
            self.coefficients = self.coefficients + step * err * x
        self.history.append(float(value))
        self.n_seen += 1
        return pred

    def forecast(self, horizon: int) -> np.ndarray:
        """Iterated multi-step forecast; the model state is left untouched."""
        hist = list(self.history)
        out = []
        for _ in range(horizon):
            nxt = self.predict(hist)
            out.append(nxt)
            hist = hist[1:] + [nxt]
        return np.asarray(out)
