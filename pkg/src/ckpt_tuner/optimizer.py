"""Runtime checkpoint interval optimization.

Each cycle compares windowed latency against its bound and the predicted
worst-case recovery time at the current interval against its bound. On a
violation the interval that minimizes ``q_r + q_l* + |q_r - q_l*|`` over the
grid is chosen, where both terms are predictions expressed as fractions of
their bounds, unless the forecast says the input rate is about to drop by
more than 10%.
"""

from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .domain import ConfigGrid, MetricsSample, QoSConstraints
from .errors import InsufficientDataError
from .modeling import ForecastModel, RegressionModel, RescaleState, predict
from .simulator import SimRun, Simulator

log = logging.getLogger(__name__)

NO_VIOLATION = "NoViolation"
DEFERRED = "Deferred"
RECONFIGURE = "Reconfigure"
INFEASIBLE_KEEP_CURRENT = "InfeasibleKeepCurrent"

DEFERRAL_DROP = 0.10


@dataclass(frozen=True)
class Violations:
    latency_violated: bool
    recovery_violated: bool
    observed_latency: float
    predicted_recovery: float
    tr_avg: float
    current_rate: float

    @property
    def any(self) -> bool:
        return self.latency_violated or self.recovery_violated


@dataclass(frozen=True)
class Selection:
    ci: Optional[float]  # None when no grid value is feasible
    q_r: float
    q_l_star: float
    objective: Optional[float]


@dataclass(frozen=True)
class OptimizerDecision:
    kind: str
    new_ci: Optional[float]
    q_r: float
    q_l_star: float
    forecast_drop: float


def detect_violation(
    window: Sequence[MetricsSample],
    m_l: RegressionModel,
    m_r: RegressionModel,
    rescale: RescaleState,
    constraints: QoSConstraints,
    current_ci: float,
    *,
    rates: Optional[Sequence[float]] = None,
    current_rate: Optional[float] = None,
) -> Violations:
    """Check both constraints over a metrics window.

    ``rates`` is the incoming message rate for the window when the caller
    has it from the queue; otherwise the sources' input throughput is used.
    The latency model and ``rescale`` do not enter the decision itself.
    """
    if not window:
        raise ValueError("empty metrics window")
    observed = float(np.mean([s.avg_latency for s in window]))
    rates = [s.input_throughput for s in window] if rates is None else list(rates)
    tr_avg = float(np.mean(rates))
    if current_rate is None:
        current_rate = float(np.mean(rates[-10:]))
    pred_r = predict(m_r, current_ci, tr_avg)
    return Violations(
        latency_violated=observed > constraints.l_const,
        recovery_violated=pred_r > constraints.r_const,
        observed_latency=observed,
        predicted_recovery=pred_r,
        tr_avg=tr_avg,
        current_rate=current_rate,
    )


def evaluate_objective(q_r: float, q_l_star: float) -> Optional[float]:
    """Objective value for a pair of bound fractions, or None when infeasible."""
    if not (0 < q_r < 1 and 0 < q_l_star < 1):
        return None
    return q_r + q_l_star + abs(q_r - q_l_star)


def fractions(ci: float, m_r: RegressionModel, m_l: RegressionModel, p: float, tr_avg: float, constraints: QoSConstraints) -> tuple[float, float]:
    q_r = predict(m_r, ci, tr_avg) / constraints.r_const
    q_l_star = p * predict(m_l, ci, tr_avg) / constraints.l_const
    return q_r, q_l_star


def select_ci(
    grid: ConfigGrid | Sequence[float],
    m_r: RegressionModel,
    m_l: RegressionModel,
    p: float,
    tr_avg: float,
    constraints: QoSConstraints,
) -> Selection:
    """Feasible interval with the smallest objective; ties go to the larger interval."""
    values = grid.values if isinstance(grid, ConfigGrid) else tuple(grid)
    best: Optional[Selection] = None
    for ci in values:
        q_r, q_l = fractions(ci, m_r, m_l, p, tr_avg, constraints)
        obj = evaluate_objective(q_r, q_l)
        if obj is None:
            continue
        if best is None or obj < best.objective or (obj == best.objective and ci > best.ci):
            best = Selection(ci, q_r, q_l, obj)
    if best is None:
        return Selection(None, math.nan, math.nan, None)
    return best


def forecast_drop(current_rate: float, forecast_mean: Optional[float]) -> float:
    if forecast_mean is None or current_rate <= 0:
        return 0.0
    return (current_rate - forecast_mean) / current_rate


def decide_from(
    violations: Violations,
    forecast_mean: Optional[float],
    selection: Optional[Selection],
    current_objective: Optional[float] = None,
) -> OptimizerDecision:
    """Pure decision rule; ``decide`` wraps it with the forecaster call.

    A reconfiguration must strictly beat the current interval's objective
    (an infeasible current interval counts as +inf); otherwise the current
    interval is kept.
    """
    if not violations.any:
        return OptimizerDecision(NO_VIOLATION, None, math.nan, math.nan, 0.0)
    drop = forecast_drop(violations.current_rate, forecast_mean)
    if drop > DEFERRAL_DROP:
        return OptimizerDecision(DEFERRED, None, math.nan, math.nan, drop)
    if selection is None or selection.ci is None:
        return OptimizerDecision(INFEASIBLE_KEEP_CURRENT, None, math.nan, math.nan, drop)
    current = math.inf if current_objective is None else current_objective
    if not selection.objective < current:
        return OptimizerDecision(INFEASIBLE_KEEP_CURRENT, None, selection.q_r, selection.q_l_star, drop)
    return OptimizerDecision(RECONFIGURE, selection.ci, selection.q_r, selection.q_l_star, drop)


def decide(
    violations: Violations,
    forecaster: Optional[ForecastModel],
    horizon_to_next_cycle: int,
    selection: Optional[Selection],
    current_objective: Optional[float] = None,
) -> OptimizerDecision:
    return decide_from(violations, _forecast_mean(forecaster, horizon_to_next_cycle), selection, current_objective)


def _forecast_mean(forecaster: Optional[ForecastModel], horizon: int) -> Optional[float]:
    if forecaster is None:
        return None
    try:
        return float(np.mean(forecaster.forecast(horizon)))
    except InsufficientDataError:
        log.info("forecaster cold; deciding without deferral")
        return None


@dataclass
class LoopConfig:
    cycle_period: float = 60.0
    window: float = 120.0
    rescale_window_k: int = 5
    min_settled_samples: int = 30  # post-restart samples needed before deciding again


def _settled_at(samples: Sequence[MetricsSample], restart_t: float, downtime: float, band: float) -> Optional[float]:
    """First time after a controlled restart at which the backlog it caused has drained."""
    for s in samples:
        if s.t >= restart_t + downtime and s.consumer_lag <= band:
            return s.t
    return None


def control_loop(
    sim: Simulator,
    m_l: RegressionModel,
    m_r: RegressionModel,
    forecaster: ForecastModel,
    constraints: QoSConstraints,
    grid: ConfigGrid,
    config: LoopConfig = LoopConfig(),
) -> tuple[list[dict], SimRun]:
    """Drive ``sim`` to the end of its trace, optimizing once per cycle.

    After each reconfiguration no decisions are taken until the backlog from
    the controlled restart has drained, and the monitoring window never
    reaches back past that point. Returns the decision log (one record per
    decision, inputs included so each can be replayed with
    ``replay_decision``) and the finished run.
    """
    rescale = RescaleState(config.rescale_window_k)
    start = float(sim.trace.start_time)
    horizon = max(1, int(round(config.cycle_period)))
    fed = 0  # arrival samples already given to the forecaster
    arrivals = sim.trace.counts
    records = []
    restart: Optional[tuple[float, float]] = None  # (time, lag band) of our last reconfiguration
    settled = start
    t = start + config.cycle_period
    while not sim.finished:
        sim.advance_to(t)
        t += config.cycle_period
        now = sim.now
        upto = int(now - start)
        for r in arrivals[fed:upto]:
            forecaster.update(float(r))
        fed = upto
        if restart is not None:
            # a restart's own backlog is not evidence about the new interval
            at = _settled_at(sim.samples(restart[0], now), restart[0], sim.spec.controlled_restart_downtime, restart[1])
            if at is None:
                continue
            settled, restart = at, None
        window = sim.samples(max(now - config.window, settled), now)
        if len(window) < config.min_settled_samples:
            continue
        rates = [float(arrivals[int(s.t) - sim.trace.start_time]) for s in window]

        ci = sim.ci
        viol = detect_violation(window, m_l, m_r, rescale, constraints, ci, rates=rates)
        pred_l = predict(m_l, ci, viol.tr_avg)
        if pred_l > 0:
            rescale.update(viol.observed_latency, pred_l)
        p = rescale.p

        selection = current_obj = None
        if viol.any:
            selection = select_ci(grid, m_r, m_l, p, viol.tr_avg, constraints)
            current_obj = evaluate_objective(*fractions(ci, m_r, m_l, p, viol.tr_avg, constraints))
        fmean = _forecast_mean(forecaster, horizon) if viol.any else None
        decision = decide_from(viol, fmean, selection, current_obj)
        if decision.kind == RECONFIGURE and not sim.finished:
            sim.reconfigure(decision.new_ci)
            band = max(float(np.mean([s.consumer_lag for s in window])), 0.01 * viol.current_rate)
            restart = (now, band)

        records.append(
            {
                "t": now,
                "kind": decision.kind,
                "new_ci": decision.new_ci,
                "q_r": _nan_none(decision.q_r),
                "q_l_star": _nan_none(decision.q_l_star),
                "forecast_drop": decision.forecast_drop,
                "tr_avg": viol.tr_avg,
                "inputs": {
                    "current_ci": ci,
                    "violations": asdict(viol),
                    "forecast_mean": fmean,
                    "p": p,
                    "predicted_latency": pred_l,
                    "selection": None if selection is None else _selection_dict(selection),
                    "current_objective": current_obj,
                },
            }
        )
    return records, sim.result()


def _nan_none(x: float) -> Optional[float]:
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _selection_dict(s: Selection) -> dict:
    return {"ci": s.ci, "q_r": _nan_none(s.q_r), "q_l_star": _nan_none(s.q_l_star), "objective": s.objective}


def replay_decision(record: dict) -> OptimizerDecision:
    """Recompute a logged decision from its recorded inputs."""
    inp = record["inputs"]
    viol = Violations(**inp["violations"])
    sel = inp["selection"]
    selection = None
    if sel is not None:
        selection = Selection(
            sel["ci"],
            math.nan if sel["q_r"] is None else sel["q_r"],
            math.nan if sel["q_l_star"] is None else sel["q_l_star"],
            sel["objective"],
        )
    return decide_from(viol, inp["forecast_mean"], selection, inp["current_objective"])
