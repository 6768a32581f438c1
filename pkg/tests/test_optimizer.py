import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckpt_tuner.domain import ConfigGrid, MetricsSample, QoSConstraints, WorkloadTrace
from ckpt_tuner.modeling import ForecastModel, RegressionModel, RescaleState, predict
from ckpt_tuner.optimizer import (
    DEFERRED,
    INFEASIBLE_KEEP_CURRENT,
    NO_VIOLATION,
    RECONFIGURE,
    LoopConfig,
    Selection,
    Violations,
    control_loop,
    decide,
    decide_from,
    detect_violation,
    evaluate_objective,
    replay_decision,
    select_ci,
)
from ckpt_tuner.simulator import PipelineSpec, Simulator, oracle_recovery_time

from conftest import oracle_models

QOS = QoSConstraints(1000.0, 240.0)
GRID = ConfigGrid.parse("10:120:5")


def const_model(value, target="latency"):
    return RegressionModel(target, 2, (float(value), 0, 0, 0, 0, 0), 0.0, 1.0, 0.0, 1.0)


def window(latency, rate=800.0, n=120):
    return [MetricsSample(float(t), rate, 0.0, latency) for t in range(n)]


class StubForecaster:
    def __init__(self, mean):
        self.mean = mean

    def forecast(self, horizon):
        return np.full(horizon, self.mean)


def test_objective_examples():
    assert evaluate_objective(0.5, 0.5) == 1.0
    assert evaluate_objective(0.9, 0.3) == pytest.approx(1.8)
    assert evaluate_objective(1.2, 0.3) is None
    assert evaluate_objective(0.5, 0.0) is None
    assert evaluate_objective(1.0, 0.5) is None


@settings(max_examples=500)
@given(q_r=st.floats(1e-9, 1, exclude_max=True), q_l=st.floats(1e-9, 1, exclude_max=True))
def test_objective_is_twice_the_max(q_r, q_l):
    assert evaluate_objective(q_r, q_l) == pytest.approx(2 * max(q_r, q_l), rel=1e-12)


def test_detect_violation_examples(spec):
    v = detect_violation(window(737.0), const_model(737), const_model(200, "recovery"), RescaleState(), QOS, 60)
    assert not v.any and v.predicted_recovery == 200
    v = detect_violation(window(1000.0), const_model(0), const_model(0, "recovery"), RescaleState(), QOS, 60)
    assert not v.latency_violated
    v = detect_violation(window(1000.5), const_model(0), const_model(0, "recovery"), RescaleState(), QOS, 60)
    assert v.latency_violated


def test_recovery_violation_from_inverted_oracle(spec):
    m_l, m_r = oracle_models(spec, rates=(200, 500, 800, 1100, 1400))
    # oracle = 240 at ci = (240 - d)(mu - w)/w - d = 60 for w = 1200
    assert oracle_recovery_time(spec, 1200, 60) == pytest.approx(240)
    hi = detect_violation(window(500, rate=1200), m_l, m_r, RescaleState(), QOS, 92.5)
    lo = detect_violation(window(500, rate=1200), m_l, m_r, RescaleState(), QOS, 37.5)
    assert hi.recovery_violated and not lo.recovery_violated


def brute_force(values, m_r, m_l, p, tr, qos):
    best, best_ci = math.inf, None
    for ci in values:
        q_r = predict(m_r, ci, tr) / qos.r_const
        q_l = p * predict(m_l, ci, tr) / qos.l_const
        if 0 < q_r < 1 and 0 < q_l < 1:
            obj = 2 * max(q_r, q_l)
            if obj < best or (obj == best and ci > best_ci):
                best, best_ci = obj, ci
    return best_ci


def random_model(rng, target, scale):
    coef = tuple(rng.normal(0, 1, 6) * scale)
    coef = (abs(coef[0]) + scale,) + coef[1:]
    return RegressionModel(target, 2, coef, 65.0, 40.0, 800.0, 300.0)


def test_select_ci_equals_brute_force(rng):
    for _ in range(300):
        z = int(rng.integers(2, 12))
        grid = ConfigGrid.from_range(float(rng.uniform(1, 30)), float(rng.uniform(40, 300)), z)
        m_r, m_l = random_model(rng, "recovery", 100), random_model(rng, "latency", 400)
        p, tr = float(rng.uniform(0.5, 2)), float(rng.uniform(100, 1500))
        assert select_ci(grid, m_r, m_l, p, tr, QOS).ci == brute_force(grid.values, m_r, m_l, p, tr, QOS)


def test_ties_go_to_the_larger_interval():
    sel = select_ci(GRID, const_model(120, "recovery"), const_model(500), 1.0, 800, QOS)
    assert sel.ci == 120 and sel.objective == 1.0


def test_only_smallest_feasible(spec):
    m_l, m_r = oracle_models(spec)
    tr = 1000.0
    r10, r37 = predict(m_r, 10, tr), predict(m_r, 37.5, tr)
    qos = QoSConstraints(5000.0, (r10 + r37) / 2)
    assert select_ci(GRID, m_r, m_l, 1.0, tr, qos).ci == 10


def test_none_feasible():
    sel = select_ci(GRID, const_model(300, "recovery"), const_model(100), 1.0, 800, QOS)
    assert sel.ci is None and sel.objective is None


VIOL = Violations(True, False, 1200.0, 100.0, 1000.0, 1000.0)
FEASIBLE = Selection(30.0, 0.5, 0.6, 1.2)


@pytest.mark.parametrize(
    "forecast_mean, kind",
    [(750.0, DEFERRED), (1000.0, RECONFIGURE), (900.0, RECONFIGURE), (901.0, RECONFIGURE), (899.0, DEFERRED)],
)
def test_deferral_rule(forecast_mean, kind):
    d = decide(VIOL, StubForecaster(forecast_mean), 60, FEASIBLE)
    assert d.kind == kind
    assert d.forecast_drop == pytest.approx((1000 - forecast_mean) / 1000)


def test_decide_other_branches(caplog):
    ok = Violations(False, False, 500.0, 100.0, 1000.0, 1000.0)
    assert decide(ok, StubForecaster(0.0), 60, FEASIBLE).kind == NO_VIOLATION
    assert decide(VIOL, StubForecaster(1000.0), 60, Selection(None, math.nan, math.nan, None)).kind == INFEASIBLE_KEEP_CURRENT
    # a cold forecaster never defers
    d = decide(VIOL, ForecastModel(), 60, FEASIBLE)
    assert d.kind == RECONFIGURE and d.forecast_drop == 0.0
    # a reconfiguration must beat the current interval
    assert decide_from(VIOL, None, FEASIBLE, current_objective=1.2).kind == INFEASIBLE_KEEP_CURRENT
    assert decide_from(VIOL, None, FEASIBLE, current_objective=1.3).kind == RECONFIGURE


def _loop(trace, spec, initial_ci, seed=0, qos=QOS):
    m_l, m_r = oracle_models(spec, rates=(200, 500, 800, 1100, 1400))
    fc = ForecastModel().warmup([float(c) for c in trace.counts[:300]])
    sim = Simulator(spec, trace, initial_ci, seed=seed)
    return control_loop(sim, m_l, m_r, fc, qos, GRID, LoopConfig())


def test_static_low_workload_never_reconfigures(spec):
    records, run = _loop(WorkloadTrace(0, (400,) * 3600), spec, 60)
    assert {r["kind"] for r in records} == {NO_VIOLATION}
    assert len(records) == 60
    assert not run.events_of("Reconfigured")


@pytest.fixture(scope="module")
def rising():
    # costly checkpoints and a tight latency bound, so both constraints bind
    spec = PipelineSpec(capacity_mu=2000.0, checkpoint_pause=1000.0)
    trace = WorkloadTrace(0, tuple(int(x) for x in np.linspace(300, 1450, 4 * 3600)))
    return _loop(trace, spec, 120, qos=QoSConstraints(500.0, 240.0))


def test_rising_rate_lowers_the_interval(rising):
    records, run = rising
    chosen = [r["new_ci"] for r in records if r["kind"] == RECONFIGURE]
    assert len(chosen) >= 2
    assert all(b < a for a, b in zip(chosen, chosen[1:]))
    assert run.active_ci[-1] < run.active_ci[0]


def test_reconfigurations_strictly_improve(rising):
    records, _ = rising
    for r in records:
        if r["kind"] == RECONFIGURE:
            cur = r["inputs"]["current_objective"]
            assert r["inputs"]["selection"]["objective"] < (math.inf if cur is None else cur)
            assert r["q_r"] < 1 and r["q_l_star"] < 1


def test_decision_log_replays_bit_for_bit(rising, tmp_path):
    from ckpt_tuner import io

    records, _ = rising
    io.write_jsonl(tmp_path / "d.jsonl", records)
    for r in io.read_jsonl(tmp_path / "d.jsonl"):
        d = replay_decision(r)
        assert d.kind == r["kind"] and d.new_ci == r["new_ci"]
        assert d.forecast_drop == r["forecast_drop"]
        for k in ("q_r", "q_l_star"):
            assert (r[k] is None and math.isnan(getattr(d, k))) or getattr(d, k) == r[k]


def test_log_records_have_the_documented_fields(rising):
    records, _ = rising
    assert {"t", "kind", "new_ci", "q_r", "q_l_star", "forecast_drop", "tr_avg"} <= set(records[0])
    json.dumps(records, allow_nan=False)


def test_loop_ends_with_the_simulation(spec):
    records, run = _loop(WorkloadTrace(0, (400,) * 650), spec, 60)
    assert len(run.t) == 650 and records[-1]["t"] == 650
