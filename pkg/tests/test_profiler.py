import numpy as np
import pytest

from ckpt_tuner.domain import ConfigGrid, FailurePlan, FailurePoint, validate
from ckpt_tuner.errors import ParameterError, ProfilingFailedError
from ckpt_tuner.anomaly import DetectorConfig
from ckpt_tuner.profiler import Margins, _profile_cell, run_profiling, schedule_worst_case_injection, write_fit_csv
from ckpt_tuner.simulator import replay_window
from ckpt_tuner.simulator import PipelineSpec
from ckpt_tuner.workload import generate_trace, phase1


def test_injection_schedule_examples():
    assert schedule_worst_case_injection(60, 0, 100, 1, 2) == 121
    # exactly at a completion: the next one is chosen
    assert schedule_worst_case_injection(60, 0, 122, 1, 2) == 181
    assert schedule_worst_case_injection(60, 0, 100, 1, 2, relative_to="start") == 119
    assert schedule_worst_case_injection(10, 5, 3, 0.5, 2) == 16.5


def test_injection_limit_reprocesses_a_full_interval():
    ci, dur = 45.0, 2.0
    for eps in (1.0, 0.1, 1e-4):
        t = schedule_worst_case_injection(ci, 0, 1000, eps, dur)
        last_completed_start = t - (t % ci) - (ci if t % ci < dur else 0)
        assert t - last_completed_start == pytest.approx(ci + dur - eps)


def test_injection_rejects_bad_epsilon():
    with pytest.raises(ParameterError):
        schedule_worst_case_injection(10, 0, 5, 10)


@pytest.fixture(scope="module")
def small_setup():
    trace = generate_trace("diurnal", 10800, 1000, 400, 3)
    _, plan = phase1(trace, 6)
    return trace, plan, ConfigGrid.parse("10:120:5")


@pytest.fixture(scope="module")
def matrix(small_setup):
    trace, plan, grid = small_setup
    return run_profiling(trace, plan, grid, PipelineSpec(), seed=1, workers=2)


def test_matrix_shape_and_validity(matrix):
    assert matrix.shape == (6, 5)
    assert matrix.invalid == ()
    assert validate(matrix) == []


def test_recovery_rows_nondecreasing_and_bounded(matrix):
    spec = PipelineSpec()
    rec = matrix.recovery_array()
    assert np.all(np.diff(rec, axis=1) >= 0)
    assert np.all(rec >= spec.detection_timeout + spec.restart_duration)


def test_latency_columns_nonincreasing(matrix):
    col = matrix.latency_array().mean(axis=0)
    assert all(b <= a * 1.05 for a, b in zip(col, col[1:]))


def test_profiling_is_deterministic(small_setup, matrix):
    trace, plan, grid = small_setup
    assert run_profiling(trace, plan, grid, PipelineSpec(), seed=1) == matrix


def test_cells_are_isolated(small_setup, matrix):
    # a cell profiled alone, in any order, equals its slot in the full matrix
    trace, plan, grid = small_setup
    segs = replay_window(trace, plan, 300, 900)
    spec = PipelineSpec().resolved(trace)
    for i, j in [(5, 4), (0, 3), (2, 0)]:
        p = plan.points[i]
        seg = next(s for s in segs if s.start_time <= p.timestamp < s.end_time)
        cell = _profile_cell((i, j, seg, p.timestamp, grid.values[j], spec, Margins(), 1.0, DetectorConfig(), 1, "completion"))
        assert cell.recovery == matrix.recoveries[i][j]
        assert cell.latency == matrix.latencies[i][j]


def test_capacity_must_exceed_plan_rates(small_setup):
    trace, plan, grid = small_setup
    with pytest.raises(ParameterError):
        run_profiling(trace, plan, grid, PipelineSpec(capacity_mu=max(plan.rates)))


def test_too_many_invalid_cells_fails():
    # capacity barely above the peak: the fastest catch-ups outlast the replay window
    trace = generate_trace("diurnal", 7200, 1000, 400, 3)
    _, plan = phase1(trace, 4)
    spec = PipelineSpec(capacity_mu=max(trace.counts) * 1.02)
    with pytest.raises(ProfilingFailedError):
        run_profiling(trace, plan, ConfigGrid.parse("10:120:3"), spec, Margins(300, 400))


def test_fit_csv(tmp_path, matrix):
    write_fit_csv(tmp_path / "fit.csv", matrix)
    lines = (tmp_path / "fit.csv").read_text().splitlines()
    assert lines[0] == "rate,ci,latency,recovery"
    assert len(lines) == 1 + 30
