import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckpt_tuner import io
from ckpt_tuner.domain import (
    ConfigGrid,
    FailurePlan,
    FailurePoint,
    InvalidCell,
    MetricsSample,
    ProfilingMatrix,
    QoSConstraints,
    WorkloadTrace,
    validate,
    validate_series,
)
from ckpt_tuner.errors import ParameterError


def test_grid_10_120_5_is_valid():
    g = ConfigGrid.from_range(10, 120, 5)
    assert g.values == (10, 37.5, 65, 92.5, 120)
    assert validate(g) == []
    assert ConfigGrid.parse("10:120:5") == g


def test_plan_with_one_point_violates_m():
    plan = FailurePlan((FailurePoint(5, 100.0),))
    assert any("m ≥ 2" in v for v in validate(plan))


def test_trace_with_negative_count_is_reported():
    problems = validate(WorkloadTrace(0, (1, -1, 3)))
    assert problems == ["counts[1]: count ≥ 0"]


def test_plan_outside_trace_and_rate_range():
    trace = WorkloadTrace(100, (5, 6, 7, 8))
    plan = FailurePlan((FailurePoint(100, 5.0), FailurePoint(200, 50.0)))
    problems = validate(plan, trace=trace, smoothed=[5, 8])
    assert "points[1].timestamp: within trace range" in problems
    assert "points[1].rate: within smoothed workload range" in problems


def test_bad_grid_and_constraints():
    assert validate(ConfigGrid(10, 5, 2, (10, 5)))
    assert validate(ConfigGrid(10, 30, 3, (10, 15, 30))) == ["values: consecutive differences equal"]
    assert validate(QoSConstraints(0, 240)) == ["l_const: l_const > 0"]


def test_series_must_be_increasing():
    s = [MetricsSample(0, 1, 0, 1), MetricsSample(0, 1, 0, 1), MetricsSample(1, -1, 0, 1)]
    assert validate_series(s) == ["[1].t: t monotonically increasing", "[2].input_throughput: input_throughput ≥ 0"]


def test_matrix_validation():
    grid = ConfigGrid.from_range(10, 20, 2)
    plan = FailurePlan((FailurePoint(1, 1.0), FailurePoint(2, 2.0)))
    ok = ProfilingMatrix(((1.0, 2.0), (3.0, None)), ((1.0, 2.0), (3.0, 4.0)), grid, plan)
    assert validate(ok) == []
    bad = ProfilingMatrix(((1.0, math.inf), (3.0, 1.0)), ((1.0,), (3.0, 4.0)), grid, plan)
    assert validate(bad) == ["latencies[0][1]: finite and ≥ 0", "recoveries: dimensions (2, 2)"]


@settings(max_examples=200)
@given(
    ci_min=st.floats(0.1, 500, allow_nan=False),
    width=st.floats(0.1, 5000, allow_nan=False),
    z=st.integers(2, 60),
)
def test_grid_from_range_is_always_equidistant(ci_min, width, z):
    g = ConfigGrid.from_range(ci_min, ci_min + width, z)
    assert validate(g) == []


def test_grid_parse_rejects_garbage():
    with pytest.raises(ParameterError):
        ConfigGrid.parse("10:120")


# -- serialization round-trips ---------------------------------------------


def test_trace_csv_round_trip(tmp_path):
    trace = WorkloadTrace(50, (0, 3, 9, 2))
    io.write_trace_csv(tmp_path / "t.csv", trace)
    assert (tmp_path / "t.csv").read_text().splitlines()[0] == "timestamp,count"
    assert io.read_trace_csv(tmp_path / "t.csv") == trace


def test_trace_csv_rejects_gaps(tmp_path):
    (tmp_path / "t.csv").write_text("timestamp,count\n0,1\n2,3\n")
    with pytest.raises(ParameterError):
        io.read_trace_csv(tmp_path / "t.csv")


def test_metrics_csv_round_trip(tmp_path):
    samples = [MetricsSample(0.0, 10.5, 0.0, 200.25), MetricsSample(1.0, 11.0, 3.0, 201.5)]
    io.write_metrics_csv(tmp_path / "m.csv", samples)
    assert io.read_metrics_csv(tmp_path / "m.csv") == samples


@pytest.mark.parametrize(
    "value",
    [
        WorkloadTrace(0, (1, 2, 3)),
        FailurePlan((FailurePoint(3, 10.5), FailurePoint(9, 20.0))),
        ConfigGrid.from_range(10, 120, 5),
        QoSConstraints(1000.0, 240.0),
        MetricsSample(1.0, 2.0, 3.0, 4.0),
        ProfilingMatrix(
            ((1.0, None),),
            ((60.0, 70.5),),
            ConfigGrid.from_range(10, 20, 2),
            FailurePlan((FailurePoint(3, 10.5), FailurePoint(9, 20.0))),
            (InvalidCell(0, 1, "detection miss"),),
        ),
    ],
    ids=lambda v: type(v).__name__,
)
def test_json_round_trip(tmp_path, value):
    path = tmp_path / "v.json"
    io.write_json(path, value)
    assert io.read_json(path, type(value)) == value


def test_matrix_arrays_and_samples():
    grid = ConfigGrid.from_range(10, 20, 2)
    plan = FailurePlan((FailurePoint(3, 100.0), FailurePoint(9, 200.0)))
    pm = ProfilingMatrix(((1.0, None), (3.0, 4.0)), ((5.0, 6.0), (7.0, 8.0)), grid, plan)
    assert np.isnan(pm.latency_array()[0, 1])
    assert pm.samples("latency") == [(10.0, 100.0, 1.0), (10.0, 200.0, 3.0), (20.0, 200.0, 4.0)]
