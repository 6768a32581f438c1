import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ckpt_tuner.domain import WorkloadTrace, validate
from ckpt_tuner.errors import DegenerateWorkloadError, ParameterError
from ckpt_tuner.workload import extract_failure_points, generate_trace, phase1, smooth


def test_constant_generator():
    t = generate_trace("constant", 100, 1000, 0, 7)
    assert t.duration_k == 100 and set(t.counts) == {1000}


def test_sinusoidal_bounds_and_determinism():
    a = generate_trace("sinusoidal", 3600, 1000, 500, 7)
    b = generate_trace("sinusoidal", 3600, 1000, 500, 7)
    assert min(a.counts) >= 500 and max(a.counts) <= 1500
    assert a == b
    assert a != generate_trace("sinusoidal", 3600, 1000, 500, 8)


@pytest.mark.parametrize("kind", ["diurnal", "random-walk"])
def test_other_kinds_are_valid_traces(kind):
    t = generate_trace(kind, 5000, 800, 300, 1)
    assert validate(t) == []
    if kind == "diurnal":
        assert 500 <= min(t.counts) and max(t.counts) <= 1100


@pytest.mark.parametrize(
    "args",
    [("sinusoidal", 1, 10, 5), ("sinusoidal", 100, 10, 50), ("bogus", 100, 10, 5), ("constant", 100, 10, -1)],
)
def test_invalid_generator_parameters(args):
    with pytest.raises(ParameterError):
        generate_trace(*args, seed=0)


def test_smooth_examples():
    const = WorkloadTrace(0, (7,) * 20)
    assert smooth(const, 5).values == (7.0,) * 20
    sw = smooth(WorkloadTrace(0, (0, 10, 0)), 3)
    assert sw.values[1] == pytest.approx(10 / 3)
    # boundary windows truncate: first value averages {0, 10}
    assert sw.values[0] == pytest.approx(5.0)
    raw = generate_trace("random-walk", 300, 500, 200, 2)
    assert smooth(raw, 1).values == tuple(float(c) for c in raw.counts)


@pytest.mark.parametrize("w", [0, 2, 5])
def test_smooth_rejects_bad_windows(w):
    with pytest.raises(ParameterError):
        smooth(WorkloadTrace(0, (1, 2, 3, 4)), w)


def test_smooth_matches_direct_mean():
    t = generate_trace("random-walk", 500, 500, 200, 4)
    sw = smooth(t, 31)
    x = t.as_array()
    for i in (0, 7, 250, 499):
        lo, hi = max(0, i - 15), min(500, i + 16)
        assert sw.values[i] == pytest.approx(x[lo:hi].mean())


@pytest.mark.parametrize("mode", ["rate", "time"])
def test_m2_returns_argmin_and_argmax(mode):
    sw = smooth(generate_trace("sinusoidal", 3600, 1000, 500, 3), 61)
    w = sw.as_array()
    plan = extract_failure_points(sw, 2, mode)
    assert sorted(plan.timestamps) == sorted([int(np.argmin(w)), int(np.argmax(w))])
    assert min(plan.rates) == w.min() and max(plan.rates) == w.max()


def brute_force_nearest(w, targets):
    used, out = set(), []
    for target in targets:
        best = None
        for i, v in enumerate(w):
            if i in used:
                continue
            if best is None or abs(v - target) < abs(w[best] - target):
                best = i
        used.add(best)
        out.append(best)
    return sorted(out)


def test_rate_mode_matches_brute_force_scan():
    sw = smooth(generate_trace("sinusoidal", 3600, 1000, 500, 7, noise=0.0), 61)
    w = sw.as_array()
    plan = extract_failure_points(sw, 5, "rate")
    assert plan.timestamps == brute_force_nearest(w, np.linspace(w.min(), w.max(), 5))
    assert sorted(plan.rates) == pytest.approx([500, 750, 1000, 1250, 1500], abs=15)


def test_time_mode_spacing_is_floored_h():
    # one full period: argmin after argmax, so the walk runs backwards in time
    sw = smooth(generate_trace("sinusoidal", 3600, 1000, 500, 5, period=3600, noise=0.0), 61)
    w = sw.as_array()
    i_min, i_max = int(np.argmin(w)), int(np.argmax(w))
    m = 7
    plan = extract_failure_points(sw, m, "time")
    h = (i_max - i_min) // (m - 1) if i_max > i_min else -((i_min - i_max) // (m - 1))
    expected = sorted([i_min + n * h for n in range(m - 1)] + [i_max])
    assert plan.timestamps == expected
    assert plan.rates == [w[i] for i in expected]


def test_constant_workload_is_degenerate_for_rate_mode():
    sw = smooth(WorkloadTrace(0, (100,) * 200), 5)
    with pytest.raises(DegenerateWorkloadError):
        extract_failure_points(sw, 3)
    assert extract_failure_points(sw, 2).m == 2


def test_twelve_points_cover_the_rate_range():
    trace = generate_trace("diurnal", 21600, 1000, 400, 1)
    sw, plan = phase1(trace, 12)
    w = sw.as_array()
    assert plan.m == 12
    assert plan.timestamps == sorted(set(plan.timestamps))
    assert min(plan.rates) == w.min() and max(plan.rates) == w.max()
    assert validate(plan, trace=trace, smoothed=w) == []


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(2, 10), period=st.integers(900, 3600))
def test_rate_spacing_property_on_sinusoids(seed, m, period):
    sw = smooth(generate_trace("sinusoidal", 3600, 1000, 500, seed, period=period), 61)
    w = sw.as_array()
    plan = extract_failure_points(sw, m, "rate")
    step = (w.max() - w.min()) / (m - 1)
    rates = sorted(plan.rates)
    # a sinusoid hits every level, so each pick sits within one second's change of its target
    tol = np.max(np.abs(np.diff(w)))
    for k, r in enumerate(rates):
        assert abs(r - (w.min() + k * step)) <= tol + 1e-9
    assert min(rates) == w.min() and max(rates) == w.max()


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), m=st.integers(2, 12))
def test_time_spacing_property(seed, m):
    sw = smooth(generate_trace("random-walk", 2000, 1000, 500, seed), 61)
    w = sw.as_array()
    i_min, i_max = int(np.argmin(w)), int(np.argmax(w))
    if abs(i_max - i_min) < m - 1:
        return
    plan = extract_failure_points(sw, m, "time")
    h = abs(i_max - i_min) // (m - 1)
    ts = plan.timestamps if i_max > i_min else plan.timestamps[::-1]
    gaps = np.abs(np.diff(ts))
    assert all(g == h for g in gaps[:-1])
    assert h <= gaps[-1] < h + (m - 1)
    assert min(plan.rates) == w.min() and max(plan.rates) == w.max()
