import numpy as np
import pytest

from ckpt_tuner.modeling import fit
from ckpt_tuner.simulator import PipelineSpec, oracle_recovery_time


@pytest.fixture
def spec():
    return PipelineSpec(capacity_mu=2000.0)


def oracle_samples(spec, rates=(200, 400, 600, 800, 1000), cis=(10, 37.5, 65, 92.5, 120)):
    rows = []
    for tr in rates:
        for ci in cis:
            rows.append((ci, tr, oracle_recovery_time(spec, tr, ci), spec.steady_latency(ci, tr)))
    return rows


def oracle_models(spec, **kw):
    rows = oracle_samples(spec, **kw)
    m_r = fit([(c, t, r) for c, t, r, _ in rows], "recovery")
    m_l = fit([(c, t, l) for c, t, _, l in rows], "latency")
    return m_l, m_r


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda l: int(l.split("criterion ")[1].split(":")[0].split(".")[0])):
            terminalreporter.write_line(line)
