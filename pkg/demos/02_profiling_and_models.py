"""Profile a simulated job across checkpoint intervals and fit the models.

Run: python3 demos/02_profiling_and_models.py
"""

import numpy as np

from ckpt_tuner import ConfigGrid, Margins, PipelineSpec, fit, generate_trace, oracle_recovery_time, phase1, predict, run_profiling

trace = generate_trace("diurnal", 10800, base_rate=1000, amplitude=400, seed=3)
_, plan = phase1(trace, 6, "rate", 61)
grid = ConfigGrid.parse("10:120:5")
spec = PipelineSpec(capacity_mu=2250, checkpoint_pause=2000)

# One isolated deployment per (failure point, interval); failures land just
# before a checkpoint would complete, the worst case for reprocessing.
matrix = run_profiling(trace, plan, grid, spec, Margins(300, 900), seed=0, workers=4)
print("intervals:", grid.values)
for point, lat, rec in zip(plan.points, matrix.latencies, matrix.recoveries):
    rec_s = " ".join("   -  " if r is None else f"{r:6.1f}" for r in rec)
    print(f"rate {point.rate:7.1f}  recovery [{rec_s}]  latency {lat[0]:.0f}..{lat[-1]:.0f} ms")
print("invalid cells:", len(matrix.invalid))

# Recovery measured by the detector against the closed-form queueing estimate.
# The estimate ignores capacity lost to checkpoint pauses, which matters at short intervals.
point = plan.points[len(plan.points) // 2]
i = plan.points.index(point)
for j, ci in enumerate(grid.values):
    measured = matrix.recoveries[i][j]
    if measured is not None:
        print(f"ci={ci:5.1f}  detector {measured:6.1f}s  queueing estimate {oracle_recovery_time(spec.resolved(trace), point.rate, ci):6.1f}s")

# Quadratic models of latency and recovery over (interval, rate).
m_l = fit(matrix.samples("latency"), "latency", 2)
m_r = fit(matrix.samples("recovery"), "recovery", 2)
for ci in (10, 60, 120):
    print(f"at 1200 msg/s, ci={ci:3d}s: latency {predict(m_l, ci, 1200):7.1f} ms, recovery {predict(m_r, ci, 1200):6.1f} s")
print("in-sample RMS residual: latency", round(m_l.residual, 1), "ms, recovery", round(m_r.residual, 1), "s")
print("raw recovery coefficients:", {k: float(np.round(v, 5)) for k, v in m_r.raw_coefficients().items()})
