"""Pick failure points from a recorded workload.

Run: python3 demos/01_failure_points.py
"""

import numpy as np

from ckpt_tuner import extract_failure_points, generate_trace, smooth

# A six-hour diurnal workload, one sample per second.
trace = generate_trace("diurnal", 21600, base_rate=1000, amplitude=400, seed=7)
raw = trace.as_array()
print(f"raw trace: {len(raw)} s, rate {raw.min():.0f}..{raw.max():.0f} msg/s")

# Moving-average smoothing removes per-second noise before picking points.
sw = smooth(trace, 61)
v = sw.as_array()
print(f"smoothed: {v.min():.0f}..{v.max():.0f} msg/s")

# Rate mode spaces points evenly in rate between the minimum and the maximum.
plan = extract_failure_points(sw, 6, "rate")
for p in plan.points:
    print(f"  rate mode  t={p.timestamp:6d}s  rate={p.rate:7.1f}")
print("rate gaps:", np.round(np.diff(sorted(plan.rates)), 1))

# Time mode spaces them evenly in time between the minimum and the maximum.
plan_t = extract_failure_points(sw, 6, "time")
print("time mode timestamps:", plan_t.timestamps)
