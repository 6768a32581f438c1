"""Adaptive interval tuning against fixed intervals on an IoT-like workload.

Run: python3 demos/03_adaptive_vs_static.py   (about half a minute with 4 workers)
"""

from collections import Counter
from pathlib import Path

from ckpt_tuner.experiment import load_scenario, reconfiguration_count, report_csv, run_experiment

sc = load_scenario(Path(__file__).resolve().parents[1] / "scenarios" / "iot_analog.json")
print(f"scenario {sc.name}: {sc.workload.duration_k} s, latency bound {sc.constraints.l_const} ms, recovery bound {sc.constraints.r_const} s")

result = run_experiment(sc, workers=4)
print(report_csv(result.summaries), end="")
print("held-out model error:", {k: round(v, 3) for k, v in result.model_errors.items()})

# Decisions per kind, then the interval changes themselves.
print("decisions:", dict(Counter(d["kind"] for d in result.decisions)))
print("reconfigurations:", reconfiguration_count(result.decisions))
for d in result.decisions:
    if d["kind"] == "Reconfigure":
        print(f"  t={d['t']:7.0f}s  {d['inputs']['current_ci']} -> {d['new_ci']}  q_r={d['q_r']:.3f}  q_l*={d['q_l_star']:.3f}")

adaptive = result.summary("adaptive")
print("per-failure recovery (adaptive):", [round(r, 1) for r in adaptive.recoveries])
