"""File formats: trace CSV and JSON documents for the other domain types.

JSON is written with sorted keys and a trailing newline so equal inputs give
byte-identical files.
"""

from __future__ import annotations

import csv
import dataclasses
import json
from pathlib import Path
from typing import Any, Iterable

from .domain import (
    ConfigGrid,
    FailurePlan,
    FailurePoint,
    InvalidCell,
    MetricsSample,
    ProfilingMatrix,
    QoSConstraints,
    WorkloadTrace,
)
from .errors import ParameterError


def to_dict(value) -> dict:
    if isinstance(value, WorkloadTrace):
        return {"start_time": value.start_time, "counts": list(value.counts), "duration_k": value.duration_k}
    if isinstance(value, FailurePlan):
        return {"m": value.m, "points": [dataclasses.asdict(p) for p in value.points]}
    if isinstance(value, ConfigGrid):
        return {"ci_min": value.ci_min, "ci_max": value.ci_max, "z": value.z, "values": list(value.values)}
    if isinstance(value, ProfilingMatrix):
        return {
            "latencies": [list(r) for r in value.latencies],
            "recoveries": [list(r) for r in value.recoveries],
            "grid": to_dict(value.grid),
            "plan": to_dict(value.plan),
            "invalid": [dataclasses.asdict(c) for c in value.invalid],
        }
    if dataclasses.is_dataclass(value):
        return dataclasses.asdict(value)
    if hasattr(value, "to_dict"):
        return value.to_dict()
    raise TypeError(f"cannot serialize {type(value).__name__}")


def from_dict(cls, data: dict):
    try:
        if cls is WorkloadTrace:
            return WorkloadTrace(data["start_time"], data["counts"])
        if cls is FailurePlan:
            plan = FailurePlan(tuple(FailurePoint(int(p["timestamp"]), float(p["rate"])) for p in data["points"]))
            if "m" in data and data["m"] != plan.m:
                raise ParameterError(f"m={data['m']} does not match {plan.m} points")
            return plan
        if cls is ConfigGrid:
            return ConfigGrid(float(data["ci_min"]), float(data["ci_max"]), int(data["z"]), tuple(data["values"]))
        if cls is ProfilingMatrix:
            return ProfilingMatrix(
                latencies=data["latencies"],
                recoveries=data["recoveries"],
                grid=from_dict(ConfigGrid, data["grid"]),
                plan=from_dict(FailurePlan, data["plan"]),
                invalid=tuple(InvalidCell(**c) for c in data.get("invalid", [])),
            )
        if cls in (QoSConstraints, MetricsSample):
            return cls(**{f.name: float(data[f.name]) for f in dataclasses.fields(cls)})
        if hasattr(cls, "from_dict"):
            return cls.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise ParameterError(f"malformed {cls.__name__} document: {exc}") from exc
    raise TypeError(f"cannot deserialize {cls.__name__}")


def dumps(obj: Any) -> str:
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"


def write_json(path, value) -> None:
    payload = value if isinstance(value, (dict, list)) else to_dict(value)
    Path(path).write_text(dumps(payload))


def read_json(path, cls=None):
    data = json.loads(Path(path).read_text())
    return data if cls is None else from_dict(cls, data)


def write_trace_csv(path, trace: WorkloadTrace) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["timestamp", "count"])
        for t, c in zip(range(trace.start_time, trace.end_time), trace.counts):
            w.writerow([t, c])


def read_trace_csv(path) -> WorkloadTrace:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["timestamp", "count"]:
            raise ParameterError(f"{path}: expected header 'timestamp,count', got {header}")
        rows = [(int(t), int(c)) for t, c in reader]
    if not rows:
        raise ParameterError(f"{path}: no rows")
    start = rows[0][0]
    for i, (t, _) in enumerate(rows):
        if t != start + i:
            raise ParameterError(f"{path}: gap or disorder at row {i + 2} (timestamp {t})")
    return WorkloadTrace(start, [c for _, c in rows])


def write_metrics_csv(path, samples: Iterable[MetricsSample]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "input_throughput", "consumer_lag", "avg_latency"])
        for s in samples:
            w.writerow([_num(s.t), _num(s.input_throughput), _num(s.consumer_lag), _num(s.avg_latency)])


def read_metrics_csv(path) -> list[MetricsSample]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        return [MetricsSample(*(float(row[k]) for k in ("t", "input_throughput", "consumer_lag", "avg_latency"))) for row in reader]


def _num(x: float) -> str:
    return repr(round(float(x), 6))


def write_jsonl(path, records: Iterable[dict]) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True, allow_nan=False) + "\n")


def read_jsonl(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
