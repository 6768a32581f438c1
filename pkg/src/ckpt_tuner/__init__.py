"""Checkpoint interval tuning for stream processing jobs under latency and recovery-time bounds.

The workflow has three steps: pick failure points from a recorded workload, profile recovery
and latency across intervals on a simulated job, then fit models and adjust the interval at
runtime.
"""

from .anomaly import AnomalyDetector, AnomalyInterval, DetectorConfig, measure_recovery
from .domain import (
    ConfigGrid,
    FailurePlan,
    FailurePoint,
    MetricsSample,
    ProfilingMatrix,
    QoSConstraints,
    WorkloadTrace,
    validate,
)
from .errors import (
    CkptTunerError,
    DegenerateFitError,
    DegenerateWorkloadError,
    DetectionMissError,
    InsufficientDataError,
    NoCatchUpError,
    ParameterError,
    ProfilingFailedError,
)
from .modeling import ForecastModel, RegressionModel, RescaleState, avg_percent_error, fit, predict
from .optimizer import OptimizerDecision, control_loop, decide, detect_violation, evaluate_objective, select_ci
from .profiler import Margins, run_profiling, schedule_worst_case_injection
from .simulator import PipelineSpec, SimRun, Simulator, oracle_recovery_time, run
from .workload import extract_failure_points, generate_trace, phase1, smooth

__version__ = "0.1.0"
