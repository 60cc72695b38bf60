"""Rollout engine, metrics, batch experiments, persistence, and CLI."""

from .config import EnvConfig, PlannerConfig, RolloutConfig, load_config
from .metrics import RolloutMetrics, compute_metrics
from .engine import TrajectoryLog, rollout
from .logio import read_log, write_log
from .batch import BatchResult, desk_suite, run_batch, summarize
from .report import emit_report

__all__ = [
    "EnvConfig", "PlannerConfig", "RolloutConfig", "load_config",
    "RolloutMetrics", "compute_metrics",
    "TrajectoryLog", "rollout",
    "read_log", "write_log",
    "BatchResult", "desk_suite", "run_batch", "summarize",
    "emit_report",
]
