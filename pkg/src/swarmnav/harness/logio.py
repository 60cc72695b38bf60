"""Trajectory log persistence: newline-delimited JSON records."""

from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from .metrics import RolloutMetrics, compute_metrics
from .engine import StepRecord, TrajectoryLog


def write_log(log: TrajectoryLog, metrics: RolloutMetrics, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        fh.write(json.dumps({"type": "header", "config": log.config,
                             "env": log.env}) + "\n")
        for rec in log.steps:
            row = {"type": "step"}
            row.update(asdict(rec))
            fh.write(json.dumps(row) + "\n")
        for iv in log.interventions:
            row = {"type": "intervention"}
            row.update(iv)
            fh.write(json.dumps(row) + "\n")
        fh.write(json.dumps({"type": "footer", "detections": log.detections,
                             "status": log.status, "failure": log.failure,
                             "metrics": metrics.to_dict()}) + "\n")
    return path


def read_log(path) -> tuple[TrajectoryLog, RolloutMetrics]:
    log = None
    metrics = None
    with Path(path).open() as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            kind = row.pop("type")
            if kind == "header":
                log = TrajectoryLog(config=row["config"], env=row["env"])
            elif kind == "step":
                log.steps.append(StepRecord(**row))
            elif kind == "intervention":
                log.interventions.append(row)
            elif kind == "footer":
                log.detections = row["detections"]
                log.status = row["status"]
                log.failure = row["failure"]
                metrics = RolloutMetrics.from_dict(row["metrics"])
    if log is None:
        raise ValueError(f"no header record in {path}")
    return log, metrics


def replay_verify(path) -> tuple[bool, RolloutMetrics, RolloutMetrics]:
    """Recompute metrics from a persisted log and compare with its footer."""
    log, stored = read_log(path)
    recomputed = compute_metrics(log)
    return recomputed == stored, recomputed, stored
