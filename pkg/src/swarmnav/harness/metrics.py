"""Rollout metrics: a pure function of the trajectory log."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np


@dataclass
class RolloutMetrics:
    reached: list[bool]
    all_reached: bool
    reach_ratio: float
    interventions: int
    latencies: list[float]
    input_tokens: list[int]
    output_tokens: list[int]
    safety_violations: int
    obstacle_violations: int
    connectivity_violations: int
    normalized_distance: float
    deadlock_detections: int
    steps: int
    status: str = "ok"

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RolloutMetrics":
        return cls(**doc)


def compute_metrics(log, goal_radius: float = None) -> RolloutMetrics:
    """Derive metrics from a log's step records and interventions.

    Reached means the final distance to goal is below the goal radius;
    violation counts tally steps breaking the safety, obstacle-clearance, or
    connectivity invariants; distance traveled is normalized by the mean
    initial goal distance.
    """
    if goal_radius is None:
        goal_radius = log.config["goal_radius"]
    steps = log.steps
    if not steps:
        n = len(np.asarray(log.env["starts"]))
        return RolloutMetrics(
            reached=[False] * n, all_reached=False, reach_ratio=0.0,
            interventions=0, latencies=[], input_tokens=[], output_tokens=[],
            safety_violations=0, obstacle_violations=0,
            connectivity_violations=0, normalized_distance=0.0,
            deadlock_detections=len(log.detections), steps=0,
            status=log.status)

    goals = np.asarray(log.env["goals"], dtype=float)
    starts = np.asarray(log.env["starts"], dtype=float)
    r = log.env["params"]["r"]

    final = np.asarray(steps[-1].positions, dtype=float)
    final_dist = np.linalg.norm(final - goals, axis=1)
    reached = [bool(d < goal_radius) for d in final_dist]

    traveled = np.zeros(len(goals))
    prev = np.asarray(steps[0].positions, dtype=float)
    safety = obstacle = connectivity = 0
    for rec in steps:
        pos = np.asarray(rec.positions, dtype=float)
        traveled += np.linalg.norm(pos - prev, axis=1)
        prev = pos
        if rec.min_pair_dist is not None and rec.min_pair_dist < 2 * r - 1e-6:
            safety += 1
        if rec.min_clearance is not None and rec.min_clearance <= r - 1e-6:
            obstacle += 1
        if rec.lambda2 is not None and rec.lambda2 <= 1e-9:
            connectivity += 1

    initial_dist = np.linalg.norm(starts - goals, axis=1)
    mean_initial = float(initial_dist.mean())
    normalized = float(traveled.mean() / mean_initial) if mean_initial > 0 else 0.0

    return RolloutMetrics(
        reached=reached,
        all_reached=all(reached),
        reach_ratio=float(np.mean(reached)),
        interventions=len(log.interventions),
        latencies=[iv["latency_s"] for iv in log.interventions],
        input_tokens=[iv["input_tokens"] for iv in log.interventions],
        output_tokens=[iv["output_tokens"] for iv in log.interventions],
        safety_violations=safety,
        obstacle_violations=obstacle,
        connectivity_violations=connectivity,
        normalized_distance=normalized,
        deadlock_detections=len(log.detections),
        steps=len(steps) - 1,
        status=log.status,
    )
