"""Batch experiments: independent seeded rollouts plus aggregation."""

from __future__ import annotations

import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

from .config import RolloutConfig, apply_overrides
from .logio import write_log
from .metrics import RolloutMetrics
from .engine import rollout


@dataclass
class BatchResult:
    label: str
    config: RolloutConfig
    metrics: Optional[RolloutMetrics]
    error: str = ""
    log_path: str = ""


def _run_one(args) -> BatchResult:
    config, log_dir, index = args
    label = config.label or f"run{index}"
    try:
        log, metrics = rollout(config)
        log_path = ""
        if log_dir:
            log_path = str(write_log(log, metrics,
                                     Path(log_dir) / f"{label}.ndjson"))
        return BatchResult(label=label, config=config, metrics=metrics,
                           log_path=log_path)
    except Exception as exc:  # noqa: BLE001 - batch keeps going
        return BatchResult(label=label, config=config, metrics=None,
                           error=f"{type(exc).__name__}: {exc}")


def run_batch(configs: list[RolloutConfig], parallelism: int = 1,
              log_dir=None) -> list[BatchResult]:
    """Run every config; failures are recorded, never raised. Results come
    back in config order regardless of scheduling."""
    if not configs:
        raise ValueError("need at least one config")
    jobs = [(cfg, str(log_dir) if log_dir else "", i)
            for i, cfg in enumerate(configs)]
    if parallelism <= 1 or len(configs) == 1:
        return [_run_one(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(_run_one, jobs))


def group_key(result: BatchResult) -> str:
    cfg = result.config
    env = cfg.env
    tag = f"{env.kind}-N{env.n_agents}"
    if env.kind == "maze":
        tag += f"-M{env.n_obstacles}"
    return f"{tag}-{cfg.planner.choice}"


def _mean(xs):
    return float(statistics.fmean(xs)) if xs else 0.0


def _median(xs):
    return float(statistics.median(xs)) if xs else 0.0


SUMMARY_COLUMNS = [
    "group", "runs", "failures", "all_reach_rate", "agent_reach_ratio",
    "interventions_mean", "interventions_median", "latency_mean_s",
    "latency_median_s", "tokens_mean", "normalized_distance_mean",
    "safety_violation_steps", "obstacle_violation_steps",
    "connectivity_violation_steps", "deadlock_detection_rate",
]


def summarize(results: list[BatchResult]) -> list[dict]:
    """One aggregate row per group, in first-seen group order."""
    order: list[str] = []
    buckets: dict[str, list[BatchResult]] = {}
    for res in results:
        key = group_key(res)
        if key not in buckets:
            order.append(key)
            buckets[key] = []
        buckets[key].append(res)

    rows = []
    for key in order:
        group = buckets[key]
        ok = [r.metrics for r in group if r.metrics is not None]
        latencies = [lat for m in ok for lat in m.latencies]
        tokens = [i + o for m in ok
                  for i, o in zip(m.input_tokens, m.output_tokens)]
        rows.append({
            "group": key,
            "runs": len(group),
            "failures": sum(1 for r in group if r.metrics is None),
            "all_reach_rate": _mean([1.0 if m.all_reached else 0.0 for m in ok]),
            "agent_reach_ratio": _mean([m.reach_ratio for m in ok]),
            "interventions_mean": _mean([m.interventions for m in ok]),
            "interventions_median": _median([m.interventions for m in ok]),
            "latency_mean_s": _mean(latencies),
            "latency_median_s": _median(latencies),
            "tokens_mean": _mean(tokens),
            "normalized_distance_mean": _mean([m.normalized_distance for m in ok]),
            "safety_violation_steps": sum(m.safety_violations for m in ok),
            "obstacle_violation_steps": sum(m.obstacle_violations for m in ok),
            "connectivity_violation_steps": sum(
                m.connectivity_violations for m in ok),
            "deadlock_detection_rate": _mean(
                [1.0 if m.deadlock_detections > 0 else 0.0 for m in ok]),
        })
    return rows


def write_summary_csv(rows: list[dict], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [",".join(SUMMARY_COLUMNS)]
    for row in rows:
        cells = []
        for col in SUMMARY_COLUMNS:
            value = row[col]
            cells.append(f"{value:.6f}" if isinstance(value, float) else str(value))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


def desk_suite(base: RolloutConfig, room_seeds: int = 20,
               maze_seeds: int = 20, full_scale: bool = False) -> list[RolloutConfig]:
    """Standard evaluation suite: Room N=5 and Maze N=10 M=30 at desk scale;
    ``full_scale`` appends the large Maze settings."""
    configs = []
    for seed in range(room_seeds):
        configs.append(apply_overrides(base, {
            "env.kind": "room", "env.n_agents": 5, "env.n_obstacles": 0,
            "env.seed": seed, "max_steps": 3000,
            "label": f"room-s{seed}-{base.planner.choice}"}))
    for seed in range(maze_seeds):
        configs.append(apply_overrides(base, {
            "env.kind": "maze", "env.n_agents": 10, "env.n_obstacles": 30,
            "env.seed": seed, "max_steps": 4000,
            "label": f"maze10-s{seed}-{base.planner.choice}"}))
    if full_scale:
        for seed in range(5):
            configs.append(apply_overrides(base, {
                "env.kind": "maze", "env.n_agents": 25, "env.n_obstacles": 100,
                "env.seed": seed, "max_steps": 4000,
                "label": f"maze25-s{seed}-{base.planner.choice}"}))
        for seed in range(3):
            configs.append(apply_overrides(base, {
                "env.kind": "maze", "env.n_agents": 50, "env.n_obstacles": 375,
                "env.seed": seed, "max_steps": 5000,
                "label": f"maze50-s{seed}-{base.planner.choice}"}))
    return configs
