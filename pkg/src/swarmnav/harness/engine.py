"""The rollout engine: sense, coordinate, control, step, audit."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .. import graphops
from ..controller import BarrierSpec, LocalObservation, QpDegenerateError, agent_policy
from ..coordinator import CoordinatorState, deadlock_predicate, lifecycle_step
from ..planners import AstarPlanner, ModelPlanner, PlannerError, RandomPlanner
from ..planners.astar import AstarParams
from ..planners.prompts import PromptConfig
from ..planners.transport import LiveTransport, RecordingTransport, ReplayTransport
from ..seeding import seed_parts
from ..world import WorldState, scan_all, step, world_to_env_dict
from ..worldgen import generate_maze, generate_room
from .config import RolloutConfig
from .metrics import RolloutMetrics, compute_metrics


@dataclass
class StepRecord:
    """State snapshot at step t plus the controls chosen there (None on the
    terminal record)."""

    t: int
    positions: list
    controls: Optional[list]
    active_goals: Optional[list]
    min_pair_dist: Optional[float]
    min_clearance: Optional[float]
    lambda2: Optional[float]
    deadlock: bool
    in_hold: bool
    slack_total: float
    qp_slack_count: int
    barrier_violations: int


@dataclass
class TrajectoryLog:
    config: dict
    env: dict
    steps: list = field(default_factory=list)
    interventions: list = field(default_factory=list)
    detections: list = field(default_factory=list)
    status: str = "ok"
    failure: str = ""


def build_world(config: RolloutConfig) -> WorldState:
    env = config.env
    if env.kind == "room":
        return generate_room(env.seed, env.n_agents, size=env.size or 8.0,
                             r=env.r, R=env.R, u_max=env.u_max, dt=env.dt)
    if env.kind == "maze":
        return generate_maze(env.seed, env.n_agents, env.n_obstacles,
                             size=env.size, r=env.r, R=env.R,
                             u_max=env.u_max, dt=env.dt)
    raise ValueError(f"unknown environment kind: {env.kind}")


def make_planner(config: RolloutConfig):
    pc = config.planner
    if pc.choice == "none":
        return None
    if pc.choice == "astar":
        return AstarPlanner(AstarParams(waypoint_count=pc.waypoint_count))
    if pc.choice == "random":
        return RandomPlanner(seed=seed_parts("random-planner", config.env.seed)[0],
                             waypoint_count=pc.waypoint_count)
    if pc.choice == "model":
        if pc.transport == "live":
            transport = LiveTransport(endpoint=pc.endpoint, model=pc.model,
                                      key_env=pc.key_env,
                                      temperature=pc.temperature)
        elif pc.transport == "replay":
            transport = ReplayTransport(store_dir=pc.replay_dir)
        elif pc.transport == "record":
            transport = RecordingTransport(
                inner=LiveTransport(endpoint=pc.endpoint, model=pc.model,
                                    key_env=pc.key_env,
                                    temperature=pc.temperature),
                store_dir=pc.replay_dir)
        else:
            raise ValueError(f"unknown transport: {pc.transport}")
        return ModelPlanner(transport=transport, model=pc.model, mode=pc.mode,
                            most_recent=pc.most_recent,
                            prompt_config=PromptConfig(
                                waypoint_count=pc.waypoint_count))
    raise ValueError(f"unknown planner choice: {pc.choice}")


class _Lambda2Cache:
    """Reuse the Fiedler value while the edge set is unchanged."""

    def __init__(self):
        self._key: Optional[bytes] = None
        self._value: Optional[float] = None

    def get(self, a: np.ndarray) -> float:
        key = np.packbits(a.astype(bool)).tobytes()
        if key != self._key:
            self._key = key
            self._value = graphops.lambda2(graphops.laplacian(a))
        return self._value


def _intervention_row(record, world) -> dict:
    q = record.query
    return {
        "trigger_step": record.trigger_step,
        "leader": record.command.leader,
        "waypoints": record.command.waypoints.tolist(),
        "hold_steps": record.hold_steps,
        "planner": q.planner,
        "latency_s": q.latency_s,
        "input_tokens": q.input_tokens,
        "output_tokens": q.output_tokens,
        "tokens_estimated": q.tokens_estimated,
        "model_name": q.model_name,
        "fallback": record.fallback,
        "note": q.note,
        "image_bytes": q.image_bytes,
        "prompt_chars": len(q.prompt_text),
    }


def _audit(world, scans, a, cache) -> tuple[Optional[float], Optional[float], float]:
    if world.n_agents > 1:
        diff = world.positions[:, None, :] - world.positions[None, :, :]
        dist = np.linalg.norm(diff, axis=-1)
        dist += np.eye(world.n_agents) * 1e9
        min_pair = float(dist.min())
    else:
        min_pair = None
    clear = min((s.min_clearance() for s in scans), default=np.inf)
    min_clear = float(clear) if np.isfinite(clear) else None
    lam = cache.get(a) if world.n_agents > 1 else np.inf
    return min_pair, min_clear, float(lam)


def rollout(config: RolloutConfig,
            world: Optional[WorldState] = None) -> tuple[TrajectoryLog, RolloutMetrics]:
    """Run one episode: per step, sense and accumulate obstacle points, run
    the coordinator lifecycle, filter per-agent controls through the safety
    QP, and advance the world; exit early once every agent is at its goal."""
    if world is None:
        world = build_world(config)
    planner = make_planner(config)
    ctrl = config.controller
    spec: BarrierSpec = ctrl.barrier_spec(config.env)
    leader_spec = ctrl.barrier_spec(config.env, gamma=ctrl.leader_gamma)
    follower_spec = ctrl.barrier_spec(config.env, gamma=1.0 - ctrl.leader_gamma)
    coord_config = config.coordination.coordinator_config(config.env.seed)
    n = world.n_agents

    a0 = graphops.adjacency(world.positions, world.R)
    coord = CoordinatorState(desired_adjacency=a0,
                             fallback_seed=seed_parts("fallback", config.env.seed)[0])
    log = TrajectoryLog(config=config.to_dict(), env=world_to_env_dict(world))
    cache = _Lambda2Cache()

    try:
        for _ in range(config.max_steps):
            scans = scan_all(world, config.n_rays)
            hits = [s.hit_points_abs() for s in scans if s.valid.any()]
            if hits:
                world = world.with_observations(np.vstack(hits))

            a = graphops.adjacency(world.positions, world.R)
            min_pair, min_clear, lam = _audit(world, scans, a, cache)
            stuck = deadlock_predicate(world, coord_config.deadlock)

            active_goals, new_record = lifecycle_step(world, coord_config,
                                                      planner, coord)
            if new_record is not None:
                log.interventions.append(_intervention_row(new_record, world))
            in_hold = coord.record is not None and coord.record.active_at(world.t)

            controls = np.zeros((n, 2))
            slack_total = 0.0
            slack_count = 0
            violations = 0
            desired = coord.desired_adjacency
            if in_hold:
                asg = coord.record.assignment
                leaders = {asg.main_leader, *asg.sub_leaders}
            else:
                leaders = None
            for i in range(n):
                mask = (a[i] > 0) | (desired[i] > 0)
                ids = np.nonzero(mask)[0]
                obs = LocalObservation(
                    self_id=i,
                    position=world.positions[i],
                    active_goal=active_goals[i],
                    neighbor_ids=ids,
                    neighbor_positions=world.positions[ids],
                    desired_edge_ids=np.nonzero(desired[i] > 0)[0],
                    scan=scans[i],
                )
                if leaders is None:
                    agent_spec = spec
                else:
                    agent_spec = leader_spec if i in leaders else follower_spec
                u, diag = agent_policy(obs, agent_spec)
                controls[i] = u
                slack_total += diag["slack"]
                slack_count += 1 if diag["status"] == "slack" else 0
                violations += diag["violations"]

            log.steps.append(StepRecord(
                t=world.t, positions=world.positions.tolist(),
                controls=controls.tolist(),
                active_goals=active_goals.tolist(),
                min_pair_dist=min_pair, min_clearance=min_clear,
                lambda2=lam, deadlock=stuck, in_hold=in_hold,
                slack_total=slack_total, qp_slack_count=slack_count,
                barrier_violations=violations))

            world = step(world, controls)
            if bool((world.goal_distances() < config.goal_radius).all()):
                break
    except (QpDegenerateError, PlannerError) as exc:
        log.status = "aborted"
        log.failure = f"{type(exc).__name__}: {exc}"

    # Terminal snapshot (no controls chosen here).
    scans = scan_all(world, config.n_rays)
    a = graphops.adjacency(world.positions, world.R)
    min_pair, min_clear, lam = _audit(world, scans, a, cache)
    log.steps.append(StepRecord(
        t=world.t, positions=world.positions.tolist(), controls=None,
        active_goals=None, min_pair_dist=min_pair, min_clearance=min_clear,
        lambda2=lam, deadlock=deadlock_predicate(world, coord_config.deadlock),
        in_hold=False, slack_total=0.0, qp_slack_count=0,
        barrier_violations=0))
    log.detections = list(coord.detection_steps)

    metrics = compute_metrics(log, config.goal_radius)
    return log, metrics
