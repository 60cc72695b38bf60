"""Deadlock detection, leader-follower assignment, and intervention lifecycle.

A deadlock is declared when the windowed mean speed of the team drops below a
threshold while the mean distance to goals stays large. Each detection
triggers one high-level planner call whose command (leader + waypoints) is
held for a fixed number of steps; during the hold the team runs as a
leader-follower forest in which every follower's temporary goal is its
assigned leader's live position.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import graphops
from .planners import PlannerCommand, PlannerError, PlannerQueryLog, random_plan
from .world import WorldState


@dataclass
class DeadlockParams:
    """Thresholds for declaring a deadlock and the intervention hold length."""

    speed_threshold: float = 0.2     # mean speed below this ...
    distance_threshold: float = 0.4  # ... while mean goal distance above this
    hold_steps: int = 100
    window: int = 10                 # steps averaged for the speed estimate

    def __post_init__(self):
        if self.speed_threshold <= 0 or self.distance_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.hold_steps < 1:
            raise ValueError("hold_steps must be >= 1")


def deadlock_predicate(world: WorldState, params: DeadlockParams) -> bool:
    """Centralized deadlock test on the current state (False until the
    position history covers the averaging window)."""
    speeds = world.windowed_speeds(params.window)
    if speeds is None:
        return False
    return (
        float(speeds.mean()) < params.speed_threshold
        and float(world.goal_distances().mean()) > params.distance_threshold
    )


def detect_deadlock(world: WorldState, params: DeadlockParams,
                    mode: str = "centralized") -> bool:
    """Deadlock test; in consensus mode both team averages are computed by
    distributed averaging over the communication graph and agent 0's
    estimates are used."""
    if mode == "centralized":
        return deadlock_predicate(world, params)
    if mode != "consensus":
        raise ValueError(f"unknown detection mode: {mode}")
    speeds = world.windowed_speeds(params.window)
    if speeds is None:
        return False
    a = graphops.adjacency(world.positions, world.R)
    speed_est, _ = graphops.consensus_average(speeds, a)
    dist_est, _ = graphops.consensus_average(world.goal_distances(), a)
    return (
        float(speed_est[0]) < params.speed_threshold
        and float(dist_est[0]) > params.distance_threshold
    )


@dataclass
class LeaderAssignment:
    """Leader-follower forest rooted at the main leader.

    ``follow_map[i]`` is the agent i follows (None for the main leader).
    ``near_goal`` marks agents that were within d_min of their own goal at
    assignment time; their temporary goal is their own goal.
    """

    main_leader: int
    sub_leaders: tuple[int, ...]
    follow_map: dict[int, Optional[int]]
    near_goal: frozenset[int]
    d_min: float

    def depth_check(self) -> bool:
        """True when every follow chain terminates at the main leader within
        N hops (forest acyclicity)."""
        n = len(self.follow_map)
        for start in self.follow_map:
            node, hops = start, 0
            while node is not None:
                node = self.follow_map[node]
                hops += 1
                if hops > n:
                    return False
        return True


def _chain_assign(positions: np.ndarray, members: list[int],
                  root: int) -> dict[int, Optional[int]]:
    """Iterative closest-unassigned-to-assigned chaining within a member set.

    At each round the unassigned agent closest to the assigned set joins it
    and follows its nearest assigned agent; ties break toward the lowest
    agent index.
    """
    assigned = [root]
    follow: dict[int, Optional[int]] = {root: None}
    remaining = [m for m in sorted(members) if m != root]
    while remaining:
        best_j, best_d = None, np.inf
        for j in remaining:
            d = min(float(np.linalg.norm(positions[j] - positions[i]))
                    for i in assigned)
            if d < best_d:
                best_j, best_d = j, d
        lead, lead_d = None, np.inf
        for i in sorted(assigned):
            d = float(np.linalg.norm(positions[best_j] - positions[i]))
            if d < lead_d:
                lead, lead_d = i, d
        follow[best_j] = lead
        assigned.append(best_j)
        remaining.remove(best_j)
    return follow


def assign_followers_single(positions: np.ndarray, goals: np.ndarray,
                            leader: int, d_min: float) -> LeaderAssignment:
    """Single-leader chain over the whole team, seeded at ``leader``."""
    n = len(positions)
    if not 0 <= leader < n:
        raise ValueError(f"leader {leader} out of range")
    follow = _chain_assign(positions, list(range(n)), leader)
    near = frozenset(
        i for i in range(n)
        if i != leader and float(np.linalg.norm(positions[i] - goals[i])) < d_min
    )
    return LeaderAssignment(main_leader=leader, sub_leaders=(),
                            follow_map=follow, near_goal=near, d_min=d_min)


def assign_multi_leader(positions: np.ndarray, goals: np.ndarray, k: int,
                        d_min: float, multi_threshold: int = 10,
                        seed: int = 0) -> LeaderAssignment:
    """Cluster the team, pick the main leader as the agent closest to its own
    goal, give each cluster a sub-leader that follows the main leader, and
    chain followers within each cluster.

    Small teams (N below ``multi_threshold``) collapse to the single-leader
    chain seeded at the main leader.
    """
    n = len(positions)
    goal_dist = np.linalg.norm(positions - goals, axis=1)
    main_leader = int(goal_dist.argmin())
    if n < multi_threshold:
        return assign_followers_single(positions, goals, main_leader, d_min)

    k = max(1, min(k, n))
    clusters = graphops.kmeans(positions, k, seed)
    main_cluster = int(clusters.labels[main_leader])
    main_members = clusters.members(main_cluster)

    follow: dict[int, Optional[int]] = {}
    sub_leaders = []
    for c in range(clusters.k):
        members = [int(m) for m in clusters.members(c)]
        if not members:
            continue
        if c == main_cluster:
            lead = main_leader
        else:
            best, best_d = None, np.inf
            for i in members:
                d = min(float(np.linalg.norm(positions[i] - positions[j]))
                        for j in main_members)
                if d < best_d:
                    best, best_d = i, d
            lead = best
        sub_leaders.append(lead)
        chain = _chain_assign(positions, members, lead)
        follow.update(chain)
        if lead != main_leader:
            follow[lead] = main_leader
    near = frozenset(
        i for i in range(n)
        if i != main_leader and i not in sub_leaders
        and float(np.linalg.norm(positions[i] - goals[i])) < d_min
    )
    return LeaderAssignment(main_leader=main_leader,
                            sub_leaders=tuple(sub_leaders),
                            follow_map=follow, near_goal=near, d_min=d_min)


@dataclass
class InterventionRecord:
    """One planner call and the hold window it governs."""

    trigger_step: int
    command: PlannerCommand
    assignment: LeaderAssignment
    hold_steps: int
    query: PlannerQueryLog
    fallback: bool = False
    waypoint_index: int = 0

    def active_at(self, t: int) -> bool:
        return self.trigger_step <= t < self.trigger_step + self.hold_steps


def intervention_active_goal(agent: int, record: InterventionRecord,
                             world: WorldState,
                             waypoint_radius: float) -> np.ndarray:
    """Temporary goal for one agent during an active hold.

    The main leader walks the waypoint list (advancing within
    ``waypoint_radius``, then falling back to its own goal); sub-leaders track
    the main leader's live position; followers track their assigned leader's
    live position unless they started the hold near their own goal or have
    since come within d_min of it.
    """
    asg = record.assignment
    pos = world.positions[agent]
    if agent == asg.main_leader:
        wps = record.command.waypoints
        while (record.waypoint_index < len(wps)
               and np.linalg.norm(pos - wps[record.waypoint_index]) < waypoint_radius):
            record.waypoint_index += 1
        if record.waypoint_index < len(wps):
            return wps[record.waypoint_index].copy()
        return world.goals[agent].copy()
    if agent in asg.sub_leaders:
        return world.positions[asg.main_leader].copy()
    own_dist = float(np.linalg.norm(pos - world.goals[agent]))
    if agent in asg.near_goal or own_dist < asg.d_min:
        return world.goals[agent].copy()
    target = asg.follow_map.get(agent)
    if target is None:
        return world.goals[agent].copy()
    return world.positions[target].copy()


@dataclass
class CoordinatorConfig:
    deadlock: DeadlockParams = field(default_factory=DeadlockParams)
    d_min: float = 0.4
    cluster_count: Optional[int] = None   # default: ceil(N / 10)
    multi_leader_threshold: int = 10
    waypoint_radius: float = 0.1
    refresh_desired_tree: bool = True
    detection_mode: str = "centralized"
    kmeans_seed: int = 0


@dataclass
class CoordinatorState:
    """Mutable per-rollout coordinator bookkeeping (single writer)."""

    desired_adjacency: np.ndarray
    record: Optional[InterventionRecord] = None
    records: list[InterventionRecord] = field(default_factory=list)
    detection_steps: list[int] = field(default_factory=list)
    planner_failures: int = 0
    fallback_seed: int = 0


def _plan_with_fallback(planner, world: WorldState,
                        state: CoordinatorState):
    """Query the planner; on failure fall back to a seeded random command."""
    try:
        command, qlog = planner.plan(world)
        return command, qlog, False
    except PlannerError as exc:
        state.planner_failures += 1
        command = random_plan(world, seed=(state.fallback_seed,
                                           state.planner_failures))
        qlog = PlannerQueryLog(planner="random-fallback", latency_s=0.0,
                               note=f"planner failure: {exc}")
        return command, qlog, True


def lifecycle_step(world: WorldState, config: CoordinatorConfig, planner,
                   state: CoordinatorState):
    """One coordinator tick.

    Returns (active_goals, new_record). Outside a hold, a detected deadlock
    triggers a planner call, builds the leader-follower assignment, refreshes
    the desired adjacency to a spanning tree of the current graph, and opens
    a new hold window; inside a hold, temporary goals are served.
    """
    n = world.n_agents
    t = world.t
    new_record = None

    in_hold = state.record is not None and state.record.active_at(t)
    if not in_hold and planner is not None:
        if detect_deadlock(world, config.deadlock, config.detection_mode):
            state.detection_steps.append(t)
            command, qlog, fell_back = _plan_with_fallback(planner, world, state)
            leader = command.leader
            if not 0 <= leader < n:
                leader = int(world.goal_distances().argmin())
            if n < config.multi_leader_threshold:
                assignment = assign_followers_single(
                    world.positions, world.goals, leader, config.d_min)
            else:
                k = config.cluster_count or -(-n // 10)
                assignment = assign_multi_leader(
                    world.positions, world.goals, k, config.d_min,
                    config.multi_leader_threshold, seed=config.kmeans_seed)
            new_record = InterventionRecord(
                trigger_step=t, command=command, assignment=assignment,
                hold_steps=config.deadlock.hold_steps, query=qlog,
                fallback=fell_back)
            state.record = new_record
            state.records.append(new_record)
            if config.refresh_desired_tree:
                a = graphops.adjacency(world.positions, world.R)
                if graphops.is_connected_bfs(a):
                    tree = graphops.spanning_tree(a)
                    state.desired_adjacency = graphops.edges_to_adjacency(tree, n)
            in_hold = True
    elif not in_hold and planner is None:
        # Detection-only mode: log deadlocks, never intervene.
        if detect_deadlock(world, config.deadlock, config.detection_mode):
            state.detection_steps.append(t)

    if in_hold:
        goals = np.stack([
            intervention_active_goal(i, state.record, world,
                                     config.waypoint_radius)
            for i in range(n)
        ])
    else:
        goals = world.goals.copy()
    return goals, new_record
