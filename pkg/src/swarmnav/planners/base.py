"""Planner output contract, query logging, and the random baseline."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..seeding import seed_parts
from ..world import WorldState

# Upper bound on accepted waypoint-list length; longer lists are truncated.
MAX_WAYPOINTS = 10


class PlannerError(RuntimeError):
    """A planner could not produce a command (transport or parse failure)."""


class ResponseParseError(PlannerError):
    """Model response did not contain a usable command."""


@dataclass
class PlannerCommand:
    """Leader id plus ordered waypoints in workspace coordinates."""

    leader: int
    waypoints: np.ndarray  # (P, 2)

    def __post_init__(self):
        self.leader = int(self.leader)
        self.waypoints = np.asarray(self.waypoints, dtype=float).reshape(-1, 2)


@dataclass
class PlannerQueryLog:
    """Record of one planner call: what was sent, what came back, what it cost."""

    planner: str
    latency_s: float
    input_tokens: int = 0
    output_tokens: int = 0
    model_name: str = ""
    prompt_text: str = ""
    raw_response: str = ""
    image_bytes: int = 0
    tokens_estimated: bool = False
    note: str = ""


def validate_command(command: PlannerCommand, n_agents: int,
                     bounds) -> PlannerCommand:
    """Clamp a parsed command onto the world: leader in range, waypoints
    inside bounds, list length capped. Raises PlannerError when the leader id
    is unusable."""
    if not 0 <= command.leader < n_agents:
        raise PlannerError(f"leader {command.leader} outside [0, {n_agents})")
    wps = command.waypoints[:MAX_WAYPOINTS]
    if len(wps):
        wps = bounds.clip(wps)
    return PlannerCommand(leader=command.leader, waypoints=wps)


def random_plan(world: WorldState, seed: int,
                waypoint_count: int = 3) -> PlannerCommand:
    """Uniform baseline: random leader, waypoints uniform over the workspace."""
    rng = np.random.default_rng(seed_parts(seed))
    leader = int(rng.integers(world.n_agents))
    lo = np.array([world.bounds.xmin, world.bounds.ymin])
    hi = np.array([world.bounds.xmax, world.bounds.ymax])
    wps = rng.uniform(lo, hi, size=(waypoint_count, 2))
    return PlannerCommand(leader=leader, waypoints=wps)


@dataclass
class RandomPlanner:
    """Seeded random baseline planner; each call advances a draw counter so
    repeated interventions get fresh but reproducible plans."""

    seed: int
    waypoint_count: int = 3
    name: str = "random"
    _calls: int = field(default=0, repr=False)

    def plan(self, world: WorldState):
        start = time.perf_counter()
        command = random_plan(world, seed=(self.seed, self._calls),
                              waypoint_count=self.waypoint_count)
        self._calls += 1
        latency = time.perf_counter() - start
        return command, PlannerQueryLog(planner=self.name, latency_s=latency)
