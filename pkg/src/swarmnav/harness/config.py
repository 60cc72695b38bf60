"""Rollout configuration: dataclasses, TOML loading, and flag overrides."""

from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..controller import BarrierSpec
from ..coordinator import CoordinatorConfig, DeadlockParams


@dataclass
class EnvConfig:
    kind: str = "room"            # room | maze
    n_agents: int = 5
    n_obstacles: int = 0          # maze only
    seed: int = 0
    size: Optional[float] = None
    r: float = 0.05
    R: float = 0.5
    u_max: float = 1.0
    dt: float = 0.3


@dataclass
class PlannerConfig:
    choice: str = "astar"         # none | astar | random | model
    waypoint_count: int = 3
    mode: str = "text"            # model planner: text | image
    most_recent: Optional[int] = None
    model: str = ""
    transport: str = "replay"     # live | replay | record
    endpoint: str = ""
    key_env: str = "SWARMNAV_API_KEY"
    temperature: float = 0.0
    replay_dir: str = ""


@dataclass
class ControllerConfig:
    alpha_gain: float = 3.0
    alpha_connectivity: float = 6.0
    gamma: float = 0.5
    # During a hold, leaders assert the larger pairwise share and followers
    # the complement, so pressed followers yield instead of freezing the pile.
    leader_gamma: float = 0.8
    nominal_gain: float = 2.0
    kappa: float = 0.01
    connectivity_margin: float = 0.05  # barrier radius = R - margin
    obstacle_top_k: int = 32
    slack_weight: float = 100.0

    def barrier_spec(self, env: EnvConfig, gamma: Optional[float] = None) -> BarrierSpec:
        return BarrierSpec(
            alpha_gain=self.alpha_gain,
            gamma=self.gamma if gamma is None else gamma,
            r=env.r,
            R=env.R,
            u_max=env.u_max,
            nominal_gain=self.nominal_gain,
            kappa=self.kappa,
            connectivity_radius=env.R - self.connectivity_margin,
            alpha_connectivity=self.alpha_connectivity,
            gamma_connectivity=self.gamma,
            obstacle_top_k=self.obstacle_top_k,
            slack_weight=self.slack_weight,
        )


@dataclass
class CoordinationConfig:
    speed_threshold: float = 0.2
    distance_threshold: float = 0.4
    hold_steps: int = 100
    window: int = 10
    d_min: float = 0.4
    cluster_count: Optional[int] = None   # None: ceil(N/10); 1: single leader
    multi_leader_threshold: int = 10
    waypoint_radius: float = 0.1
    refresh_desired_tree: bool = True
    detection_mode: str = "centralized"

    def coordinator_config(self, master_seed: int) -> CoordinatorConfig:
        return CoordinatorConfig(
            deadlock=DeadlockParams(
                speed_threshold=self.speed_threshold,
                distance_threshold=self.distance_threshold,
                hold_steps=self.hold_steps,
                window=self.window,
            ),
            d_min=self.d_min,
            cluster_count=self.cluster_count,
            multi_leader_threshold=self.multi_leader_threshold,
            waypoint_radius=self.waypoint_radius,
            refresh_desired_tree=self.refresh_desired_tree,
            detection_mode=self.detection_mode,
            kmeans_seed=master_seed,
        )


@dataclass
class RolloutConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    coordination: CoordinationConfig = field(default_factory=CoordinationConfig)
    max_steps: int = 3000
    goal_radius: float = 0.1
    n_rays: int = 32
    label: str = ""

    def __post_init__(self):
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if self.planner.choice not in ("none", "astar", "random", "model"):
            raise ValueError(f"unknown planner choice: {self.planner.choice}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "RolloutConfig":
        sections = {
            "env": EnvConfig, "planner": PlannerConfig,
            "controller": ControllerConfig, "coordination": CoordinationConfig,
        }
        kwargs = {}
        for key, value in doc.items():
            if key in sections:
                allowed = {f.name for f in fields(sections[key])}
                unknown = set(value) - allowed
                if unknown:
                    raise ValueError(f"unknown keys in [{key}]: {sorted(unknown)}")
                kwargs[key] = sections[key](**value)
            else:
                kwargs[key] = value
        return cls(**kwargs)


def apply_overrides(config: RolloutConfig, overrides: dict) -> RolloutConfig:
    """Dotted-path overrides, e.g. {"env.seed": 4, "max_steps": 100}."""
    doc = config.to_dict()
    for path, value in overrides.items():
        node = doc
        *head, last = path.split(".")
        for part in head:
            node = node[part]
        if last not in node:
            raise KeyError(f"no config field {path}")
        node[last] = value
    return RolloutConfig.from_dict(doc)


def load_config(path) -> RolloutConfig:
    doc = tomllib.loads(Path(path).read_text())
    doc.pop("batch", None)
    return RolloutConfig.from_dict(doc)


def load_batch_spec(path) -> tuple[RolloutConfig, dict]:
    """Config file plus its optional [batch] table (seeds, parallelism)."""
    raw = tomllib.loads(Path(path).read_text())
    batch = raw.pop("batch", {})
    return RolloutConfig.from_dict(raw), batch
