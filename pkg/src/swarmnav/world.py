"""Environment state, obstacle geometry, LiDAR sensing, and agent kinematics.

The world is a value: every operation returns a new ``WorldState`` and never
mutates its inputs. Obstacles are rotated rectangles (an axis-aligned box is
the ``angle = 0`` case), so one slab-test raycaster covers both kinds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import NamedTuple, Optional, Sequence

import numpy as np

# Cap on how many recent position snapshots a world carries; bounds memory
# while staying above any realistic speed-averaging window.
HISTORY_CAP = 128

# Observed hit points closer than this are merged (grid snap).
OBSERVED_MERGE_TOL = 1e-3


class Bounds(NamedTuple):
    """Axis-aligned workspace bounding box."""

    xmin: float
    ymin: float
    xmax: float
    ymax: float

    @property
    def width(self) -> float:
        return self.xmax - self.xmin

    @property
    def height(self) -> float:
        return self.ymax - self.ymin

    def contains(self, p) -> bool:
        return bool(
            self.xmin <= p[0] <= self.xmax and self.ymin <= p[1] <= self.ymax
        )

    def clip(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        lo = np.array([self.xmin, self.ymin])
        hi = np.array([self.xmax, self.ymax])
        return np.clip(pts, lo, hi)


@dataclass
class Obstacle:
    """Rotated rectangle: ``kind`` is "box" (axis-aligned) or "wall" (segment
    with thickness). Geometry is identical; the kind is kept for reporting and
    serialization."""

    center: tuple[float, float]
    length: float
    thickness: float
    angle: float = 0.0
    kind: str = "box"

    def __post_init__(self):
        if self.length <= 0 or self.thickness <= 0:
            raise ValueError(f"obstacle extent must be positive: {self}")

    @classmethod
    def box(cls, center, width: float, height: float) -> "Obstacle":
        return cls(center=(float(center[0]), float(center[1])), length=float(width),
                   thickness=float(height), angle=0.0, kind="box")

    @classmethod
    def wall(cls, center, length: float, angle: float, thickness: float = 0.1) -> "Obstacle":
        return cls(center=(float(center[0]), float(center[1])), length=float(length),
                   thickness=float(thickness), angle=float(angle), kind="wall")

    def corners(self) -> np.ndarray:
        """4x2 array of corner coordinates (ccw in the local frame)."""
        hx, hy = self.length / 2.0, self.thickness / 2.0
        local = np.array([[-hx, -hy], [hx, -hy], [hx, hy], [-hx, hy]])
        c, s = math.cos(self.angle), math.sin(self.angle)
        rot = np.array([[c, -s], [s, c]])
        return local @ rot.T + np.asarray(self.center)

    def contains_points(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Boolean mask of points inside the rectangle inflated by ``margin``."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c, s = math.cos(self.angle), math.sin(self.angle)
        rel = pts - np.asarray(self.center)
        lx = c * rel[:, 0] + s * rel[:, 1]
        ly = -s * rel[:, 0] + c * rel[:, 1]
        return (np.abs(lx) <= self.length / 2.0 + margin) & (
            np.abs(ly) <= self.thickness / 2.0 + margin
        )

    def distance_to_points(self, points: np.ndarray) -> np.ndarray:
        """Euclidean distance from each point to the rectangle (0 inside)."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        c, s = math.cos(self.angle), math.sin(self.angle)
        rel = pts - np.asarray(self.center)
        lx = np.abs(c * rel[:, 0] + s * rel[:, 1]) - self.length / 2.0
        ly = np.abs(-s * rel[:, 0] + c * rel[:, 1]) - self.thickness / 2.0
        dx = np.maximum(lx, 0.0)
        dy = np.maximum(ly, 0.0)
        return np.hypot(dx, dy)


class ObstacleGeometry:
    """Packed obstacle arrays for vectorized ray queries."""

    def __init__(self, obstacles: Sequence[Obstacle]):
        self.obstacles = tuple(obstacles)
        m = len(self.obstacles)
        self.centers = np.zeros((m, 2))
        self.half = np.zeros((m, 2))
        self.cos = np.zeros(m)
        self.sin = np.zeros(m)
        for k, ob in enumerate(self.obstacles):
            self.centers[k] = ob.center
            self.half[k] = (ob.length / 2.0, ob.thickness / 2.0)
            self.cos[k] = math.cos(ob.angle)
            self.sin[k] = math.sin(ob.angle)

    def __len__(self) -> int:
        return len(self.obstacles)

    def ray_distances(self, origin: np.ndarray, directions: np.ndarray,
                      max_range: float) -> np.ndarray:
        """Distance along each unit direction to the nearest obstacle boundary.

        Returns +inf where no boundary lies within ``max_range``. A ray that
        starts inside a rectangle reports the exit crossing.
        """
        if len(self.obstacles) == 0:
            return np.full(len(np.atleast_2d(directions)), np.inf)
        dirs = np.atleast_2d(np.asarray(directions, dtype=float))
        o_rel = np.asarray(origin, dtype=float) - self.centers  # (M,2)
        # Into each rectangle's local frame.
        o_loc = np.stack([
            self.cos * o_rel[:, 0] + self.sin * o_rel[:, 1],
            -self.sin * o_rel[:, 0] + self.cos * o_rel[:, 1],
        ], axis=-1)  # (M,2)
        d_loc = np.stack([
            dirs[:, 0, None] * self.cos + dirs[:, 1, None] * self.sin,
            -dirs[:, 0, None] * self.sin + dirs[:, 1, None] * self.cos,
        ], axis=-1)  # (K,M,2)

        parallel = np.abs(d_loc) < 1e-15
        with np.errstate(divide="ignore", invalid="ignore"):
            t_a = (-self.half - o_loc) / d_loc
            t_b = (self.half - o_loc) / d_loc
        t_lo = np.minimum(t_a, t_b)
        t_hi = np.maximum(t_a, t_b)
        inside_axis = np.abs(o_loc) <= self.half  # (M,2)
        t_lo = np.where(parallel, np.where(inside_axis, -np.inf, np.inf), t_lo)
        t_hi = np.where(parallel, np.where(inside_axis, np.inf, -np.inf), t_hi)

        t_min = np.max(t_lo, axis=-1)  # (K,M)
        t_max = np.min(t_hi, axis=-1)
        t_hit = np.where(t_min >= 0.0, t_min, t_max)
        ok = (t_max >= t_min) & (t_max >= 0.0) & (t_hit >= 0.0) & (t_hit <= max_range)
        dist = np.where(ok, t_hit, np.inf)
        return dist.min(axis=1)


@dataclass
class AgentState:
    """Single agent: index, position, goal, and the control applied last step."""

    id: int
    position: np.ndarray
    goal: np.ndarray
    last_control: np.ndarray


@dataclass
class LidarScan:
    """One sweep of evenly spaced rays for a single agent.

    ``hits`` holds relative hit vectors (row k invalid unless ``valid[k]``);
    ray k points along angle ``2*pi*k / n_rays``.
    """

    owner: int
    origin: np.ndarray
    directions: np.ndarray  # (n_rays, 2) unit vectors
    distances: np.ndarray   # (n_rays,), inf where no hit
    max_range: float

    @property
    def n_rays(self) -> int:
        return len(self.distances)

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.distances)

    @property
    def hits(self) -> np.ndarray:
        """Relative hit vectors for valid rays, shape (n_hits, 2)."""
        mask = self.valid
        return self.directions[mask] * self.distances[mask, None]

    def hit_points_abs(self) -> np.ndarray:
        return self.origin + self.hits

    def min_clearance(self) -> float:
        """Smallest hit distance, +inf when nothing is in range."""
        return float(self.distances.min()) if len(self.distances) else np.inf


class ObservedPoints:
    """Append-only log of absolute obstacle hit points with step timestamps.

    Snapshots share one backing store; a snapshot exposes its first ``n``
    entries. Points are merged on a grid of pitch ``OBSERVED_MERGE_TOL``.
    Extending a stale snapshot copies the store, so values stay immutable.
    """

    def __init__(self):
        self._xy: list[tuple[float, float]] = []
        self._ts: list[int] = []
        self._keys: set[tuple[int, int]] = set()
        self._n = 0

    def __len__(self) -> int:
        return self._n

    def _snapshot(self, n: int) -> "ObservedPoints":
        snap = ObservedPoints.__new__(ObservedPoints)
        snap._xy = self._xy
        snap._ts = self._ts
        snap._keys = self._keys
        snap._n = n
        return snap

    def _fork(self) -> "ObservedPoints":
        fresh = ObservedPoints()
        fresh._xy = list(self._xy[: self._n])
        fresh._ts = list(self._ts[: self._n])
        fresh._keys = {
            (round(x / OBSERVED_MERGE_TOL), round(y / OBSERVED_MERGE_TOL))
            for x, y in fresh._xy
        }
        fresh._n = self._n
        return fresh

    def extended(self, t: int, points: np.ndarray) -> "ObservedPoints":
        """New snapshot with any novel points appended at timestamp ``t``."""
        base = self if self._n == len(self._xy) else self._fork()
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        for x, y in pts:
            key = (round(x / OBSERVED_MERGE_TOL), round(y / OBSERVED_MERGE_TOL))
            if key not in base._keys:
                base._keys.add(key)
                base._xy.append((float(x), float(y)))
                base._ts.append(int(t))
        return base._snapshot(len(base._xy))

    def points(self, most_recent: Optional[int] = None) -> np.ndarray:
        """Absolute points, time-ordered; optionally only the newest ``most_recent``."""
        xy = self._xy[: self._n]
        if most_recent is not None:
            xy = xy[max(0, len(xy) - most_recent):]
        return np.array(xy, dtype=float).reshape(-1, 2)

    def timestamps(self) -> np.ndarray:
        return np.array(self._ts[: self._n], dtype=int)


@dataclass
class WorldState:
    """Full simulation state. Positions/goals are packed (N,2) arrays; the
    ``agents`` property exposes per-agent views."""

    positions: np.ndarray
    goals: np.ndarray
    obstacles: tuple[Obstacle, ...]
    bounds: Bounds
    r: float = 0.05
    R: float = 0.5
    u_max: float = 1.0
    dt: float = 0.3
    t: int = 0
    kind: str = "custom"
    seed: Optional[int] = None
    last_controls: np.ndarray = None
    observed: ObservedPoints = None
    recent_positions: tuple = ()
    geometry: ObstacleGeometry = None

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float).reshape(-1, 2)
        self.goals = np.asarray(self.goals, dtype=float).reshape(-1, 2)
        if self.last_controls is None:
            self.last_controls = np.zeros_like(self.positions)
        if self.observed is None:
            self.observed = ObservedPoints()
        if self.geometry is None:
            self.geometry = ObstacleGeometry(self.obstacles)
        if not self.recent_positions:
            self.recent_positions = (self.positions.copy(),)
        if not (self.R > self.r > 0):
            raise ValueError(f"need R > r > 0, got r={self.r}, R={self.R}")
        if self.dt <= 0:
            raise ValueError("dt must be positive")

    @property
    def n_agents(self) -> int:
        return len(self.positions)

    @property
    def agents(self) -> list[AgentState]:
        return [
            AgentState(i, self.positions[i], self.goals[i], self.last_controls[i])
            for i in range(self.n_agents)
        ]

    def goal_distances(self) -> np.ndarray:
        return np.linalg.norm(self.positions - self.goals, axis=1)

    def windowed_speeds(self, window: int) -> Optional[np.ndarray]:
        """Per-agent mean speed over the last ``window`` steps, or None if the
        history is still shorter than that."""
        hist = self.recent_positions
        if len(hist) < window + 1:
            return None
        segs = [
            np.linalg.norm(hist[-k] - hist[-k - 1], axis=1)
            for k in range(1, window + 1)
        ]
        return np.mean(segs, axis=0) / self.dt

    def with_observations(self, hit_points: np.ndarray) -> "WorldState":
        if len(hit_points) == 0:
            return self
        return replace(self, observed=self.observed.extended(self.t, hit_points))


def raycast(origin, direction, obstacles, max_range: float):
    """Nearest obstacle-boundary intersection along a unit direction.

    Returns the absolute hit point, or None when nothing lies within
    ``max_range``. Total function: never raises on geometric input.
    """
    direction = np.asarray(direction, dtype=float)
    geom = obstacles if isinstance(obstacles, ObstacleGeometry) else ObstacleGeometry(obstacles)
    dist = geom.ray_distances(np.asarray(origin, dtype=float), direction[None, :], max_range)[0]
    if not np.isfinite(dist):
        return None
    return np.asarray(origin, dtype=float) + dist * direction


def ray_directions(n_rays: int) -> np.ndarray:
    angles = 2.0 * np.pi * np.arange(n_rays) / n_rays
    return np.stack([np.cos(angles), np.sin(angles)], axis=1)


def lidar_scan(agent_position, owner: int, obstacles, n_rays: int = 32,
               max_range: float = 0.5) -> LidarScan:
    """Sweep ``n_rays`` evenly spaced rays from an agent position."""
    if n_rays < 4:
        raise ValueError("n_rays must be at least 4")
    dirs = ray_directions(n_rays)
    geom = obstacles if isinstance(obstacles, ObstacleGeometry) else ObstacleGeometry(obstacles)
    origin = np.asarray(agent_position, dtype=float)
    dists = geom.ray_distances(origin, dirs, max_range)
    return LidarScan(owner=owner, origin=origin, directions=dirs,
                     distances=dists, max_range=max_range)


def scan_all(world: WorldState, n_rays: int = 32) -> list[LidarScan]:
    """LiDAR scans for every agent against the world's obstacle set."""
    return [
        lidar_scan(world.positions[i], i, world.geometry, n_rays, world.R)
        for i in range(world.n_agents)
    ]


def step(world: WorldState, controls) -> WorldState:
    """Advance one explicit-Euler step: p += dt * u, t += 1.

    Controls must be finite and respect the per-axis bound |u| <= u_max.
    """
    u = np.asarray(controls, dtype=float).reshape(world.positions.shape)
    if not np.all(np.isfinite(u)):
        raise ValueError("non-finite control input")
    if np.abs(u).max(initial=0.0) > world.u_max + 1e-6:
        raise ValueError(
            f"control exceeds u_max={world.u_max}: max |u| = {np.abs(u).max():.6f}"
        )
    new_positions = world.positions + world.dt * u
    history = (world.recent_positions + (new_positions.copy(),))[-(HISTORY_CAP + 1):]
    return replace(
        world,
        positions=new_positions,
        last_controls=u.copy(),
        t=world.t + 1,
        recent_positions=history,
    )


# --- environment serialization -------------------------------------------

def world_to_env_dict(world: WorldState) -> dict:
    return {
        "kind": world.kind,
        "seed": world.seed,
        "params": {"r": world.r, "R": world.R, "u_max": world.u_max, "dt": world.dt},
        "bounds": list(world.bounds),
        "obstacles": [
            {
                "kind": ob.kind,
                "center": [ob.center[0], ob.center[1]],
                "length": ob.length,
                "thickness": ob.thickness,
                "angle": ob.angle,
            }
            for ob in world.obstacles
        ],
        "starts": world.positions.tolist(),
        "goals": world.goals.tolist(),
    }


def world_from_env_dict(doc: dict) -> WorldState:
    obstacles = tuple(
        Obstacle(
            center=(o["center"][0], o["center"][1]),
            length=o["length"],
            thickness=o["thickness"],
            angle=o["angle"],
            kind=o["kind"],
        )
        for o in doc["obstacles"]
    )
    params = doc["params"]
    return WorldState(
        positions=np.array(doc["starts"], dtype=float),
        goals=np.array(doc["goals"], dtype=float),
        obstacles=obstacles,
        bounds=Bounds(*doc["bounds"]),
        r=params["r"],
        R=params["R"],
        u_max=params["u_max"],
        dt=params["dt"],
        kind=doc["kind"],
        seed=doc["seed"],
    )


def save_env(world: WorldState, path) -> None:
    Path(path).write_text(json.dumps(world_to_env_dict(world), indent=1))


def load_env(path) -> WorldState:
    return world_from_env_dict(json.loads(Path(path).read_text()))
