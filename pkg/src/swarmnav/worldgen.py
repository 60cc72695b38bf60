"""Procedural environment generation: Room and Maze families.

Room: a walled rectangle with a randomly angled converging wall pair (a
funnel pocket) across the start-to-goal diagonal plus a few stray walls, so
straight-line goal seeking always jams while a detour exists. Maze: random
axis-aligned rectangles rejection-sampled around valid start/goal clusters.

Start and goal clusters use the same relative layout (goals are a translated
copy of the starts), which keeps every start-graph edge feasible at the goal
configuration.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import graphops
from .seeding import seed_parts, stream_rng
from .world import Bounds, Obstacle, ObstacleGeometry, WorldState

BOUNDARY_THICKNESS = 0.2


class WorldGenError(RuntimeError):
    """Generation failed after bounded retries; carries the offending seed."""

    def __init__(self, message: str, seed):
        super().__init__(f"{message} (seed={seed})")
        self.seed = seed


def _boundary_walls(bounds: Bounds) -> list[Obstacle]:
    t = BOUNDARY_THICKNESS
    cx = (bounds.xmin + bounds.xmax) / 2.0
    cy = (bounds.ymin + bounds.ymax) / 2.0
    return [
        Obstacle.box((cx, bounds.ymin + t / 2), bounds.width, t),
        Obstacle.box((cx, bounds.ymax - t / 2), bounds.width, t),
        Obstacle.box((bounds.xmin + t / 2, cy), t, bounds.height),
        Obstacle.box((bounds.xmax - t / 2, cy), t, bounds.height),
    ]


def min_obstacle_distance(points: np.ndarray,
                          obstacles: Sequence[Obstacle]) -> float:
    """Smallest distance from any point to any obstacle (inf when empty)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    best = np.inf
    for ob in obstacles:
        best = min(best, float(ob.distance_to_points(pts).min()))
    return best


def validate_start_goal(starts: np.ndarray, goals: np.ndarray,
                        obstacles: Sequence[Obstacle], r: float,
                        R: float) -> list[str]:
    """Independent validity checker: pairwise separation, obstacle clearance,
    and spectral connectivity of both configurations. Returns problems."""
    problems = []
    for name, pts in (("starts", starts), ("goals", goals)):
        pts = np.asarray(pts, dtype=float)
        n = len(pts)
        if n > 1:
            diff = pts[:, None, :] - pts[None, :, :]
            dist = np.linalg.norm(diff, axis=-1) + np.eye(n) * 1e9
            if dist.min() <= 2 * r:
                problems.append(f"{name}: pairwise distance <= 2r")
            lam = graphops.lambda2_of_positions(pts, R)
            if lam <= 1e-9:
                problems.append(f"{name}: graph disconnected (lambda2={lam:.2e})")
        if obstacles and min_obstacle_distance(pts, obstacles) <= r:
            problems.append(f"{name}: obstacle clearance <= r")
    return problems


def _sample_cluster(rng: np.random.Generator, n: int, center: np.ndarray,
                    obstacles: Sequence[Obstacle], bounds: Bounds, r: float,
                    R: float) -> Optional[np.ndarray]:
    """Incrementally grow a connected blob: each new point links to an
    existing one within the communication radius while keeping pairwise
    separation and obstacle clearance."""
    spacing = max(4.4 * r, 0.44 * R)
    link = 0.72 * R
    clear = 2.0 * r
    margin = BOUNDARY_THICKNESS + clear
    lo = np.array([bounds.xmin + margin, bounds.ymin + margin])
    hi = np.array([bounds.xmax - margin, bounds.ymax - margin])

    def ok(p, pts):
        if np.any(p < lo) or np.any(p > hi):
            return False
        if obstacles and min_obstacle_distance(p[None, :], obstacles) <= clear:
            return False
        if pts and min(np.linalg.norm(p - q) for q in pts) < spacing:
            return False
        return True

    for _ in range(40):
        first = center + rng.uniform(-0.2, 0.2, size=2)
        if ok(first, []):
            break
    else:
        return None
    pts = [first]
    for _ in range(n - 1):
        for _ in range(300):
            anchor = pts[int(rng.integers(len(pts)))]
            ang = rng.uniform(0.0, 2.0 * math.pi)
            dist = rng.uniform(spacing, link)
            cand = anchor + dist * np.array([math.cos(ang), math.sin(ang)])
            if ok(cand, pts):
                pts.append(cand)
                break
        else:
            return None
    return np.array(pts)


def sample_connected_start_goal(obstacles: Sequence[Obstacle], n: int,
                                r: float, R: float, seed,
                                bounds: Bounds,
                                start_center=None,
                                goal_center=None) -> tuple[np.ndarray, np.ndarray]:
    """Valid start and goal configurations: goals are a translated copy of
    the start layout, so both share one connected geometry."""
    rng = np.random.default_rng(seed_parts(seed))
    if start_center is None or goal_center is None:
        offset = _corner_offset(n)
        start_center = np.array([bounds.xmin + offset, bounds.ymin + offset])
        goal_center = np.array([bounds.xmax - offset, bounds.ymax - offset])
    start_center = np.asarray(start_center, dtype=float)
    goal_center = np.asarray(goal_center, dtype=float)

    for _ in range(80):
        starts = _sample_cluster(rng, n, start_center, obstacles, bounds, r, R)
        if starts is None:
            continue
        goals = starts + (goal_center - start_center)
        if obstacles and min_obstacle_distance(goals, obstacles) <= 2.0 * r:
            continue
        inner = BOUNDARY_THICKNESS + 2.0 * r
        if (goals[:, 0].min() < bounds.xmin + inner
                or goals[:, 0].max() > bounds.xmax - inner
                or goals[:, 1].min() < bounds.ymin + inner
                or goals[:, 1].max() > bounds.ymax - inner):
            continue
        if not validate_start_goal(starts, goals, obstacles, r, R):
            return starts, goals
    raise WorldGenError("start/goal sampling exhausted", seed)


def _corner_offset(n: int) -> float:
    return 0.9 + 0.28 * math.sqrt(n) + BOUNDARY_THICKNESS


# --- occupancy rasterization of true geometry (generator-side checks) ------

def _true_occupancy(obstacles: Sequence[Obstacle], bounds: Bounds,
                    cell: float, margin: float) -> np.ndarray:
    nx = int(math.ceil(bounds.width / cell))
    ny = int(math.ceil(bounds.height / cell))
    xs = bounds.xmin + (np.arange(nx) + 0.5) * cell
    ys = bounds.ymin + (np.arange(ny) + 0.5) * cell
    gx, gy = np.meshgrid(xs, ys)
    centers = np.stack([gx.ravel(), gy.ravel()], axis=1)
    occ = np.zeros(len(centers), dtype=bool)
    for ob in obstacles:
        occ |= ob.contains_points(centers, margin=margin)
    return occ.reshape(ny, nx)


def _cells_reachable(occ: np.ndarray, start_cell, goal_cell) -> bool:
    ny, nx = occ.shape
    sx, sy = start_cell
    gx, gy = goal_cell
    if occ[sy, sx] or occ[gy, gx]:
        return False
    seen = np.zeros_like(occ)
    seen[sy, sx] = True
    queue = deque([(sx, sy)])
    while queue:
        x, y = queue.popleft()
        if (x, y) == (gx, gy):
            return True
        for dx, dy in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            jx, jy = x + dx, y + dy
            if 0 <= jx < nx and 0 <= jy < ny and not occ[jy, jx] and not seen[jy, jx]:
                seen[jy, jx] = True
                queue.append((jx, jy))
    return False


def _world_passable(obstacles: Sequence[Obstacle], bounds: Bounds,
                    starts: np.ndarray, goals: np.ndarray, r: float,
                    cell: float = 0.1) -> bool:
    """Every agent has a grid path from start to goal through the true map
    with clearance margin r + cell/2."""
    occ = _true_occupancy(obstacles, bounds, cell, margin=r + cell / 2.0)
    ny, nx = occ.shape

    def to_cell(p):
        ix = min(max(int((p[0] - bounds.xmin) / cell), 0), nx - 1)
        iy = min(max(int((p[1] - bounds.ymin) / cell), 0), ny - 1)
        return ix, iy

    return all(
        _cells_reachable(occ, to_cell(s), to_cell(g))
        for s, g in zip(starts, goals)
    )


def _segment_blocked(p: np.ndarray, q: np.ndarray,
                     geometry: ObstacleGeometry) -> bool:
    d = q - p
    length = float(np.linalg.norm(d))
    if length < 1e-12:
        return False
    hit = geometry.ray_distances(p, (d / length)[None, :], length)[0]
    return bool(np.isfinite(hit))


def generate_room(seed, n: int = 5, size: float = 8.0, r: float = 0.05,
                  R: float = 0.5, u_max: float = 1.0,
                  dt: float = 0.3) -> WorldState:
    """Walled room whose interior funnel pocket blocks every straight
    start-to-goal segment while a detour around the funnel tips remains."""
    if n < 1:
        raise ValueError("need at least one agent")
    bounds = Bounds(0.0, 0.0, size, size)
    offset = _corner_offset(n)

    for attempt in range(120):
        rng = stream_rng("room", seed, attempt)
        start_center = np.array([offset, offset]) + rng.uniform(-0.2, 0.2, 2)
        goal_center = np.array([size - offset, size - offset]) + rng.uniform(-0.2, 0.2, 2)
        diag = goal_center - start_center
        diag = diag / np.linalg.norm(diag)
        back = -diag

        mid = (start_center + goal_center) / 2.0
        apex = (mid + diag * rng.uniform(-0.5, 0.7)
                + np.array([-diag[1], diag[0]]) * rng.uniform(-0.5, 0.5))
        half_open = math.radians(rng.uniform(48.0, 68.0))
        walls = []
        for sign in (1.0, -1.0):
            ang = math.atan2(back[1], back[0]) + sign * half_open
            arm_dir = np.array([math.cos(ang), math.sin(ang)])
            arm_len = rng.uniform(2.3, 3.2)
            center = apex + arm_dir * arm_len / 2.0
            walls.append(Obstacle.wall(center, arm_len, ang,
                                       thickness=rng.uniform(0.08, 0.15)))
        for _ in range(int(rng.integers(1, 4))):
            c = rng.uniform(1.8, size - 1.8, size=2)
            length = rng.uniform(0.8, 1.9)
            ang = rng.uniform(0.0, math.pi)
            walls.append(Obstacle.wall(c, length, ang,
                                       thickness=rng.uniform(0.08, 0.15)))

        # Interior walls must stay clear of both cluster regions.
        clusters = np.array([start_center, goal_center])
        keep_out = 0.55 + 0.28 * math.sqrt(n)
        if any(w.distance_to_points(clusters).min() < keep_out for w in walls):
            continue
        obstacles = tuple(_boundary_walls(bounds) + walls)
        try:
            starts, goals = sample_connected_start_goal(
                obstacles, n, r, R, (seed, attempt), bounds,
                start_center, goal_center)
        except WorldGenError:
            continue
        interior = ObstacleGeometry(walls)
        blocked = all(
            _segment_blocked(s, g, interior)
            for s in starts for g in goals
        )
        if not blocked:
            continue
        if not _world_passable(obstacles, bounds, starts, goals, r):
            continue
        return WorldState(positions=starts, goals=goals, obstacles=obstacles,
                          bounds=bounds, r=r, R=R, u_max=u_max, dt=dt,
                          kind="room", seed=seed)
    raise WorldGenError("room generation exhausted retries", seed)


def generate_maze(seed, n: int, m: int, size: Optional[float] = None,
                  r: float = 0.05, R: float = 0.5, u_max: float = 1.0,
                  dt: float = 0.3) -> WorldState:
    """Random rectangle field between two valid corner clusters."""
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    if size is None:
        size = max(8.0, 8.0 * math.sqrt(n / 25.0))
    bounds = Bounds(0.0, 0.0, size, size)
    offset = _corner_offset(n)

    for attempt in range(60):
        rng = stream_rng("maze", seed, attempt)
        boundary = _boundary_walls(bounds)
        try:
            starts, goals = sample_connected_start_goal(
                tuple(boundary), n, r, R, (seed, attempt), bounds)
        except WorldGenError:
            continue
        anchors = np.vstack([starts, goals])
        rects: list[Obstacle] = []
        for _ in range(m):
            for _ in range(60):
                w = rng.uniform(0.25, 0.85)
                h = rng.uniform(0.25, 0.85)
                cx = rng.uniform(bounds.xmin + 0.3 + w / 2,
                                 bounds.xmax - 0.3 - w / 2)
                cy = rng.uniform(bounds.ymin + 0.3 + h / 2,
                                 bounds.ymax - 0.3 - h / 2)
                rect = Obstacle.box((cx, cy), w, h)
                if rect.distance_to_points(anchors).min() > max(4.0 * r, 0.2):
                    rects.append(rect)
                    break
            else:
                rects = None
                break
        if rects is None:
            continue
        obstacles = tuple(boundary + rects)
        if validate_start_goal(starts, goals, obstacles, r, R):
            continue
        if m > 0 and not _world_passable(obstacles, bounds, starts, goals, r):
            continue
        return WorldState(positions=starts, goals=goals, obstacles=obstacles,
                          bounds=bounds, r=r, R=R, u_max=u_max, dt=dt,
                          kind="maze", seed=seed)
    raise WorldGenError("maze generation exhausted retries", seed)
