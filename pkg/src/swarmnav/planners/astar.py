"""Occupancy-grid A* planner over the team's observed obstacle points.

Unknown space is treated as free: the grid is built only from LiDAR hits
accumulated so far, inflated by the safety radius plus half a cell. The
resulting grid path is shortcut by greedy line-of-sight and downsampled to a
fixed number of waypoints for the leader.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..world import Bounds, WorldState
from .base import PlannerCommand, PlannerQueryLog

SQRT2 = math.sqrt(2.0)
_MOVES = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
          (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2))


@dataclass
class OccupancyGrid:
    """Boolean occupancy raster covering the workspace."""

    cell_size: float
    origin: tuple[float, float]       # world coords of cell (0, 0) corner
    occupied: np.ndarray              # (ny, nx) bool, indexed [iy, ix]

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupied.shape

    @classmethod
    def from_points(cls, points: np.ndarray, bounds: Bounds,
                    cell_size: float, inflation: float) -> "OccupancyGrid":
        nx = max(1, int(math.ceil(bounds.width / cell_size)))
        ny = max(1, int(math.ceil(bounds.height / cell_size)))
        occ = np.zeros((ny, nx), dtype=bool)
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        if len(pts):
            reach = int(math.ceil(inflation / cell_size)) + 1
            px = (pts[:, 0] - bounds.xmin) / cell_size - 0.5
            py = (pts[:, 1] - bounds.ymin) / cell_size - 0.5
            base_x = np.round(px).astype(int)
            base_y = np.round(py).astype(int)
            for dy in range(-reach, reach + 1):
                for dx in range(-reach, reach + 1):
                    cx = base_x + dx
                    cy = base_y + dy
                    ok = (cx >= 0) & (cx < nx) & (cy >= 0) & (cy < ny)
                    if not ok.any():
                        continue
                    d = np.hypot(cx[ok] - px[ok], cy[ok] - py[ok]) * cell_size
                    hit = d <= inflation
                    occ[cy[ok][hit], cx[ok][hit]] = True
        return cls(cell_size=cell_size, origin=(bounds.xmin, bounds.ymin),
                   occupied=occ)

    def world_to_cell(self, p) -> tuple[int, int]:
        ny, nx = self.occupied.shape
        ix = int((p[0] - self.origin[0]) / self.cell_size)
        iy = int((p[1] - self.origin[1]) / self.cell_size)
        return min(max(ix, 0), nx - 1), min(max(iy, 0), ny - 1)

    def cell_center(self, ix: int, iy: int) -> np.ndarray:
        return np.array([
            self.origin[0] + (ix + 0.5) * self.cell_size,
            self.origin[1] + (iy + 0.5) * self.cell_size,
        ])

    def is_free(self, ix: int, iy: int) -> bool:
        return not bool(self.occupied[iy, ix])

    def nearest_free(self, cell: tuple[int, int],
                     max_radius: int = 3) -> Optional[tuple[int, int]]:
        """Closest free cell within a Chebyshev radius, deterministic scan order."""
        ix0, iy0 = cell
        ny, nx = self.occupied.shape
        for rad in range(max_radius + 1):
            for dy in range(-rad, rad + 1):
                for dx in range(-rad, rad + 1):
                    if max(abs(dx), abs(dy)) != rad:
                        continue
                    ix, iy = ix0 + dx, iy0 + dy
                    if 0 <= ix < nx and 0 <= iy < ny and self.is_free(ix, iy):
                        return ix, iy
        return None

    def line_of_sight(self, a: tuple[int, int], b: tuple[int, int]) -> bool:
        """Segment between two cell centers stays in free cells (sampled at
        one-third cell pitch)."""
        pa = np.array(a, dtype=float)
        pb = np.array(b, dtype=float)
        span = float(np.abs(pb - pa).max())
        steps = max(1, int(math.ceil(span * 3.0)))
        for k in range(steps + 1):
            q = pa + (pb - pa) * (k / steps)
            ix, iy = int(round(q[0])), int(round(q[1]))
            if self.occupied[iy, ix]:
                return False
        return True


def _grid_search(grid: OccupancyGrid, start: tuple[int, int],
                 goal: tuple[int, int], heuristic: bool):
    """A* (or Dijkstra when ``heuristic`` is off) over 8-connected cells.

    Returns (path list of cells, cost) or (None, inf).
    """
    ny, nx = grid.occupied.shape
    occ = grid.occupied
    sx, sy = start
    gx, gy = goal
    g_cost = np.full((ny, nx), np.inf)
    parent = np.full((ny, nx), -1, dtype=np.int64)
    g_cost[sy, sx] = 0.0

    def h(ix, iy):
        return math.hypot(ix - gx, iy - gy) if heuristic else 0.0

    heap = [(h(sx, sy), sy * nx + sx)]
    closed = np.zeros((ny, nx), dtype=bool)
    while heap:
        f, flat = heapq.heappop(heap)
        iy, ix = divmod(flat, nx)
        if closed[iy, ix]:
            continue
        closed[iy, ix] = True
        if (ix, iy) == (gx, gy):
            path = []
            cur = flat
            while cur >= 0:
                cy, cx = divmod(cur, nx)
                path.append((cx, cy))
                cur = parent[cy, cx]
            path.reverse()
            return path, float(g_cost[gy, gx])
        base = g_cost[iy, ix]
        for dx, dy, w in _MOVES:
            jx, jy = ix + dx, iy + dy
            if jx < 0 or jx >= nx or jy < 0 or jy >= ny:
                continue
            if occ[jy, jx] or closed[jy, jx]:
                continue
            cand = base + w
            if cand < g_cost[jy, jx]:
                g_cost[jy, jx] = cand
                parent[jy, jx] = flat
                heapq.heappush(heap, (cand + h(jx, jy), jy * nx + jx))
    return None, np.inf


def astar_grid_path(grid: OccupancyGrid, start, goal):
    return _grid_search(grid, start, goal, heuristic=True)


def dijkstra_grid_cost(grid: OccupancyGrid, start, goal) -> float:
    """Independent shortest-path oracle: plain Dijkstra, same move set."""
    _, cost = _grid_search(grid, start, goal, heuristic=False)
    return cost


def simplify_path(grid: OccupancyGrid, path: list[tuple[int, int]]):
    """Greedy line-of-sight shortcutting over grid cells."""
    if len(path) <= 2:
        return list(path)
    out = [path[0]]
    i = 0
    while i < len(path) - 1:
        j = len(path) - 1
        while j > i + 1 and not grid.line_of_sight(path[i], path[j]):
            j -= 1
        out.append(path[j])
        i = j
    return out


def downsample_waypoints(points: np.ndarray, count: int) -> np.ndarray:
    """At most ``count`` waypoints evenly spaced by arc length, ending at the
    final point."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(pts) == 1:
        return pts.copy()
    seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    total = s[-1]
    if total <= 0:
        return pts[-1:].copy()
    targets = total * (np.arange(1, count + 1) / count)
    out = np.empty((count, 2))
    for k, target in enumerate(targets):
        idx = int(np.searchsorted(s, target, side="left"))
        idx = min(max(idx, 1), len(pts) - 1)
        span = s[idx] - s[idx - 1]
        frac = 0.0 if span <= 0 else (target - s[idx - 1]) / span
        out[k] = pts[idx - 1] + frac * (pts[idx] - pts[idx - 1])
    return out


@dataclass
class AstarParams:
    waypoint_count: int = 3
    cell_size: Optional[float] = None   # default: safety radius r
    inflation: Optional[float] = None   # default: r + cell/2


def astar_plan(world: WorldState, params: Optional[AstarParams] = None):
    """Plan for the agent closest to its goal over the observed-point grid.

    Returns (command, info) where info records path cost and whether a grid
    path was found (no path falls back to straight-line waypoints).
    """
    params = params or AstarParams()
    if world.n_agents < 1:
        raise ValueError("need at least one agent")
    cell = params.cell_size or world.r
    inflation = params.inflation if params.inflation is not None else world.r + cell / 2.0
    leader = int(world.goal_distances().argmin())
    grid = OccupancyGrid.from_points(world.observed.points(), world.bounds,
                                     cell, inflation)
    start_pos = world.positions[leader]
    goal_pos = world.goals[leader]
    start = grid.nearest_free(grid.world_to_cell(start_pos))
    goal = grid.nearest_free(grid.world_to_cell(goal_pos))
    info = {"found": False, "cost": np.inf, "leader": leader}
    path = None
    if start is not None and goal is not None:
        path, cost = astar_grid_path(grid, start, goal)
        if path is not None:
            info.update(found=True, cost=cost)
    if path is None:
        wps = downsample_waypoints(np.stack([start_pos, goal_pos]),
                                   params.waypoint_count)
        return PlannerCommand(leader=leader, waypoints=wps), info
    cells = simplify_path(grid, path)
    coords = np.array([grid.cell_center(ix, iy) for ix, iy in cells])
    coords = np.vstack([start_pos[None, :], coords, goal_pos[None, :]])
    wps = downsample_waypoints(coords, params.waypoint_count)
    return PlannerCommand(leader=leader, waypoints=wps), info


@dataclass
class AstarPlanner:
    params: AstarParams
    name: str = "astar"

    def plan(self, world: WorldState):
        start = time.perf_counter()
        command, info = astar_plan(world, self.params)
        latency = time.perf_counter() - start
        note = "" if info["found"] else "no-path"
        return command, PlannerQueryLog(planner=self.name, latency_s=latency,
                                        note=note)
