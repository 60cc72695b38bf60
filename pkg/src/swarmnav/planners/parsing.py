"""Robust extraction of a planner command from arbitrary model output.

Total over arbitrary strings: the result is either a valid command or a
typed :class:`ResponseParseError`, never an unchecked exception.
"""

from __future__ import annotations

import json
from typing import Optional

import numpy as np

from ..world import Bounds
from .base import MAX_WAYPOINTS, PlannerCommand, ResponseParseError

_DECODER = json.JSONDecoder()


def _json_candidates(text: str):
    """Every parseable JSON object embedded in the text, in order."""
    idx = 0
    while True:
        start = text.find("{", idx)
        if start < 0:
            return
        try:
            value, end = _DECODER.raw_decode(text, start)
        except (ValueError, TypeError):
            idx = start + 1
            continue
        if isinstance(value, dict):
            yield value
        idx = max(end, start + 1)


def _coerce_leader(raw, n_agents: int) -> int:
    try:
        leader = int(float(raw))
    except (TypeError, ValueError):
        raise ResponseParseError(f"leader not numeric: {raw!r}")
    if not 0 <= leader < n_agents:
        raise ResponseParseError(f"leader {leader} outside [0, {n_agents})")
    return leader


def _coerce_waypoints(raw, bounds: Bounds) -> np.ndarray:
    if not isinstance(raw, list):
        raise ResponseParseError(f"waypoints not a list: {type(raw).__name__}")
    pts = []
    for entry in raw[:MAX_WAYPOINTS]:
        if (not isinstance(entry, (list, tuple)) or len(entry) != 2
                or not all(isinstance(v, (int, float)) for v in entry)):
            raise ResponseParseError(f"bad waypoint entry: {entry!r}")
        pts.append([float(entry[0]), float(entry[1])])
    arr = np.array(pts, dtype=float).reshape(-1, 2)
    if not np.all(np.isfinite(arr)):
        raise ResponseParseError("non-finite waypoint")
    return bounds.clip(arr) if len(arr) else arr


def parse_response(text, n_agents: int, bounds: Bounds) -> PlannerCommand:
    """First JSON object in the text with a "Leader" and a "Waypoints" (or
    the singular "Waypoint") key, clamped onto the workspace."""
    if isinstance(text, bytes):
        text = text.decode("utf-8", errors="replace")
    if not isinstance(text, str):
        raise ResponseParseError(f"expected text, got {type(text).__name__}")
    last_error: Optional[ResponseParseError] = None
    found_any = False
    for obj in _json_candidates(text):
        if "Leader" not in obj:
            continue
        raw_wps = obj.get("Waypoints", obj.get("Waypoint"))
        if raw_wps is None:
            continue
        found_any = True
        try:
            leader = _coerce_leader(obj["Leader"], n_agents)
            waypoints = _coerce_waypoints(raw_wps, bounds)
            return PlannerCommand(leader=leader, waypoints=waypoints)
        except ResponseParseError as exc:
            last_error = exc
    if last_error is not None:
        raise last_error
    if found_any:
        raise ResponseParseError("command object present but unusable")
    raise ResponseParseError("no JSON command object found in response")
