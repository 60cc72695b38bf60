"""High-level planners behind one interface.

A planner turns the current world (positions, goals, observed obstacle
points) into a :class:`PlannerCommand`: a leader id plus an ordered waypoint
list. Implementations: occupancy-grid A*, a random baseline, and a
foundation-model adapter (prompting, rendering, parsing, transport).
"""

from .base import (
    PlannerCommand,
    PlannerError,
    PlannerQueryLog,
    ResponseParseError,
    RandomPlanner,
    random_plan,
    validate_command,
)
from .astar import AstarPlanner, OccupancyGrid, astar_plan, dijkstra_grid_cost
from .prompts import build_task_prompt, build_env_text, render_env_image
from .parsing import parse_response
from .transport import (
    LiveTransport,
    RecordingTransport,
    ReplayMissError,
    ReplayTransport,
    ScriptedTransport,
    TransportError,
    model_query,
    request_fingerprint,
)
from .model import ModelPlanner

__all__ = [
    "PlannerCommand", "PlannerError", "PlannerQueryLog", "ResponseParseError",
    "RandomPlanner", "random_plan", "validate_command",
    "AstarPlanner", "OccupancyGrid", "astar_plan", "dijkstra_grid_cost",
    "build_task_prompt", "build_env_text", "render_env_image",
    "parse_response",
    "LiveTransport", "RecordingTransport", "ReplayMissError", "ReplayTransport",
    "ScriptedTransport", "TransportError", "model_query", "request_fingerprint",
    "ModelPlanner",
]
