"""Prompt assembly for the foundation-model planner: fixed task text, online
environment serialization, and top-view raster rendering."""

from __future__ import annotations

import base64
import io
import json
from dataclasses import dataclass
from importlib import resources
from typing import Optional

import numpy as np
from PIL import Image, ImageDraw

from ..world import WorldState


@dataclass
class PromptConfig:
    waypoint_count: int = 3
    image_size: int = 512
    jpeg_quality: int = 80


def _schema_example(waypoint_count: int) -> str:
    wps = [[round(1.0 + k, 2), round(2.0 + k, 2)] for k in range(waypoint_count)]
    return json.dumps({"Leader": 0, "Waypoints": wps})


def build_task_prompt(config: Optional[PromptConfig] = None) -> str:
    """Fixed task description: requirements, planner role, waypoint count,
    and the output schema. Identical for every call with the same config."""
    config = config or PromptConfig()
    template = (
        resources.files("swarmnav.planners")
        .joinpath("templates/task_prompt.txt")
        .read_text()
    )
    return template.format(
        waypoint_count=config.waypoint_count,
        schema_example=_schema_example(config.waypoint_count),
    )


def _fmt_points(points: np.ndarray) -> str:
    return "[" + ", ".join(f"[{x:.2f}, {y:.2f}]" for x, y in points) + "]"


def build_env_text(world: WorldState, most_recent: Optional[int] = None,
                   include_obstacles: bool = True) -> str:
    """Environment tuple as text, coordinates at two decimals.

    ``most_recent`` truncates the observed-obstacle list to the newest
    entries; None includes everything seen so far.
    """
    lines = [
        f"Number of agents: {world.n_agents}",
        f"Safety radius: {world.r:.2f}",
        f"Connectivity radius: {world.R:.2f}",
        f"Agent locations: {_fmt_points(world.positions)}",
        f"Agent goals: {_fmt_points(world.goals)}",
    ]
    if include_obstacles:
        obs = world.observed.points(most_recent)
        lines.append(f"Observed obstacle locations: {_fmt_points(obs)}")
    return "\n".join(lines)


def render_env_image(world: WorldState, most_recent: Optional[int] = None,
                     size: int = 512, jpeg_quality: int = 80) -> bytes:
    """Top-view JPEG: agents blue, goals green, observed obstacle points red,
    over a light coordinate grid. Fixed resolution, deterministic bytes."""
    img = Image.new("RGB", (size, size), (255, 255, 255))
    draw = ImageDraw.Draw(img)
    b = world.bounds
    span = max(b.width, b.height, 1e-9)
    pad = 12

    def to_px(p):
        x = pad + (p[0] - b.xmin) / span * (size - 2 * pad)
        y = size - pad - (p[1] - b.ymin) / span * (size - 2 * pad)
        return x, y

    # Unit grid and workspace frame give the raster a constant visual floor.
    gx = b.xmin
    while gx <= b.xmax + 1e-9:
        x0, _ = to_px((gx, b.ymin))
        draw.line([(x0, pad), (x0, size - pad)], fill=(225, 225, 225), width=1)
        gx += 1.0
    gy = b.ymin
    while gy <= b.ymax + 1e-9:
        _, y0 = to_px((b.xmin, gy))
        draw.line([(pad, y0), (size - pad, y0)], fill=(225, 225, 225), width=1)
        gy += 1.0
    tl = to_px((b.xmin, b.ymax))
    br = to_px((b.xmax, b.ymin))
    draw.rectangle([tl, br], outline=(40, 40, 40), width=2)

    for x, y in world.observed.points(most_recent):
        px, py = to_px((x, y))
        draw.ellipse([px - 2, py - 2, px + 2, py + 2], fill=(220, 30, 30))
    for gxy in world.goals:
        px, py = to_px(gxy)
        draw.ellipse([px - 5, py - 5, px + 5, py + 5], fill=(30, 160, 60))
    for pxy in world.positions:
        px, py = to_px(pxy)
        draw.ellipse([px - 5, py - 5, px + 5, py + 5], fill=(40, 70, 220))

    buf = io.BytesIO()
    img.save(buf, format="JPEG", quality=jpeg_quality)
    return buf.getvalue()


def image_to_base64(image_bytes: bytes) -> str:
    return base64.b64encode(image_bytes).decode("ascii")
