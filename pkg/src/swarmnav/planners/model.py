"""Foundation-model planner: prompt building, transport, and parsing glue."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..world import WorldState
from .base import PlannerError, PlannerQueryLog, ResponseParseError, validate_command
from .parsing import parse_response
from .prompts import PromptConfig, build_env_text, build_task_prompt, \
    image_to_base64, render_env_image
from .transport import PromptBundle, TransportError, model_query


@dataclass
class ModelPlanner:
    """Queries a text or text-and-image model for a leader and waypoints.

    ``mode`` is "text" (environment tuple serialized as text) or "image"
    (rendered top view plus agent/goal coordinates as text). ``most_recent``
    truncates the observed-obstacle record handed to the model. A parse
    failure triggers one retry; the second failure raises PlannerError so the
    coordinator can fall back.
    """

    transport: object
    model: str = ""
    mode: str = "text"
    most_recent: Optional[int] = None
    prompt_config: PromptConfig = field(default_factory=PromptConfig)
    name: str = "model"
    _task_text: Optional[str] = field(default=None, repr=False)

    def __post_init__(self):
        if self.mode not in ("text", "image"):
            raise ValueError(f"unknown mode: {self.mode}")

    def build_bundle(self, world: WorldState) -> PromptBundle:
        if self._task_text is None:
            self._task_text = build_task_prompt(self.prompt_config)
        if self.mode == "image":
            image = render_env_image(world, self.most_recent,
                                     size=self.prompt_config.image_size,
                                     jpeg_quality=self.prompt_config.jpeg_quality)
            env_text = build_env_text(world, include_obstacles=False)
            return PromptBundle(task_text=self._task_text, env_text=env_text,
                                image_b64=image_to_base64(image),
                                model=self.model)
        env_text = build_env_text(world, self.most_recent)
        return PromptBundle(task_text=self._task_text, env_text=env_text,
                            model=self.model)

    def plan(self, world: WorldState):
        bundle = self.build_bundle(world)
        last_qlog: Optional[PlannerQueryLog] = None
        last_error: Optional[Exception] = None
        for _ in range(2):
            try:
                text, qlog = model_query(bundle, self.transport)
                qlog.planner = self.name
                last_qlog = qlog
            except TransportError as exc:
                raise PlannerError(f"transport failure: {exc}") from exc
            try:
                command = parse_response(text, world.n_agents, world.bounds)
                command = validate_command(command, world.n_agents, world.bounds)
                return command, qlog
            except (ResponseParseError, PlannerError) as exc:
                last_error = exc
        raise PlannerError(
            f"model response unusable after retry: {last_error}")
