"""Request/response shapes for the service endpoints."""
from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field

NavMap = Literal["laser", "projected"]
Control = Literal["shared", "manual"]


class BuildMapsRequest(BaseModel):
    scene: str
    out: str | None = None    # directory to persist the bundle into
    force: bool = False


class MapEvalRequest(BaseModel):
    scene: str
    seed: int
    n_commands: int = Field(default=150, gt=0)


class CourseRequest(BaseModel):
    scene: str
    seed: int
    nav_map: NavMap = "projected"
    operator: Literal["scripted", "posterior-stream"] = "scripted"
    control: Control = "shared"
    course_timeout: float = Field(default=600.0, gt=0.0)


class ReplayRequest(BaseModel):
    events: list[dict]


class SessionRequest(BaseModel):
    scene: str = "office"
    seed: int = 0
    nav_map: NavMap = "projected"
    control: Control = "shared"
    input_mode: Literal["manual", "bci"] = "manual"


class ControlRequest(BaseModel):
    action: Literal["start", "pause", "reset", "mode"]
    mode: Literal["manual", "bci"] | None = None
