"""Keyboard-style baseline controller: no planner, no map, no recovery.

Each command steps the heading setpoint by the turn angle; the robot
rotates onto the setpoint and then drives straight. The forward sonar is
the only protection against frontal contact - when it trips the robot
stalls and waits for the operator to steer it away.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from ..geometry import angle_diff, normalize_angle
from ..planning import VelocityCommand
from ..shared_control import CMD_LEFT, CMD_RIGHT, STOP
from ..world import RobotSpec


@dataclass(frozen=True)
class ManualConfig:
    cruise_vel: float = 0.35
    stop_range: float = 0.7       # forward sonar gate, measured from center
    heading_tol: float = 0.06
    heading_gain: float = 2.0
    theta_turn: float = math.radians(45.0)

    def __post_init__(self):
        for name in ("cruise_vel", "stop_range", "heading_tol", "heading_gain"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if not (0.0 < self.theta_turn < math.pi):
            raise ValueError("theta_turn must be in (0, pi)")


class ManualController:
    """Tick-compatible drop-in for the shared controller."""

    def __init__(self, spec: RobotSpec, cfg: ManualConfig = ManualConfig()):
        self.spec = spec
        self.cfg = cfg
        self.heading: float | None = None
        self.stalled = False
        self.events: list[dict] = []
        self._front = [i for i, (ang, _) in enumerate(spec.sonar_ranges)
                       if abs(angle_diff(ang, 0.0)) < math.pi / 2]

    def handle_command(self, cmd: str, pose_est, now: float) -> None:
        if cmd not in (CMD_LEFT, CMD_RIGHT):
            raise ValueError(f"unknown command {cmd!r}")
        if self.heading is None:
            self.heading = pose_est.mean[2]
        sign = 1.0 if cmd == CMD_LEFT else -1.0
        self.heading = normalize_angle(self.heading + sign * self.cfg.theta_turn)
        self.events.append({"stamp": now, "type": "manual_turn", "command": cmd,
                            "heading": self.heading})

    def _clamp_w(self, w: float) -> float:
        return max(-self.spec.max_ang_vel, min(self.spec.max_ang_vel, w))

    def tick(self, now: float, robot_state, pose_est, sonar) -> VelocityCommand:
        th = pose_est.mean[2]
        if self.heading is None:
            self.heading = th
        err = angle_diff(self.heading, th)
        if abs(err) > self.cfg.heading_tol:
            self.stalled = False
            return VelocityCommand(0.0, self._clamp_w(self.cfg.heading_gain * err))
        front = min((sonar[i] for i in self._front), default=math.inf)
        if front < self.cfg.stop_range:
            self.stalled = True
            return STOP
        self.stalled = False
        return VelocityCommand(self.cfg.cruise_vel,
                               self._clamp_w(self.cfg.heading_gain * err))
