"""Operator stand-ins that feed Left/Right commands into a run.

The scripted operator plays the pilot: it watches the robot from outside
(ground truth, like a human would) and issues a turn whenever the current
target drifts out of its heading tolerance. Command latency models the
time a BCI needs to deliver a command, the error rate its occasional
misclassification.
"""
from __future__ import annotations

import dataclasses
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from ..geometry import angle_diff, normalize_angle
from ..bci.posterior import PosteriorState, PosteriorStream, integrate, maybe_emit
from ..shared_control import CMD_LEFT, CMD_RIGHT
from ..world import check_collision


@dataclass
class OperatorModel:
    """Behavioral parameters of the simulated pilot."""

    target: tuple[float, float] | None = None
    tolerance: float = math.radians(30.0)
    latency_mean: float = 4.0
    latency_sd: float = 1.0
    latency_floor: float = 1.5
    error_rate: float = 0.05
    # what the pilot knows about the robot: the turn one command produces
    # and the forward step a goal is placed at
    theta_turn: float = math.radians(45.0)
    s_x: float = 1.0

    def __post_init__(self):
        if self.latency_floor <= 0.0:
            raise ValueError("latency_floor must be strictly positive")
        if not self.tolerance > self.theta_turn / 4.0:
            raise ValueError("tolerance must exceed theta_turn / 4")
        if not 0.0 <= self.error_rate <= 1.0:
            raise ValueError("error_rate must be in [0, 1]")


def _misdeliver(cmd: str) -> str:
    return CMD_RIGHT if cmd == CMD_LEFT else CMD_LEFT


class ScriptedOperator:
    """Issues a command when |bearing-to-target - heading| exceeds the
    tolerance; direction by sign, delivery after a sampled latency. With
    ``corrective`` set it also reacts to a stalled robot.

    Three bits of pilot realism keep it from steering into trouble: it
    holds off while the robot is visibly rotating (a previous command or a
    recovery is still playing out), it pauses briefly after each delivery,
    and - given the scene - it never asks for a turn whose landing spot it
    can see is blocked by furniture."""

    source = "scripted"

    def __init__(self, model: OperatorModel, rng: np.random.Generator,
                 corrective: bool = False, takeover: bool = False,
                 settle_rate: float = 0.35, cooldown: float = 2.0,
                 scene=None, spec=None):
        self.model = model
        self.rng = rng
        self.corrective = corrective
        # a robot with no autonomy stays frozen until the pilot acts, so the
        # manual baseline turns even when both sides look blocked; under
        # shared control the pilot lets the recovery behavior work instead
        self.takeover = takeover
        self.settle_rate = settle_rate
        self.cooldown = cooldown
        self.scene = scene
        # the pilot eyeballs clearance, so the veto checks a padded footprint
        self.spec = None if spec is None else dataclasses.replace(
            spec, length=spec.length + 0.3, width=spec.width + 0.3)
        self._pending: tuple[float, str] | None = None
        self._hold_until = 0.0
        self._last: tuple[float, float] | None = None  # (t, heading)

    def set_target(self, xy: tuple[float, float] | None) -> None:
        self.model.target = xy

    def _turning(self, now: float, th: float) -> bool:
        last = self._last
        self._last = (now, th)
        if last is None or now <= last[0]:
            return False
        return abs(angle_diff(th, last[1])) / (now - last[0]) > self.settle_rate

    def _blocked(self, pose, cmd: str) -> bool:
        """Would this command's landing spot visibly not fit the robot?"""
        if self.scene is None or self.spec is None:
            return False
        x, y, th = pose
        sign = 1.0 if cmd == CMD_LEFT else -1.0
        heading = normalize_angle(th + sign * self.model.theta_turn)
        goal = (x + self.model.s_x * math.cos(heading),
                y + self.model.s_x * math.sin(heading), heading)
        return check_collision(self.scene, goal, self.spec)

    def poll(self, now: float, pose, stalled: bool = False) -> str | None:
        turning = self._turning(now, pose[2])
        if self._pending is not None:
            due, cmd = self._pending
            if now >= due:
                self._pending = None
                self._hold_until = now + self.cooldown
                return cmd
            return None
        want_stall = stalled and self.corrective
        # a struggling robot overrides the wait-for-it-to-settle habit
        if (self.model.target is None or now < self._hold_until
                or (turning and not want_stall)):
            return None
        x, y, th = pose
        tx, ty = self.model.target
        err = angle_diff(math.atan2(ty - y, tx - x), th)
        if abs(err) <= self.model.tolerance and not want_stall:
            return None
        cmd = CMD_LEFT if err >= 0.0 else CMD_RIGHT
        if self._blocked(pose, cmd):
            if not want_stall:
                return None            # wait for a cleaner line
            if not self._blocked(pose, _misdeliver(cmd)):
                cmd = _misdeliver(cmd)  # stalled: turn away from the blockage
            elif not self.takeover:
                return None            # both sides bad: let recovery run
            # manual: both sides look bad, but standing still is worse
        if self.rng.random() < self.model.error_rate:
            cmd = _misdeliver(cmd)
        latency = max(self.model.latency_floor,
                      self.rng.normal(self.model.latency_mean,
                                      self.model.latency_sd))
        self._pending = (now + latency, cmd)
        return None


def random_command_schedule(rng: np.random.Generator, n: int = 150,
                            gap: tuple[float, float] = (2.0, 8.0),
                            ) -> tuple[tuple[float, str], ...]:
    """n commands, inter-command gaps uniform in [gap), direction fair coin."""
    if n <= 0:
        raise ValueError("n must be positive")
    lo, hi = gap
    if not 0.0 < lo < hi:
        raise ValueError("need 0 < gap low < gap high")
    t = 0.0
    out = []
    for _ in range(n):
        t += float(rng.uniform(lo, hi))
        out.append((t, CMD_LEFT if int(rng.integers(2)) == 0 else CMD_RIGHT))
    return tuple(out)


class ScheduledOperator:
    """Replays a precomputed (time, command) schedule."""

    source = "schedule"

    def __init__(self, schedule):
        self._queue = deque(schedule)

    @property
    def remaining(self) -> int:
        return len(self._queue)

    def set_target(self, xy) -> None:  # schedules ignore targets
        pass

    def poll(self, now: float, pose, stalled: bool = False) -> str | None:
        if self._queue and now >= self._queue[0][0]:
            return self._queue.popleft()[1]
        return None


class PosteriorStreamOperator:
    """Pilot whose intent runs through the evidence accumulator: while the
    target sits outside the tolerance the stream produces evidence for the
    matching side, otherwise balanced evidence, and a command is emitted
    only when the accumulated probability crosses the threshold. Latency
    emerges from the accumulation instead of a sampled delay."""

    source = "posterior-stream"

    def __init__(self, model: OperatorModel, rng: np.random.Generator,
                 hop_s: float = 0.0625, refractory: float = 1.0):
        self.model = model
        self.stream = PosteriorStream(rng)
        self.state = PosteriorState()
        self.hop_s = hop_s
        self.refractory = refractory
        self._next_hop = 0.0

    def set_target(self, xy) -> None:
        self.model.target = xy

    def poll(self, now: float, pose, stalled: bool = False) -> str | None:
        if now < self._next_hop:
            return None
        self._next_hop += self.hop_s
        if self.model.target is None:
            return None
        x, y, th = pose
        tx, ty = self.model.target
        err = angle_diff(math.atan2(ty - y, tx - x), th)
        if abs(err) > self.model.tolerance:
            q = self.stream.sample(CMD_LEFT if err >= 0.0 else CMD_RIGHT)
        else:
            q = np.array([0.5, 0.5])
        self.state = integrate(self.state, q)
        self.state, cmd = maybe_emit(self.state, now=now,
                                     refractory=self.refractory)
        return cmd


class ExternalOperator:
    """Queue fed from outside the tick loop (UDP listener, console)."""

    source = "external"

    def __init__(self):
        self._queue: deque[str] = deque()

    def feed(self, cmd: str) -> None:
        if cmd not in (CMD_LEFT, CMD_RIGHT):
            raise ValueError(f"unknown command {cmd!r}")
        self._queue.append(cmd)

    def set_target(self, xy) -> None:
        pass

    def poll(self, now: float, pose, stalled: bool = False) -> str | None:
        if self._queue:
            return self._queue.popleft()
        return None
