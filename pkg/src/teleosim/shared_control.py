"""Semi-autonomous navigation state machine.

Default behavior is stepping forward a fixed distance at a time; sparse
left/right commands re-aim the robot by a fixed turn angle; every goal is
validated against the costmap before dispatch; failures funnel into a
scripted recovery (back up, then rotate counter-clockwise). The costmap's
live-obstacle layer is cleared on a fixed period so stale readings do not
pin the robot down.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import angle_diff, normalize_angle
from .planning import (
    INSCRIBED,
    LETHAL,
    CostMap,
    DwaConfig,
    VelocityCommand,
    clear_obstacle_layer,
    is_free_cell,
    plan_global,
    plan_local_dwa,
)
from .world import RobotSpec, RobotState

MODE_IDLE = "idle"
MODE_FORWARD = "default_forward"
MODE_TURN = "executing_turn"
MODE_RECOVERY = "recovery"

CMD_LEFT = "left"
CMD_RIGHT = "right"

STOP = VelocityCommand(0.0, 0.0)


@dataclass(frozen=True)
class SharedControlConfig:
    clear_time: float = 10.0        # costmap clearing period, s
    s_x: float = 1.0                # forward step per goal, m
    theta_turn: float = math.radians(45.0)  # per-command turn
    t_back: float = 2.0             # recovery reverse duration, s
    v_back: float = 0.1             # recovery reverse speed, m/s
    a_recovery: float = math.radians(30.0)  # recovery CCW rotation
    w_recovery: float = 0.5         # recovery rotation rate, rad/s
    # reverse aborts under this rear range (measured from the robot center);
    # it must exceed the footprint's corner-sweep radius or an aborted
    # reverse can leave the robot too close to a wall to rotate at all
    sonar_stop: float = 0.5
    goal_timeout: float = 15.0
    tick_rate: float = 20.0
    reached_xy: float = 0.15
    reached_theta: float = math.radians(10.0)
    lookahead: float = 0.5          # carrot distance along the global path
    # hold still this long after the recovery rotation before resuming the
    # default forward behavior; an operator reacting to the rotated heading
    # needs a beat to get a correction in, and stepping off instantly tends
    # to re-foul on the same obstacle and chain recoveries
    settle_time: float = 3.0

    def __post_init__(self):
        for name in ("clear_time", "s_x", "theta_turn", "t_back", "v_back",
                     "a_recovery", "w_recovery", "goal_timeout", "tick_rate"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if not (0.0 < self.theta_turn < math.pi):
            raise ValueError("theta_turn must be in (0, pi)")


@dataclass
class GoalRequest:
    target: tuple[float, float, float]
    origin: str  # auto-forward | command-left | command-right
    stamp: float


@dataclass
class NavState:
    mode: str = MODE_IDLE
    goal: GoalRequest | None = None
    last_clear: float = 0.0
    events: list[dict] = field(default_factory=list)


class SharedController:
    """Owns the NavState and the costmap mutations; one tick per control
    period. Commands arrive between ticks via handle_command."""

    def __init__(self, costmap: CostMap, spec: RobotSpec,
                 cfg: SharedControlConfig = SharedControlConfig(),
                 dwa: DwaConfig | None = None):
        self.costmap = costmap
        self.spec = spec
        self.cfg = cfg
        self.dwa = dwa or DwaConfig(
            max_lin_vel=spec.max_lin_vel, max_ang_vel=spec.max_ang_vel,
            lin_accel=spec.lin_accel, ang_accel=spec.ang_accel)
        self.state = NavState()
        self.path = None
        self._path_idx = 0
        self._queued = None     # newest command waiting out a recovery
        self._recovery = None
        self._motion_anchor = None  # (x, y, th, stamp) of last real movement
        self._rear_sonars = [i for i, (ang, _) in enumerate(spec.sonar_ranges)
                             if abs(angle_diff(ang, math.pi)) <= math.pi / 2]

    # -- lifecycle -----------------------------------------------------------

    def start(self, now: float) -> None:
        self.state.mode = MODE_FORWARD
        self.state.last_clear = now

    @property
    def stalled(self) -> bool:
        """True while recovery owns the platform; the operator can see it."""
        return self.state.mode == MODE_RECOVERY

    def _log(self, now: float, kind: str, **fields) -> None:
        self.state.events.append({"stamp": now, "type": kind, **fields})

    # -- commands ------------------------------------------------------------

    def handle_command(self, cmd: str, pose_est, now: float) -> None:
        if cmd not in (CMD_LEFT, CMD_RIGHT):
            raise ValueError(f"unknown command {cmd!r}")
        if self.state.mode == MODE_IDLE:
            return
        if self.state.mode == MODE_RECOVERY:
            if self._queued is not None:
                self._log(now, "command_dropped", command=self._queued[0])
            self._queued = (cmd, now)
            self._log(now, "command_queued", command=cmd)
            return
        self._apply_command(cmd, pose_est, now)

    def _apply_command(self, cmd: str, pose_est, now: float) -> None:
        if self.state.goal is not None:
            self._log(now, "goal_canceled", cause="superseded",
                      origin=self.state.goal.origin)
            self.state.goal = None
            self.path = None
        x, y, th = pose_est.mean
        sign = 1.0 if cmd == CMD_LEFT else -1.0
        heading = normalize_angle(th + sign * self.cfg.theta_turn)
        target = (x + self.cfg.s_x * math.cos(heading),
                  y + self.cfg.s_x * math.sin(heading), heading)
        if self._dispatch(target, f"command-{cmd}", pose_est, now):
            self.state.mode = MODE_TURN

    # -- goal management -------------------------------------------------------

    def _dispatch(self, target, origin: str, pose_est, now: float,
                  recover: bool = True) -> bool:
        # a goal is dispatched exactly where requested or not at all; the
        # recovery rotation, not goal nudging, is what reorients the robot
        cost = self.costmap.cost_at(target[0], target[1])
        if cost >= INSCRIBED:
            if recover:
                self._log(now, "goal_rejected", origin=origin,
                          target=list(target), cell_cost=cost)
                self._enter_recovery("goal_not_free", now)
            return False
        path = plan_global(self.costmap, pose_est.mean, target)
        if path is None:
            if recover:
                self._log(now, "goal_rejected", origin=origin,
                          target=list(target), cell_cost=cost, cause="no_path")
                self._enter_recovery("no_path", now)
            return False
        self.state.goal = GoalRequest(target=target, origin=origin, stamp=now)
        self.path = path
        self._path_idx = 0
        self._log(now, "goal_dispatched", origin=origin, target=list(target),
                  cell_cost=cost)
        return True

    def _propose_forward(self, pose_est, now: float) -> bool:
        x, y, th = pose_est.mean
        target = (x + self.cfg.s_x * math.cos(th),
                  y + self.cfg.s_x * math.sin(th), th)
        if self._dispatch(target, "auto-forward", pose_est, now):
            self.state.mode = MODE_FORWARD
            return True
        return False

    def _goal_reached(self, pose_est) -> bool:
        g = self.state.goal.target
        x, y, th = pose_est.mean
        return (math.hypot(g[0] - x, g[1] - y) <= self.cfg.reached_xy
                and abs(angle_diff(g[2], th)) <= self.cfg.reached_theta)

    def _path_blocked(self) -> bool:
        for ix, iy in self.path.cells[self._path_idx + 1:]:
            if self.costmap.combined[iy, ix] >= INSCRIBED:
                return True
        return False

    def _carrot(self, pose_est):
        pts = self.path.points
        x, y, _ = pose_est.mean
        # advance the progress index to the nearest remaining point
        best, best_d = self._path_idx, math.inf
        for i in range(self._path_idx, len(pts)):
            d = math.hypot(pts[i, 0] - x, pts[i, 1] - y)
            if d < best_d:
                best, best_d = i, d
        self._path_idx = best
        travelled = 0.0
        prev = pts[best]
        for i in range(best + 1, len(pts)):
            travelled += math.hypot(pts[i, 0] - prev[0], pts[i, 1] - prev[1])
            prev = pts[i]
            if travelled >= self.cfg.lookahead:
                return (pts[i, 0], pts[i, 1])
        # path remainder is shorter than the lookahead: extend the carrot
        # past the goal along the goal heading so the steering target keeps
        # leading the robot through the arrival instead of behind it
        gx, gy, gth = self.state.goal.target
        extend = self.cfg.lookahead - travelled
        return (gx + extend * math.cos(gth), gy + extend * math.sin(gth))

    # -- recovery --------------------------------------------------------------

    def _enter_recovery(self, cause: str, now: float) -> None:
        if self.state.goal is not None:
            self._log(now, "goal_canceled", cause=cause,
                      origin=self.state.goal.origin)
            self.state.goal = None
        self.path = None
        self.state.mode = MODE_RECOVERY
        self._motion_anchor = None
        self._recovery = {"phase": "reverse", "since": now, "rot": 0.0,
                          "prev_th": None, "cause": cause}
        self._log(now, "recovery_entered", cause=cause)

    def _rear_blocked(self, pose_est) -> bool:
        """Mapped obstacle inside the region the body sweeps while reversing.
        The rear sonar is a single ray, so an oblique furniture corner can
        slip past it; the map sees what the ray misses."""
        cm = self.costmap
        x, y, th = pose_est.mean
        cth, sth = math.cos(th), math.sin(th)
        half_w = self.spec.width / 2.0 + 0.05
        near = self.spec.length / 2.0
        far = near + self.cfg.v_back * self.cfg.t_back + 0.05
        step = cm.resolution / 2.0
        for bx in np.arange(near, far + step, step):
            for by in np.arange(-half_w, half_w + step, step):
                px = x - bx * cth - by * sth
                py = y - bx * sth + by * cth
                ix, iy = cm.world_to_cell(px, py)
                if cm.in_map(ix, iy) and cm.combined[iy, ix] >= LETHAL:
                    return True
        return False

    def _recovery_step(self, now: float, pose_est, sonar) -> VelocityCommand:
        r = self._recovery
        cfg = self.cfg
        if r["phase"] == "settle":
            return self._settle_step(now, pose_est)
        if r["phase"] == "reverse":
            rear_clear = min((sonar[i] for i in self._rear_sonars),
                             default=math.inf)
            if (now - r["since"] >= cfg.t_back
                    or rear_clear < cfg.sonar_stop
                    or self._rear_blocked(pose_est)):
                r["phase"] = "rotate"
                r["prev_th"] = pose_est.mean[2]
                r["moved"] = now
                return VelocityCommand(0.0, cfg.w_recovery)
            return VelocityCommand(-cfg.v_back, 0.0)
        # rotate phase: accumulate realized CCW rotation until it reaches A
        th = pose_est.mean[2]
        dth = angle_diff(th, r["prev_th"])
        r["prev_th"] = th
        if abs(dth) > 1e-3:
            r["moved"] = now
        elif now - r["moved"] >= cfg.t_back:
            # the world is refusing the rotation (wedged against a face);
            # back up again and retry rather than spin the mode forever
            r["phase"] = "reverse"
            r["since"] = now
            return VelocityCommand(-cfg.v_back, 0.0)
        if dth > 0:
            r["rot"] += dth
        if r["rot"] >= cfg.a_recovery:
            r["phase"] = "settle"
            r["since"] = now
            return STOP
        return VelocityCommand(0.0, cfg.w_recovery)

    def _settle_step(self, now: float, pose_est) -> VelocityCommand:
        # stand still until a queued command arrives or the settle window
        # runs out, then hand control back
        if self._queued is None and now - self._recovery["since"] < self.cfg.settle_time:
            return STOP
        rot = self._recovery["rot"]
        self.state.mode = MODE_FORWARD
        self._recovery = None
        self._log(now, "recovery_exited", rotation=rot)
        if self._queued is not None:
            cmd, _ = self._queued
            self._queued = None
            self._apply_command(cmd, pose_est, now)
        return STOP

    # -- main loop ---------------------------------------------------------------

    def tick(self, now: float, robot_state: RobotState, pose_est,
             sonar) -> VelocityCommand:
        if self.state.mode == MODE_IDLE:
            return STOP
        if now - self.state.last_clear >= self.cfg.clear_time:
            clear_obstacle_layer(self.costmap)
            self.state.last_clear = now
            self._log(now, "costmap_cleared")
        if self.state.mode == MODE_RECOVERY:
            return self._recovery_step(now, pose_est, sonar)

        # liveness watchdog: an active mode must actually move the platform;
        # commands superseding each other reset the goal clock but must not
        # mask a robot that is pinned in place
        x, y, th = pose_est.mean
        if self._motion_anchor is None:
            self._motion_anchor = (x, y, th, now)
        else:
            ax, ay, ath, since = self._motion_anchor
            if (math.hypot(x - ax, y - ay) > 0.02
                    or abs(angle_diff(th, ath)) > 0.02):
                self._motion_anchor = (x, y, th, now)
            elif now - since > self.cfg.goal_timeout:
                self._enter_recovery("goal_timeout", now)
                return STOP

        if self.state.goal is not None and self._goal_reached(pose_est):
            self._log(now, "goal_reached", origin=self.state.goal.origin)
            self.state.goal = None
            self.path = None
            self.state.mode = MODE_FORWARD
        if self.state.goal is None:
            if not self._propose_forward(pose_est, now):
                return STOP
        goal = self.state.goal
        if now - goal.stamp > self.cfg.goal_timeout:
            self._enter_recovery("goal_timeout", now)
            return STOP
        if not is_free_cell(self.costmap, goal.target):
            self._enter_recovery("goal_not_free", now)
            return STOP
        if self.path is None or self._path_blocked():
            path = plan_global(self.costmap, pose_est.mean, goal.target)
            if path is None:
                self._enter_recovery("no_path", now)
                return STOP
            self.path = path
            self._path_idx = 0

        x, y, th = pose_est.mean
        if math.hypot(goal.target[0] - x, goal.target[1] - y) <= self.cfg.reached_xy:
            # position held: rotate in place onto the goal heading
            err = angle_diff(goal.target[2], th)
            w = max(-self.spec.max_ang_vel,
                    min(self.spec.max_ang_vel, 2.0 * err))
            return VelocityCommand(0.0, w)
        carrot = self._carrot(pose_est)
        est_state = RobotState(pose=pose_est.mean, vel=robot_state.vel, clock=now)
        cmd = plan_local_dwa(est_state, carrot, self.costmap, self.dwa)
        if cmd is None:
            self._enter_recovery("no_admissible", now)
            return STOP
        return cmd
