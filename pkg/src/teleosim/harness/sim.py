"""Closed-loop run: true dynamics, noisy odometry, localization, costmap
updates and the selected controller, advanced one control period at a time.

The world advances at 20 Hz; the laser fires at 10 Hz and one scan per
firing is shared between the particle filter and the costmap obstacle
layer. Collisions are resolved by blocking the offending step (the robot
stays put with zeroed velocities) and are counted edge-triggered: a new
contact only counts after the robot has moved away from the previous one.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..localization import McConfig, MclFilter, odom_delta_from_poses
from ..mapping import MapBundle
from ..net import msg_nav_state, msg_particles, msg_path, msg_pose
from ..planning import CostMap, DwaConfig, update_obstacle_layer
from ..shared_control import SharedControlConfig, SharedController
from ..world import (
    RobotSpec,
    RobotState,
    SceneModel,
    check_collision,
    simulate_lidar,
    simulate_sonar,
    step,
)
from .manual import ManualConfig, ManualController

LOG_FORMAT = "runlog/1"

# commands take seconds to deliver, so the platform crawls; a BCI-paced
# robot that covers meters per command is unpilotable
CRUISE_VEL = 0.35


class BoundsExit(RuntimeError):
    """Robot left the scene bounds; the run cannot continue."""

    def __init__(self, clock: float, pose):
        super().__init__(f"robot left scene bounds at t={clock:.2f}s")
        self.clock = clock
        self.pose = pose


@dataclass(frozen=True)
class SimConfig:
    nav_map: str = "projected"      # planner grid: "projected" | "laser"
    control: str = "shared"         # "shared" | "manual"
    control_period: float = 0.05
    scan_period: float = 0.1
    collision_rearm: float = 0.1

    def __post_init__(self):
        if self.nav_map not in ("projected", "laser"):
            raise ValueError(f"unknown nav_map {self.nav_map!r}")
        if self.control not in ("shared", "manual"):
            raise ValueError(f"unknown control {self.control!r}")
        ratio = self.scan_period / self.control_period
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise ValueError("scan_period must be a multiple of control_period")


class SimRun:
    """One experiment instance; tick() advances one control period."""

    def __init__(self, scene: SceneModel, bundle: MapBundle, seed: int,
                 cfg: SimConfig = SimConfig(), spec: RobotSpec | None = None,
                 operator=None, sc_cfg: SharedControlConfig | None = None,
                 mc_cfg: McConfig | None = None,
                 manual_cfg: ManualConfig | None = None,
                 start_pose=None, telemetry=None):
        self.scene = scene
        self.cfg = cfg
        self.spec = spec or RobotSpec()
        self.operator = operator
        self.telemetry = telemetry
        sc_cfg = sc_cfg or SharedControlConfig()
        mc_cfg = mc_cfg or McConfig()

        children = np.random.SeedSequence(seed).spawn(3)
        self._scan_rng = np.random.default_rng(children[0])
        self._odom_rng = np.random.default_rng(children[1])
        mcl_rng = np.random.default_rng(children[2])
        self._mc_cfg = mc_cfg

        if start_pose is None:
            sx, sy = scene.targets["S"]
            start_pose = (sx, sy, 0.0)
        if check_collision(scene, start_pose, self.spec):
            raise ValueError("start pose is in contact")
        self.state = RobotState(pose=tuple(start_pose), vel=(0.0, 0.0))

        nav_grid = (bundle.navigation_map if cfg.nav_map == "projected"
                    else bundle.localization_map)
        self.mcl = MclFilter(bundle.localization_map, start_pose, mc_cfg,
                             mcl_rng, max_range=self.spec.laser_max_range)
        self.est = self.mcl.last_estimate

        self.log: list[dict] = [{
            "type": "run_header", "format": LOG_FORMAT, "scene": scene.name,
            "seed": seed, "nav_map": cfg.nav_map, "control": cfg.control,
            "operator": getattr(operator, "source", None),
            "start_pose": list(start_pose),
        }]
        if cfg.control == "shared":
            self.costmap = CostMap(nav_grid)
            dwa = DwaConfig(
                max_lin_vel=min(CRUISE_VEL, self.spec.max_lin_vel),
                max_ang_vel=self.spec.max_ang_vel,
                lin_accel=self.spec.lin_accel, ang_accel=self.spec.ang_accel)
            self.controller = SharedController(self.costmap, self.spec, sc_cfg,
                                               dwa=dwa)
            # route controller events into the run log so the stream keeps
            # true interleaving order without a merge step
            self.controller.state.events = self.log
            self.controller.start(0.0)
        else:
            self.costmap = None
            self.controller = ManualController(
                self.spec, manual_cfg or ManualConfig(theta_turn=sc_cfg.theta_turn))
            self.controller.events = self.log

        self._i = 0
        self._scan_every = round(cfg.scan_period / cfg.control_period)
        self.collisions = 0
        self.commands = 0
        self.distance = 0.0
        self.in_contact = False
        self._contact_xy = (0.0, 0.0)
        self._deloc_seen = 0
        self._scans = 0
        self._last_mode = None
        self._last_path = None

    @property
    def clock(self) -> float:
        return self._i * self.cfg.control_period

    @property
    def delocalizations(self) -> int:
        return self.mcl.monitor.count

    def deliver(self, cmd: str, source: str, seq: int | None = None) -> None:
        """Inject one command as if it just arrived over the link."""
        t = self.clock
        event = {"stamp": t, "type": "command", "command": cmd,
                 "source": source}
        if seq is not None:
            event["seq"] = seq
        self.log.append(event)
        self.commands += 1
        self.controller.handle_command(cmd, self.est, t)

    def _emit(self, msg: dict) -> None:
        if self.telemetry is not None:
            self.telemetry(msg)

    def _sense(self, t: float) -> None:
        scan = simulate_lidar(self.scene, self.state.pose, self.spec,
                              self._scan_rng)
        self.est = self.mcl.update(scan, t, truth=self.state.pose)
        if self.mcl.monitor.count > self._deloc_seen:
            self._deloc_seen = self.mcl.monitor.count
            self.log.append({"stamp": t, "type": "deloc"})
        if self.costmap is not None:
            update_obstacle_layer(self.costmap, scan, self.est.mean)
        self._scans += 1
        if self.telemetry is not None:
            poses = self.mcl.particles.poses
            stride = max(1, len(poses) // 300)
            self._emit(msg_particles(t, poses[::stride].tolist(), self._scans))

    def _telemetry_tick(self, t: float) -> None:
        x, y, th = self.state.pose
        self._emit(msg_pose(t, x, y, th))
        if self.cfg.control == "shared":
            st = self.controller.state
            mode = st.mode
            if mode != self._last_mode:
                self._last_mode = mode
                goal = None
                if st.goal is not None:
                    goal = {"target": list(st.goal.target),
                            "origin": st.goal.origin}
                self._emit(msg_nav_state(t, mode, goal))
            path = self.controller.path
            if path is not self._last_path:
                self._last_path = path
                pts = path.points.tolist() if path is not None else []
                self._emit(msg_path(t, pts))

    def _advance_odometry(self, prev_pose) -> None:
        """Feed the filter a noise-corrupted version of the true motion,
        with the same variance scaling the filter assumes."""
        trans, rot1, rot2 = odom_delta_from_poses(prev_pose, self.state.pose)
        c = self._mc_cfg
        s_rot1 = math.sqrt(c.a1 * rot1 ** 2 + c.a2 * trans ** 2)
        s_trans = math.sqrt(c.a3 * trans ** 2 + c.a4 * (rot1 ** 2 + rot2 ** 2))
        s_rot2 = math.sqrt(c.a1 * rot2 ** 2 + c.a2 * trans ** 2)
        if s_rot1 > 0.0:
            rot1 += self._odom_rng.normal(0.0, s_rot1)
        if s_trans > 0.0:
            trans += self._odom_rng.normal(0.0, s_trans)
        if s_rot2 > 0.0:
            rot2 += self._odom_rng.normal(0.0, s_rot2)
        self.mcl.predict((trans, rot1, rot2))

    def tick(self) -> None:
        t = self.clock
        x, y, _ = self.state.pose
        if not self.scene.inside_bounds(x, y):
            self.log.append({"stamp": t, "type": "run_abort",
                             "pose": list(self.state.pose)})
            raise BoundsExit(t, self.state.pose)

        if self._i % self._scan_every == 0:
            self._sense(t)

        if self.operator is not None:
            stalled = self.in_contact or bool(
                getattr(self.controller, "stalled", False))
            cmd = self.operator.poll(t, self.state.pose, stalled=stalled)
            if cmd is not None:
                self.deliver(cmd, self.operator.source)

        sonar = simulate_sonar(self.scene, self.state.pose, self.spec)
        vel = self.controller.tick(t, self.state, self.est, sonar)

        prev = self.state.pose
        candidate = step(self.state, vel, self.cfg.control_period, self.spec)
        if check_collision(self.scene, candidate.pose, self.spec):
            if not self.in_contact:
                self.in_contact = True
                self._contact_xy = (prev[0], prev[1])
                self.collisions += 1
                self.log.append({"stamp": t, "type": "collision",
                                 "pose": list(candidate.pose)})
            self.state = RobotState(pose=prev, vel=(0.0, 0.0),
                                    clock=candidate.clock)
        else:
            self.distance += math.hypot(candidate.pose[0] - prev[0],
                                        candidate.pose[1] - prev[1])
            self.state = candidate
            if self.in_contact and math.hypot(
                    self.state.pose[0] - self._contact_xy[0],
                    self.state.pose[1] - self._contact_xy[1],
            ) > self.cfg.collision_rearm:
                self.in_contact = False

        self._advance_odometry(prev)
        self._i += 1
        if self.telemetry is not None:
            self._telemetry_tick(self.clock)

    def run(self, duration: float, until=None) -> "SimRun":
        """Advance until the clock reaches duration or until(self) is true."""
        while self.clock < duration:
            self.tick()
            if until is not None and until(self):
                break
        return self

    def finish(self, completed: bool) -> None:
        self.log.append({
            "stamp": self.clock, "type": "run_end", "completed": completed,
            "distance": self.distance, "collisions": self.collisions,
            "delocalizations": self.delocalizations, "commands": self.commands,
        })
