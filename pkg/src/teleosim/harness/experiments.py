"""The two desk-scale evaluations: the random-command map study and the
S->T1->T2->T3 target course with its manual-teleoperation baseline."""
from __future__ import annotations

import math
import weakref
from dataclasses import dataclass

import numpy as np

from ..mapping import MapBundle, MapConfig, build_map_bundle
from ..scenes import get_scene, mapping_trajectory
from ..world import RobotSpec
from .operators import (
    OperatorModel,
    PosteriorStreamOperator,
    ScheduledOperator,
    ScriptedOperator,
    random_command_schedule,
)
from .reports import RunMetrics
from .sim import BoundsExit, SimConfig, SimRun

TARGET_RADIUS = 0.5
COURSE_TARGETS = ("T1", "T2", "T3")
NAV_MAPS = ("laser", "projected")
MODES = ("random-commands", "target-course")
OPERATORS = ("scripted", "posterior-stream", "udp-external")
CONTROLS = ("shared", "manual")


@dataclass(frozen=True)
class ExperimentConfig:
    scene: str
    seed: int
    nav_map: str = "projected"
    mode: str = "target-course"
    operator: str = "scripted"
    control: str = "shared"
    n_commands: int = 150
    course_timeout: float = 600.0
    settle: float = 10.0   # random-commands: tail after the last command

    def __post_init__(self):
        if not isinstance(self.seed, int):
            raise ValueError("seed must be an integer")
        if self.nav_map not in NAV_MAPS:
            raise ValueError(f"nav_map must be one of {NAV_MAPS}")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.operator not in OPERATORS:
            raise ValueError(f"operator must be one of {OPERATORS}")
        if self.control not in CONTROLS:
            raise ValueError(f"control must be one of {CONTROLS}")
        if self.n_commands <= 0 or self.course_timeout <= 0.0:
            raise ValueError("n_commands and course_timeout must be positive")


_BUNDLES: "weakref.WeakKeyDictionary[object, MapBundle]" = weakref.WeakKeyDictionary()


def bundle_for(scene, map_cfg: MapConfig = MapConfig()) -> MapBundle:
    """Build (and cache per scene instance) the two-map bundle from a
    survey drive through the scene."""
    bundle = _BUNDLES.get(scene)
    if bundle is None:
        bundle = build_map_bundle(scene, mapping_trajectory(scene, map_cfg.robot),
                                  map_cfg)
        _BUNDLES[scene] = bundle
    return bundle


def _operator_seed(seed: int) -> np.random.SeedSequence:
    # child 3; SimRun takes children 0-2 of the same root
    return np.random.SeedSequence(seed).spawn(4)[3]


def _course_operator(cfg: ExperimentConfig, control: str, scene, spec):
    rng = np.random.default_rng(_operator_seed(cfg.seed))
    model = OperatorModel()
    if cfg.operator == "scripted":
        return ScriptedOperator(model, rng, corrective=True,
                                takeover=(control == "manual"),
                                scene=scene, spec=spec)
    if cfg.operator == "posterior-stream":
        return PosteriorStreamOperator(model, rng)
    raise ValueError("udp-external operator only runs under serve mode")


def run_map_eval(cfg: ExperimentConfig) -> list[dict]:
    """One row per navigation-map configuration, same command schedule and
    seeds for both, counting collisions and delocalization events."""
    scene = get_scene(cfg.scene)
    bundle = bundle_for(scene)
    schedule = random_command_schedule(
        np.random.default_rng(_operator_seed(cfg.seed)), n=cfg.n_commands)
    duration = schedule[-1][0] + cfg.settle
    rows = []
    for nav in NAV_MAPS:
        sim = SimRun(scene, bundle, cfg.seed,
                     SimConfig(nav_map=nav, control="shared"),
                     operator=ScheduledOperator(schedule))
        aborted = False
        try:
            sim.run(duration)
        except BoundsExit:
            aborted = True
        sim.finish(completed=not aborted)
        rows.append({
            "config": f"nav-map={nav}", "scene": scene.name, "seed": cfg.seed,
            "delocalizations": sim.delocalizations,
            "collisions": sim.collisions, "commands": sim.commands,
            "duration": sim.clock, "aborted": aborted,
        })
    return rows


def _count(log, kind: str) -> int:
    return sum(1 for e in log if e.get("type") == kind)


def run_target_course(cfg: ExperimentConfig,
                      control: str | None = None) -> tuple[RunMetrics, list[dict]]:
    """Drive the course target by target; a target counts reached within
    TARGET_RADIUS of ground truth. Returns the metrics and the replay log."""
    control = control or cfg.control
    scene = get_scene(cfg.scene)
    bundle = bundle_for(scene)
    spec = RobotSpec()
    operator = _course_operator(cfg, control, scene, spec)
    # trials start with the robot already facing down the first leg
    sx, sy = scene.targets["S"]
    t1x, t1y = scene.targets[COURSE_TARGETS[0]]
    start = (sx, sy, math.atan2(t1y - sy, t1x - sx))
    sim = SimRun(scene, bundle, cfg.seed,
                 SimConfig(nav_map=cfg.nav_map, control=control),
                 spec=spec, operator=operator, start_pose=start)

    times, counts = [], []
    completed = True
    for name in COURSE_TARGETS:
        tx, ty = scene.targets[name]
        operator.set_target((tx, ty))
        leg_start = sim.clock
        commands_at_start = sim.commands

        def reached(s: SimRun, tx=tx, ty=ty) -> bool:
            x, y, _ = s.state.pose
            return math.hypot(x - tx, y - ty) <= TARGET_RADIUS

        try:
            sim.run(cfg.course_timeout, until=reached)
        except BoundsExit:
            completed = False
        times.append(sim.clock - leg_start)
        counts.append(sim.commands - commands_at_start)
        if completed and reached(sim):
            sim.log.append({"stamp": sim.clock, "type": "target_reached",
                            "target": name})
        else:
            completed = False
            break
    operator.set_target(None)
    sim.finish(completed)

    # unreached tail targets get zero-valued legs so the vectors keep shape
    while len(times) < len(COURSE_TARGETS):
        times.append(0.0)
        counts.append(0)

    metrics = RunMetrics(
        scene=scene.name, seed=cfg.seed, nav_map=cfg.nav_map, control=control,
        operator=operator.source, completed=completed,
        targets=COURSE_TARGETS,
        commands_per_target=tuple(counts), time_per_target=tuple(times),
        commands_total=sim.commands, time_total=sim.clock,
        collisions=sim.collisions, delocalizations=sim.delocalizations,
        recoveries=_count(sim.log, "recovery_entered"),
        clears=_count(sim.log, "costmap_cleared"),
        distance=sim.distance,
    )
    return metrics, sim.log


def run_manual_baseline(cfg: ExperimentConfig) -> tuple[RunMetrics, list[dict]]:
    """Same course with shared control disabled."""
    return run_target_course(cfg, control="manual")


def comparison_ratios(shared: RunMetrics, manual: RunMetrics) -> dict:
    """shared/manual as percentages; None where the baseline is zero."""
    def pct(a, b):
        return 100.0 * a / b if b else None
    return {
        "commands_pct": pct(shared.commands_total, manual.commands_total),
        "time_pct": pct(shared.time_total, manual.time_total),
    }
