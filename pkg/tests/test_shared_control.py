"""Closed-loop tests for the navigation state machine.

The robot is stepped with the true unicycle dynamics and the controller is
fed perfect pose estimates, so every behavior here is attributable to the
state machine itself rather than to localization error.
"""
import math

import numpy as np
import pytest

from teleosim.localization import PoseEstimate
from teleosim.mapping import OccupancyGrid
from teleosim.planning import INSCRIBED, CostMap, CostMapConfig
from teleosim.shared_control import (
    CMD_LEFT,
    CMD_RIGHT,
    MODE_FORWARD,
    MODE_RECOVERY,
    MODE_TURN,
    STOP,
    SharedControlConfig,
    SharedController,
)
from teleosim.world import RobotSpec, RobotState, step

SPEC = RobotSpec()
CFG = SharedControlConfig()
DT = 1.0 / CFG.tick_rate
FAR_SONAR = tuple(5.0 for _ in SPEC.sonar_ranges)


def free_grid(xmax=12.0, ymax=12.0):
    g = OccupancyGrid.for_bounds((0.0, 0.0, xmax, ymax), 0.05)
    g.logodds[:] = g.l_min
    return g


def add_box(grid, x0, y0, x1, y1):
    ix0, iy0 = grid.world_to_cell(x0, y0)
    ix1, iy1 = grid.world_to_cell(x1, y1)
    grid.logodds[iy0:iy1 + 1, ix0:ix1 + 1] = grid.l_max


def perfect_est(state, now=0.0):
    return PoseEstimate(mean=state.pose, cov=np.zeros((3, 3)), stamp=now)


def make_controller(grid, start_pose, cfg=CFG):
    cm = CostMap(grid, CostMapConfig())
    ctrl = SharedController(cm, SPEC, cfg)
    ctrl.start(0.0)
    return ctrl, RobotState(pose=start_pose, vel=(0.0, 0.0))


def drive(ctrl, state, seconds, commands=(), sonar=FAR_SONAR):
    """Run the loop; commands is a list of (time, 'left'|'right').
    Returns the final state and the (n+1, 3) pose trace."""
    cmds = sorted(commands)
    k = 0
    poses = [state.pose]
    for i in range(int(round(seconds / DT))):
        now = i * DT
        while k < len(cmds) and cmds[k][0] <= now + 1e-9:
            ctrl.handle_command(cmds[k][1], perfect_est(state, now), now)
            k += 1
        cmd = ctrl.tick(now, state, perfect_est(state, now), sonar)
        state = step(state, cmd, DT, SPEC)
        poses.append(state.pose)
    return state, np.array(poses)


def events(ctrl, kind):
    return [e for e in ctrl.state.events if e["type"] == kind]


def trace_index(stamp):
    return int(round(stamp / DT))


# -- config / lifecycle -------------------------------------------------------

def test_config_rejects_nonpositive():
    with pytest.raises(ValueError):
        SharedControlConfig(s_x=0.0)
    with pytest.raises(ValueError):
        SharedControlConfig(theta_turn=math.pi)


def test_idle_ignores_everything():
    cm = CostMap(free_grid())
    ctrl = SharedController(cm, SPEC)
    state = RobotState(pose=(6.0, 6.0, 0.0), vel=(0.0, 0.0))
    assert ctrl.tick(0.0, state, perfect_est(state), FAR_SONAR) == STOP
    ctrl.handle_command(CMD_LEFT, perfect_est(state), 0.0)
    assert ctrl.state.events == []
    assert ctrl.state.goal is None


def test_rejects_unknown_command():
    ctrl, state = make_controller(free_grid(), (6.0, 6.0, 0.0))
    with pytest.raises(ValueError):
        ctrl.handle_command("forward", perfect_est(state), 0.0)


# -- default forward behavior -------------------------------------------------

def test_forward_goals_spaced_one_step_apart():
    ctrl, state = make_controller(free_grid(xmax=20.0), (1.0, 6.0, 0.0))
    state, poses = drive(ctrl, state, 30.0)
    dispatched = events(ctrl, "goal_dispatched")
    assert all(e["origin"] == "auto-forward" for e in dispatched)
    assert len(dispatched) >= 5
    targets = np.array([e["target"] for e in dispatched])
    spacing = np.diff(targets[:, 0])
    assert np.all(spacing > 0.8) and np.all(spacing < 1.2)
    # straight-line run: stays on the corridor axis, keeps heading
    assert np.all(np.abs(targets[:, 1] - 6.0) < 0.25)
    assert np.all(np.abs(targets[:, 2]) < 0.15)
    assert state.pose[0] - 1.0 > 5.0
    assert len(events(ctrl, "recovery_entered")) == 0


def test_clear_events_spaced_by_period():
    ctrl, state = make_controller(free_grid(xmax=20.0), (1.0, 6.0, 0.0))
    drive(ctrl, state, 25.0)
    stamps = [e["stamp"] for e in events(ctrl, "costmap_cleared")]
    assert len(stamps) == 2  # t = 10 and t = 20
    diffs = np.diff([0.0] + stamps)
    assert np.all(diffs >= CFG.clear_time - DT - 1e-9)


def test_event_records_are_well_formed():
    ctrl, state = make_controller(free_grid(xmax=20.0), (1.0, 6.0, 0.0))
    drive(ctrl, state, 12.0)
    assert ctrl.state.events
    for e in ctrl.state.events:
        assert isinstance(e["type"], str)
        assert e["stamp"] >= 0.0 and math.isfinite(e["stamp"])


# -- goal validation ----------------------------------------------------------

def test_forward_goal_into_wall_recovers_without_dispatch():
    g = free_grid()
    add_box(g, 2.3, 1.0, 4.0, 3.0)  # thick wall right in front
    ctrl, state = make_controller(g, (2.0, 2.0, 0.0))
    cmd = ctrl.tick(0.0, state, perfect_est(state), FAR_SONAR)
    assert cmd == STOP
    assert ctrl.state.mode == MODE_RECOVERY
    assert events(ctrl, "goal_dispatched") == []
    rejected = events(ctrl, "goal_rejected")
    assert len(rejected) == 1 and rejected[0]["cell_cost"] >= INSCRIBED
    entered = events(ctrl, "recovery_entered")
    assert len(entered) == 1 and entered[0]["cause"] == "goal_not_free"


def test_command_goal_in_obstacle_recovers():
    g = free_grid()
    # slab so large that no free stand-in exists near the right-turn target
    add_box(g, 6.2, 4.3, 8.0, 5.7)
    ctrl, state = make_controller(g, (6.0, 6.0, 0.0))
    ctrl.handle_command(CMD_RIGHT, perfect_est(state), 0.0)
    assert ctrl.state.mode == MODE_RECOVERY
    assert events(ctrl, "goal_dispatched") == []


def test_dispatched_goals_always_below_inscribed():
    g = free_grid(xmax=16.0, ymax=16.0)
    add_box(g, 7.0, 7.0, 8.0, 8.0)
    add_box(g, 4.0, 10.0, 5.0, 11.5)
    add_box(g, 10.0, 4.0, 11.0, 5.0)
    ctrl, state = make_controller(g, (2.0, 2.0, math.radians(45.0)))
    cmds = [(3.0, CMD_LEFT), (7.0, CMD_RIGHT), (12.0, CMD_LEFT),
            (20.0, CMD_RIGHT), (28.0, CMD_LEFT)]
    drive(ctrl, state, 40.0, commands=cmds)
    dispatched = events(ctrl, "goal_dispatched")
    assert len(dispatched) >= 5
    assert all(e["cell_cost"] < INSCRIBED for e in dispatched)


# -- operator commands --------------------------------------------------------

def test_right_command_aims_minus_theta_turn():
    ctrl, state = make_controller(free_grid(), (6.0, 6.0, 0.0))
    ctrl.handle_command(CMD_RIGHT, perfect_est(state), 0.0)
    assert ctrl.state.mode == MODE_TURN
    goal = ctrl.state.goal
    assert goal.origin == "command-right"
    want = (6.0 + math.cos(-CFG.theta_turn), 6.0 + math.sin(-CFG.theta_turn))
    assert goal.target[0] == pytest.approx(want[0], abs=1e-9)
    assert goal.target[1] == pytest.approx(want[1], abs=1e-9)
    assert goal.target[2] == pytest.approx(-CFG.theta_turn, abs=1e-9)


def test_second_command_supersedes_first():
    ctrl, state = make_controller(free_grid(), (6.0, 6.0, 0.0))
    ctrl.handle_command(CMD_LEFT, perfect_est(state), 0.0)
    first = ctrl.state.goal
    ctrl.handle_command(CMD_LEFT, perfect_est(state), 0.1)
    canceled = events(ctrl, "goal_canceled")
    assert len(canceled) == 1 and canceled[0]["cause"] == "superseded"
    assert len(events(ctrl, "goal_dispatched")) == 2
    assert ctrl.state.goal is not first
    assert ctrl.state.goal.target[2] == pytest.approx(CFG.theta_turn)


def test_turn_goal_reached_then_forward_resumes():
    ctrl, state = make_controller(free_grid(xmax=16.0, ymax=16.0),
                                  (6.0, 6.0, 0.0))
    state, poses = drive(ctrl, state, 15.0, commands=[(0.0, CMD_LEFT)])
    reached = [e for e in events(ctrl, "goal_reached")
               if e["origin"] == "command-left"]
    assert len(reached) == 1
    after = [e for e in events(ctrl, "goal_dispatched")
             if e["stamp"] > reached[0]["stamp"]]
    assert after and all(e["origin"] == "auto-forward" for e in after)
    # the whole run proceeds along the +45 deg ray once the turn is done
    assert abs(state.pose[2] - CFG.theta_turn) < math.radians(25.0)
    assert len(events(ctrl, "recovery_entered")) == 0


# -- recovery -----------------------------------------------------------------

def half_wall_grid():
    """Free west half, solid east half: the forward proposal from (6, 6, 0)
    lands too deep inside the wall for any free stand-in to exist, so the
    first tick is guaranteed to reject it and recover."""
    g = free_grid()
    add_box(g, 6.5, 0.05, 11.9, 11.9)
    return g


def blocked_rear_sonar():
    """A wall inside stop range behind the robot, everything else clear."""
    return tuple(0.2 if abs(ang) > 2.0 else 5.0
                 for ang, _ in SPEC.sonar_ranges)


def test_recovery_profile_reverse_then_ccw():
    ctrl, state = make_controller(half_wall_grid(), (6.0, 6.0, 0.0))
    state, poses = drive(ctrl, state, 12.0)
    entered = events(ctrl, "recovery_entered")
    exited = events(ctrl, "recovery_exited")
    assert entered and exited
    assert entered[0]["cause"] == "goal_not_free"
    assert exited[0]["rotation"] >= CFG.a_recovery - 1e-9
    i0, i1 = trace_index(entered[0]["stamp"]), trace_index(exited[0]["stamp"])
    dx = poses[i1, 0] - poses[i0, 0]
    dy = poses[i1, 1] - poses[i0, 1]
    dth = poses[i1, 2] - poses[i0, 2]
    # reverse leg: about v_back * t_back along -x, nothing sideways
    assert -0.25 < dx < -0.15
    assert abs(dy) < 0.05
    # rotation leg: reaches A and never swings clockwise
    assert CFG.a_recovery - 1e-6 <= dth <= CFG.a_recovery + 0.1
    assert np.min(np.diff(poses[i0:i1 + 1, 2])) > -1e-9
    # afterwards the machine is placing goals again
    later = [e for e in events(ctrl, "goal_dispatched")
             if e["stamp"] > exited[0]["stamp"]]
    assert later


def test_recovery_reverse_aborts_on_rear_sonar():
    ctrl, state = make_controller(half_wall_grid(), (6.0, 6.0, 0.0))
    state, poses = drive(ctrl, state, 8.0, sonar=blocked_rear_sonar())
    entered = events(ctrl, "recovery_entered")
    exited = events(ctrl, "recovery_exited")
    assert entered and exited
    i0 = trace_index(entered[0]["stamp"])
    i1 = trace_index(exited[0]["stamp"])
    dxy = math.hypot(poses[i1, 0] - poses[i0, 0], poses[i1, 1] - poses[i0, 1])
    assert dxy < 0.02  # no reverse leg to speak of
    assert poses[i1, 2] - poses[i0, 2] >= CFG.a_recovery - 1e-6


def test_repeated_recoveries_accumulate_ccw():
    # free pocket inside solid rock: no goal can ever be placed, and the
    # blocked rear sonar pins the robot in place, so the run is nothing but
    # recovery cycles rotating on the spot
    g = free_grid()
    g.logodds[:] = g.l_max
    yy, xx = np.mgrid[0:g.height, 0:g.width]
    cx = (xx + 0.5) * g.resolution + g.origin[0]
    cy = (yy + 0.5) * g.resolution + g.origin[1]
    g.logodds[np.hypot(cx - 6.0, cy - 6.0) < 0.45] = g.l_min
    ctrl, state = make_controller(g, (6.0, 6.0, 0.0))
    state, poses = drive(ctrl, state, 30.0, sonar=blocked_rear_sonar())
    entered = events(ctrl, "recovery_entered")
    exited = events(ctrl, "recovery_exited")
    assert len(entered) >= 3 and len(exited) >= 3
    total = sum(e["rotation"] for e in exited[:3])
    assert total >= 3 * CFG.a_recovery - 1e-6
    # heading never moves clockwise at any point of the whole run
    assert np.min(np.diff(np.unwrap(poses[:, 2]))) > -1e-9
    assert events(ctrl, "goal_dispatched") == []


def test_commands_during_recovery_queue_newest_wins():
    ctrl, state = make_controller(half_wall_grid(), (6.0, 6.0, 0.0))
    cmds = [(0.5, CMD_LEFT), (1.0, CMD_RIGHT)]
    state, poses = drive(ctrl, state, 10.0, commands=cmds)
    assert len(events(ctrl, "command_queued")) == 2
    dropped = events(ctrl, "command_dropped")
    assert len(dropped) == 1 and dropped[0]["command"] == CMD_LEFT
    exited = events(ctrl, "recovery_exited")
    assert exited
    dispatched = events(ctrl, "goal_dispatched")
    assert dispatched and dispatched[0]["origin"] == "command-right"
    assert dispatched[0]["stamp"] >= exited[0]["stamp"]
    assert all(e["origin"] != "command-left" for e in dispatched)


def test_goal_timeout_enters_recovery():
    ctrl, _ = make_controller(free_grid(), (6.0, 6.0, 0.0))
    frozen = RobotState(pose=(6.0, 6.0, 0.0), vel=(0.0, 0.0))
    for i in range(int(round(16.0 / DT))):
        now = i * DT
        # wheels jammed: the robot never actually moves
        ctrl.tick(now, frozen, perfect_est(frozen, now), FAR_SONAR)
    entered = events(ctrl, "recovery_entered")
    assert len(entered) == 1
    assert entered[0]["cause"] == "goal_timeout"
    assert CFG.goal_timeout < entered[0]["stamp"] <= CFG.goal_timeout + 1.0
    canceled = events(ctrl, "goal_canceled")
    assert len(canceled) == 1 and canceled[0]["cause"] == "goal_timeout"
