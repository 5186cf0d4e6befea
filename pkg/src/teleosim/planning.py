"""Layered costmap plus the two planners that drive goals: Dijkstra over the
grid for the global path, Dynamic Window Approach for velocity commands.

Costs are the usual 0..254 scale: LETHAL (254) marks obstacle cells,
INSCRIBED (253) marks cells whose center puts the robot body in contact.
Unknown map cells are treated as INSCRIBED so plans stay on mapped floor.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra as csgraph_dijkstra

from .geometry import angle_diff
from .mapping import OccupancyGrid

LETHAL = 254
INSCRIBED = 253


class VelocityCommand(NamedTuple):
    v: float
    omega: float


@dataclass(frozen=True)
class CostMapConfig:
    inscribed_radius: float = 0.24
    inflation_radius: float = 1.0
    decay: float = 3.0
    w_cost: float = 3.0  # distance-vs-cost weighting for global planning

    def __post_init__(self):
        if not (0.0 < self.inscribed_radius <= self.inflation_radius):
            raise ValueError("need 0 < inscribed_radius <= inflation_radius")


@dataclass(frozen=True)
class DwaConfig:
    v_samples: int = 21
    w_samples: int = 41
    horizon: float = 1.5
    dt_sim: float = 0.1
    dt_window: float = 0.05   # one control tick bounds the reachable window
    alpha_heading: float = 0.8
    beta_clearance: float = 0.1
    gamma_velocity: float = 0.1
    max_lin_vel: float = 0.5
    max_ang_vel: float = 1.0
    lin_accel: float = 0.5
    ang_accel: float = 1.0

    def __post_init__(self):
        w = (self.alpha_heading, self.beta_clearance, self.gamma_velocity)
        if any(x < 0 for x in w) or sum(w) == 0:
            raise ValueError("weights must be >= 0 and not all zero")
        if self.horizon < self.dt_sim:
            raise ValueError("horizon must cover at least one dt_sim")


@dataclass
class Path:
    cells: list[tuple[int, int]]
    points: np.ndarray  # (n, 2) world coordinates of cell centers
    total_cost: float


class CostMap:
    """Static + live-obstacle + inflation layers, combined by cell-wise max.

    The distance field driving inflation doubles as the DWA clearance
    lookup; it is recomputed only when the set of lethal cells changes.
    """

    def __init__(self, grid: OccupancyGrid, cfg: CostMapConfig = CostMapConfig()):
        self.cfg = cfg
        self.resolution = grid.resolution
        self.origin = grid.origin
        self.width = grid.width
        self.height = grid.height
        static = np.zeros((grid.height, grid.width), dtype=np.uint8)
        static[grid.unknown_mask()] = INSCRIBED
        static[grid.occupied_mask()] = LETHAL
        self.static = static
        self.obstacle = np.zeros_like(static)
        self.inflation = np.zeros_like(static)
        self.obstacle_distance = np.zeros((grid.height, grid.width))
        self._lethal_cache = None
        self._refresh()

    # -- layers ------------------------------------------------------------

    def _refresh(self) -> None:
        lethal = (self.static == LETHAL) | (self.obstacle == LETHAL)
        if self._lethal_cache is not None and np.array_equal(lethal, self._lethal_cache):
            return
        self._lethal_cache = lethal
        if lethal.any():
            dist = distance_transform_edt(~lethal) * self.resolution
        else:
            dist = np.full(lethal.shape, np.inf)
        self.obstacle_distance = dist
        cfg = self.cfg
        infl = np.zeros(lethal.shape, dtype=np.uint8)
        ring = (dist > cfg.inscribed_radius) & (dist <= cfg.inflation_radius)
        infl[ring] = np.rint(
            np.exp(-cfg.decay * (dist[ring] - cfg.inscribed_radius)) * (INSCRIBED - 1)
        ).astype(np.uint8)
        infl[dist <= cfg.inscribed_radius] = INSCRIBED
        self.inflation = infl
        self.combined = np.maximum(np.maximum(self.static, self.obstacle),
                                   self.inflation)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor((x - self.origin[0]) / self.resolution)),
                int(math.floor((y - self.origin[1]) / self.resolution)))

    def cell_to_world(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin[0] + (ix + 0.5) * self.resolution,
                self.origin[1] + (iy + 0.5) * self.resolution)

    def in_map(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def cost_at(self, x: float, y: float) -> int:
        ix, iy = self.world_to_cell(x, y)
        if not self.in_map(ix, iy):
            return LETHAL
        return int(self.combined[iy, ix])


def update_obstacle_layer(cm: CostMap, scan, pose) -> CostMap:
    """Mark live scan endpoints LETHAL and clear traversed cells, touching
    only the obstacle layer."""
    x, y, th = pose
    angles = th + np.asarray(scan.angles)
    ranges = np.asarray(scan.ranges, dtype=float)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    hit = ranges < scan.max_range

    ox, oy = cm.origin
    res = cm.resolution
    hi_x = ox + cm.width * res - 1e-9
    hi_y = oy + cm.height * res - 1e-9
    with np.errstate(divide="ignore"):
        tx = np.where(dirs[:, 0] > 0, (hi_x - x) / dirs[:, 0],
                      np.where(dirs[:, 0] < 0, (ox - x) / dirs[:, 0], np.inf))
        ty = np.where(dirs[:, 1] > 0, (hi_y - y) / dirs[:, 1],
                      np.where(dirs[:, 1] < 0, (oy - y) / dirs[:, 1], np.inf))
    t_exit = np.maximum(np.minimum(tx, ty), 0.0)
    lens = np.minimum(ranges, t_exit)

    step = 0.5 * res
    n_steps = int(np.max(lens, initial=0.0) / step) + 1
    ts = np.arange(n_steps) * step
    sample_t = np.minimum(ts[None, :], lens[:, None])
    px = np.clip(x + dirs[:, 0:1] * sample_t, ox, hi_x)
    py = np.clip(y + dirs[:, 1:2] * sample_t, oy, hi_y)
    ix = np.floor((px - ox) / res).astype(np.int64).ravel()
    iy = np.floor((py - oy) / res).astype(np.int64).ravel()
    cm.obstacle[iy, ix] = 0

    hit_in = hit & (ranges <= t_exit)
    if np.any(hit_in):
        ex = x + dirs[hit_in, 0] * ranges[hit_in]
        ey = y + dirs[hit_in, 1] * ranges[hit_in]
        eix = np.floor((ex - ox) / res).astype(np.int64)
        eiy = np.floor((ey - oy) / res).astype(np.int64)
        cm.obstacle[eiy, eix] = LETHAL
    cm._refresh()
    return cm


def clear_obstacle_layer(cm: CostMap) -> CostMap:
    """Drop every live obstacle; static obstacles survive."""
    cm.obstacle[:] = 0
    cm._refresh()
    return cm


def is_free_cell(cm: CostMap, pose) -> bool:
    """Goal guard: the cell under the pose costs less than INSCRIBED."""
    ix, iy = cm.world_to_cell(pose[0], pose[1])
    if not cm.in_map(ix, iy):
        return False
    return cm.combined[iy, ix] < INSCRIBED


_NEIGHBORS = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, 1), (1, -1), (-1, 1), (-1, -1)]


def plan_global(cm: CostMap, start, goal) -> Path | None:
    """Minimum-cost 8-connected path; edge cost = step length scaled by the
    destination cell's cost. Returns None when the goal is unreachable or
    not a free cell."""
    six, siy = cm.world_to_cell(start[0], start[1])
    gix, giy = cm.world_to_cell(goal[0], goal[1])
    if not cm.in_map(six, siy) or cm.combined[siy, six] >= LETHAL:
        raise ValueError("start cell is lethal or off-map")
    if not cm.in_map(gix, giy) or cm.combined[giy, gix] >= INSCRIBED:
        return None
    w, h = cm.width, cm.height
    start_id = siy * w + six
    goal_id = giy * w + gix
    if start_id == goal_id:
        return Path(cells=[(six, siy)],
                    points=np.array([cm.cell_to_world(six, siy)]),
                    total_cost=0.0)

    free = cm.combined < INSCRIBED
    free[siy, six] = True  # the robot may start inside the inflation ring
    cost = cm.combined.astype(float)
    res = cm.resolution
    rows, cols, data = [], [], []
    for dx, dy in _NEIGHBORS:
        step_len = res * math.hypot(dx, dy)
        src = free[max(0, -dy):h - max(0, dy), max(0, -dx):w - max(0, dx)]
        dst = free[max(0, dy):h - max(0, -dy), max(0, dx):w - max(0, -dx)]
        ok = src & dst
        sy, sx = np.nonzero(ok)
        sy = sy + max(0, -dy)
        sx = sx + max(0, -dx)
        dcost = cost[sy + dy, sx + dx]
        rows.append(sy * w + sx)
        cols.append((sy + dy) * w + (sx + dx))
        data.append(step_len * (1.0 + dcost / 254.0 * cm.cfg.w_cost))
    graph = csr_matrix(
        (np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))),
        shape=(w * h, w * h))
    dist, pred = csgraph_dijkstra(graph, indices=start_id,
                                  return_predecessors=True, directed=True)
    if not np.isfinite(dist[goal_id]):
        return None
    cells = []
    node = goal_id
    while node != start_id:
        cells.append((node % w, node // w))
        node = pred[node]
        if node < 0:
            return None
    cells.append((six, siy))
    cells.reverse()
    points = np.array([cm.cell_to_world(ix, iy) for ix, iy in cells])
    return Path(cells=cells, points=points, total_cost=float(dist[goal_id]))


def plan_local_dwa(state, carrot, cm: CostMap,
                   cfg: DwaConfig = DwaConfig()) -> VelocityCommand | None:
    """One DWA step: sample the reachable (v, w) window, roll each pair out
    over the horizon, drop inadmissible arcs, score the rest. Returns None
    when nothing is admissible (the caller's cue to recover)."""
    v0, w0 = state.vel
    x, y, th = state.pose
    v_lo = max(0.0, v0 - cfg.lin_accel * cfg.dt_window)
    v_hi = min(cfg.max_lin_vel, v0 + cfg.lin_accel * cfg.dt_window)
    w_lo = max(-cfg.max_ang_vel, w0 - cfg.ang_accel * cfg.dt_window)
    w_hi = min(cfg.max_ang_vel, w0 + cfg.ang_accel * cfg.dt_window)
    if v_hi < v_lo or w_hi < w_lo:
        return None
    vs = np.linspace(v_lo, v_hi, cfg.v_samples)
    ws = np.linspace(w_lo, w_hi, cfg.w_samples)
    vv, ww = np.meshgrid(vs, ws, indexing="ij")
    vv, ww = vv.ravel(), ww.ravel()

    n_t = int(round(cfg.horizon / cfg.dt_sim))
    t = (np.arange(1, n_t + 1) * cfg.dt_sim)[None, :]
    wt = ww[:, None] * t
    straight = np.abs(ww[:, None]) < 1e-9
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(straight, 0.0, vv[:, None] / np.where(straight, 1.0, ww[:, None]))
    xs = np.where(straight, x + vv[:, None] * t * math.cos(th),
                  x + r * (np.sin(th + wt) - math.sin(th)))
    ys = np.where(straight, y + vv[:, None] * t * math.sin(th),
                  y - r * (np.cos(th + wt) - math.cos(th)))
    ths = th + wt

    res = cm.resolution
    ix = np.floor((xs - cm.origin[0]) / res).astype(np.int64)
    iy = np.floor((ys - cm.origin[1]) / res).astype(np.int64)
    inside = (ix >= 0) & (ix < cm.width) & (iy >= 0) & (iy < cm.height)
    costs = np.full(ix.shape, float(LETHAL))
    costs[inside] = cm.combined[iy[inside], ix[inside]]
    dist = np.zeros(ix.shape)
    dist[inside] = cm.obstacle_distance[iy[inside], ix[inside]]
    clearance = np.maximum(dist - cm.cfg.inscribed_radius, 0.0)
    clearance[~inside] = 0.0
    # clearance beyond one horizon of travel is all the same; capping also
    # keeps obstacle-free maps (infinite distances) finite
    clear_cap = cfg.max_lin_vel * cfg.horizon
    arc_clear = np.minimum(clearance.min(axis=1), clear_cap)

    stopping = vv ** 2 / (2.0 * cfg.lin_accel)
    admissible = (costs < INSCRIBED).all(axis=1) & (arc_clear > stopping)
    if not np.any(admissible):
        return None

    # alignment of each arc's final heading with the direction the carrot
    # lies in NOW; measuring the bearing from the arc end instead would flip
    # by pi for any arc long enough to pass the carrot, which punishes
    # exactly the speeds that make progress
    end_th = ths[:, -1]
    desired = math.atan2(carrot[1] - y, carrot[0] - x)
    herr = np.abs(np.mod(desired - end_th + math.pi, 2 * math.pi) - math.pi)
    heading = math.pi - herr

    def norm(term):
        t_adm = term[admissible]
        lo, hi = t_adm.min(), t_adm.max()
        if not np.isfinite(hi - lo) or hi - lo < 1e-12:
            return np.zeros_like(term)
        return (term - lo) / (hi - lo)

    score = (cfg.alpha_heading * norm(heading)
             + cfg.beta_clearance * norm(arc_clear)
             + cfg.gamma_velocity * norm(vv))
    score[~admissible] = -np.inf
    # argmax with deterministic ties: higher v, then smaller |w|, then smaller w
    order = np.lexsort((ww, np.abs(ww), -vv, -score))
    best = order[0]
    return VelocityCommand(float(vv[best]), float(ww[best]))
