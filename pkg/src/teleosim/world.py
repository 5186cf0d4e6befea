"""Ground-truth world model: scene geometry, robot kinematics, simulated sensors.

Obstacles are vertical prisms (convex footprint extruded over a height
interval), which is what lets the 2D laser and the depth sensor disagree
about what exists: the laser only sees prisms crossing its scan height,
the depth sensor sees everything below the robot's own height.
"""
from __future__ import annotations

import json
import math
import weakref
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    clip_segment_to_rect,
    convex_polygons_intersect,
    is_convex_ccw,
    normalize_angle,
    oriented_rect,
    point_in_convex,
    polygon_edges,
    rays_segments_hits,
)

SCENE_FORMAT = "scene/1"
TARGET_NAMES = ("S", "R", "T1", "T2", "T3")

# simulation tick; every module is driven from this clock
TICK_DT = 0.05


@dataclass(frozen=True)
class Prism:
    """Convex CCW footprint extruded over [z_lo, z_hi]."""

    footprint: tuple[tuple[float, float], ...]
    z_lo: float
    z_hi: float
    tag: str = ""

    def __post_init__(self):
        poly = np.asarray(self.footprint, dtype=float)
        if poly.ndim != 2 or poly.shape[0] < 3 or poly.shape[1] != 2:
            raise ValueError("footprint needs at least 3 (x, y) vertices")
        if not np.all(np.isfinite(poly)):
            raise ValueError("footprint has non-finite vertices")
        if not is_convex_ccw(poly):
            raise ValueError(f"footprint must be simple, convex, CCW ({self.tag!r})")
        if not (0.0 <= self.z_lo < self.z_hi):
            raise ValueError(f"need 0 <= z_lo < z_hi, got [{self.z_lo}, {self.z_hi}]")

    @property
    def polygon(self) -> np.ndarray:
        return np.asarray(self.footprint, dtype=float)

    def overlaps_band(self, lo: float, hi: float) -> bool:
        return self.z_lo < hi and self.z_hi > lo


@dataclass(frozen=True, eq=False)
class SceneModel:
    """Static world: rectangular bounds, prisms, named target points."""

    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    obstacles: tuple[Prism, ...]
    targets: dict[str, tuple[float, float]]
    name: str = "scene"

    def __post_init__(self):
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmin < xmax and ymin < ymax):
            raise ValueError("degenerate bounds")
        for p in self.obstacles:
            poly = p.polygon
            if (poly[:, 0].min() < xmin - 1e-9 or poly[:, 0].max() > xmax + 1e-9
                    or poly[:, 1].min() < ymin - 1e-9 or poly[:, 1].max() > ymax + 1e-9):
                raise ValueError(f"obstacle {p.tag!r} outside scene bounds")
        missing = [t for t in TARGET_NAMES if t not in self.targets]
        if missing:
            raise ValueError(f"missing targets: {missing}")

    def inside_bounds(self, x: float, y: float) -> bool:
        xmin, ymin, xmax, ymax = self.bounds
        return xmin <= x <= xmax and ymin <= y <= ymax


@dataclass(frozen=True)
class RobotSpec:
    """Platform geometry, kinematic limits and sensor mounting."""

    length: float = 0.480
    width: float = 0.425
    height: float = 1.21
    laser_height: float = 0.20
    max_lin_vel: float = 0.5
    max_ang_vel: float = 1.0
    lin_accel: float = 0.5
    ang_accel: float = 1.0
    # (mount angle rad in robot frame, max range m): front, two front
    # whiskers for oblique obstacles, rear
    sonar_ranges: tuple[tuple[float, float], ...] = (
        (0.0, 2.0), (0.6, 2.0), (-0.6, 2.0), (math.pi, 2.0))
    # laser: 241 beams over 240 deg, Hokuyo-like envelope
    laser_beams: int = 241
    laser_fov: float = math.radians(240.0)
    laser_max_range: float = 5.6
    laser_min_range: float = 0.02
    laser_sigma: float = 0.01
    # forward depth camera frustum
    depth_fov: float = 1.0
    depth_max_range: float = 3.5
    depth_sample_step: float = 0.05

    def __post_init__(self):
        for name in ("length", "width", "height", "max_lin_vel", "max_ang_vel",
                     "lin_accel", "ang_accel"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be strictly positive")
        if not self.laser_height < self.height:
            raise ValueError("laser_height must be below robot height")

    def footprint_at(self, x: float, y: float, theta: float) -> np.ndarray:
        return oriented_rect(x, y, theta, self.length, self.width)

    @property
    def inscribed_radius(self) -> float:
        # conservative: circle covering the long half-dimension
        return 0.5 * self.length


@dataclass(frozen=True)
class RobotState:
    pose: tuple[float, float, float]  # x, y, theta
    vel: tuple[float, float]          # v, omega
    clock: float = 0.0

    def __post_init__(self):
        vals = (*self.pose, *self.vel, self.clock)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError("non-finite robot state")
        x, y, th = self.pose
        object.__setattr__(self, "pose", (x, y, normalize_angle(th)))


@dataclass(frozen=True)
class LidarScan:
    stamp: float
    angle_min: float
    angle_max: float
    angle_step: float
    ranges: np.ndarray
    max_range: float

    def __post_init__(self):
        expected = int(math.floor((self.angle_max - self.angle_min) / self.angle_step + 1e-9)) + 1
        if len(self.ranges) != expected:
            raise ValueError(f"expected {expected} beams, got {len(self.ranges)}")

    @property
    def angles(self) -> np.ndarray:
        return self.angle_min + self.angle_step * np.arange(len(self.ranges))


# ---------------------------------------------------------------------------
# scene index: per-scene precomputed edge soups, keyed by object identity

class _SceneIndex:
    def __init__(self, scene: SceneModel):
        self.prisms = scene.obstacles
        self.polys = [p.polygon for p in scene.obstacles]
        self.edge_cache: dict[tuple[float, float], np.ndarray] = {}
        self.aabbs = (
            np.array([[p[:, 0].min(), p[:, 1].min(), p[:, 0].max(), p[:, 1].max()]
                      for p in self.polys])
            if self.polys else np.zeros((0, 4))
        )

    def edges_for_band(self, lo: float, hi: float) -> np.ndarray:
        key = (lo, hi)
        cached = self.edge_cache.get(key)
        if cached is None:
            segs = [polygon_edges(p.polygon) for p in self.prisms if p.overlaps_band(lo, hi)]
            cached = np.concatenate(segs, axis=0) if segs else np.zeros((0, 2, 2))
            self.edge_cache[key] = cached
        return cached

    def edges_at_height(self, z: float) -> np.ndarray:
        key = (z, z)
        cached = self.edge_cache.get(key)
        if cached is None:
            segs = [polygon_edges(p.polygon) for p in self.prisms if p.z_lo <= z < p.z_hi]
            cached = np.concatenate(segs, axis=0) if segs else np.zeros((0, 2, 2))
            self.edge_cache[key] = cached
        return cached


_INDEXES: "weakref.WeakKeyDictionary[SceneModel, _SceneIndex]" = weakref.WeakKeyDictionary()


def _index(scene: SceneModel) -> _SceneIndex:
    idx = _INDEXES.get(scene)
    if idx is None:
        idx = _SceneIndex(scene)
        _INDEXES[scene] = idx
    return idx


# ---------------------------------------------------------------------------
# operations

def step(state: RobotState, cmd, dt: float, spec: RobotSpec) -> RobotState:
    """Advance the unicycle one tick; velocities slew toward cmd at the
    acceleration limits, pose integrates the clamped velocities exactly."""
    if not (dt > 0.0) or not math.isfinite(dt):
        raise ValueError("dt must be positive and finite")
    cv, cw = float(cmd[0]), float(cmd[1])
    if not (math.isfinite(cv) and math.isfinite(cw)):
        raise ValueError("non-finite velocity command")
    v0, w0 = state.vel
    v = v0 + max(-spec.lin_accel * dt, min(spec.lin_accel * dt, cv - v0))
    w = w0 + max(-spec.ang_accel * dt, min(spec.ang_accel * dt, cw - w0))
    v = max(-spec.max_lin_vel, min(spec.max_lin_vel, v))
    w = max(-spec.max_ang_vel, min(spec.max_ang_vel, w))
    x, y, th = state.pose
    if abs(w) < 1e-9:
        x += v * math.cos(th) * dt
        y += v * math.sin(th) * dt
        th2 = th + w * dt
    else:
        th2 = th + w * dt
        r = v / w
        x += r * (math.sin(th2) - math.sin(th))
        y -= r * (math.cos(th2) - math.cos(th))
    return RobotState(pose=(x, y, th2), vel=(v, w), clock=state.clock + dt)


def simulate_lidar(scene: SceneModel, pose, spec: RobotSpec,
                   rng: np.random.Generator) -> LidarScan:
    """Planar scan at laser height: per beam the nearest prism-edge hit,
    Gaussian range noise on hits, max_range where nothing intersects."""
    x, y, th = pose
    if not scene.inside_bounds(x, y):
        raise ValueError(f"lidar pose ({x:.2f}, {y:.2f}) outside scene bounds")
    edges = _index(scene).edges_at_height(spec.laser_height)
    half = 0.5 * spec.laser_fov
    n = spec.laser_beams
    step_a = spec.laser_fov / (n - 1)
    angles = th - half + step_a * np.arange(n)
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    dist = rays_segments_hits(np.array([x, y], dtype=float), dirs, edges)
    hit = dist < spec.laser_max_range
    ranges = np.full(n, spec.laser_max_range)
    if np.any(hit):
        r = dist[hit]
        if spec.laser_sigma > 0.0:
            r = r + rng.normal(0.0, spec.laser_sigma, size=r.shape)
        ranges[hit] = np.clip(r, spec.laser_min_range, spec.laser_max_range)
    return LidarScan(
        stamp=0.0, angle_min=-half, angle_max=half, angle_step=step_a,
        ranges=ranges, max_range=spec.laser_max_range,
    )


def simulate_depth(scene: SceneModel, pose, spec: RobotSpec,
                   rng: np.random.Generator) -> np.ndarray:
    """Surface samples (robot frame, (n, 3)) of prisms inside the forward
    frustum, for every prism overlapping [0, robot height] - including the
    ones the planar laser cannot see."""
    x, y, th = pose
    if not scene.inside_bounds(x, y):
        raise ValueError(f"depth pose ({x:.2f}, {y:.2f}) outside scene bounds")
    ds = spec.depth_sample_step
    eps = 1e-6  # bias surface samples into the solid so voxelization of
    # grid-aligned faces never claims the free-space side of the boundary
    cos_t, sin_t = math.cos(th), math.sin(th)
    chunks = []
    for prism in scene.obstacles:
        if not prism.overlaps_band(0.0, spec.height):
            continue
        z_lo = max(prism.z_lo, 0.0)
        z_hi = min(prism.z_hi, spec.height)
        zs = np.arange(z_lo, z_hi + 1e-9, ds)
        poly = prism.polygon
        local = []
        # side faces: edge-length x height grids
        for a, b in zip(poly, np.roll(poly, -1, axis=0)):
            elen = math.hypot(b[0] - a[0], b[1] - a[1])
            ts = np.arange(0.0, elen + 1e-9, ds) / max(elen, 1e-12)
            px = a[0] + (b[0] - a[0]) * ts
            py = a[1] + (b[1] - a[1]) * ts
            local.append(np.stack(
                [np.repeat(px, len(zs)), np.repeat(py, len(zs)),
                 np.tile(zs, len(ts))], axis=1))
        # top face, if it is below the robot's height
        if prism.z_hi <= spec.height + 1e-9:
            xs = np.arange(poly[:, 0].min(), poly[:, 0].max() + 1e-9, ds)
            ys = np.arange(poly[:, 1].min(), poly[:, 1].max() + 1e-9, ds)
            gx, gy = np.meshgrid(xs, ys, indexing="ij")
            pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
            inside = np.array([point_in_convex(poly, p) for p in pts])
            if np.any(inside):
                top = pts[inside]
                local.append(np.column_stack(
                    [top, np.full(len(top), prism.z_hi)]))
        samples = np.concatenate(local, axis=0)
        centroid = poly.mean(axis=0)
        pull = centroid - samples[:, :2]
        norm = np.maximum(np.hypot(pull[:, 0], pull[:, 1]), eps)
        samples[:, :2] += eps * pull / norm[:, None]
        samples[:, 2] = np.clip(samples[:, 2], z_lo + eps, z_hi - eps)
        chunks.append(samples)
    if not chunks:
        return np.zeros((0, 3))
    world = np.concatenate(chunks, axis=0)
    # to robot frame
    dx = world[:, 0] - x
    dy = world[:, 1] - y
    xr = cos_t * dx + sin_t * dy
    yr = -sin_t * dx + cos_t * dy
    dist = np.hypot(xr, yr)
    keep = (xr > 1e-9) & (dist <= spec.depth_max_range) & (
        np.abs(np.arctan2(yr, xr)) <= 0.5 * spec.depth_fov)
    pts = np.column_stack([xr, yr, world[:, 2]])[keep]
    return pts


def check_collision(scene: SceneModel, pose, spec: RobotSpec) -> bool:
    """Footprint-vs-prism overlap over the robot's height band; contact on
    the boundary counts."""
    x, y, th = pose
    rect = spec.footprint_at(x, y, th)
    idx = _index(scene)
    if not idx.prisms:
        return False
    rx0, ry0 = rect[:, 0].min(), rect[:, 1].min()
    rx1, ry1 = rect[:, 0].max(), rect[:, 1].max()
    near = ~((idx.aabbs[:, 2] < rx0) | (idx.aabbs[:, 0] > rx1)
             | (idx.aabbs[:, 3] < ry0) | (idx.aabbs[:, 1] > ry1))
    for i in np.flatnonzero(near):
        prism = idx.prisms[i]
        if not prism.overlaps_band(0.0, spec.height):
            continue
        if convex_polygons_intersect(rect, idx.polys[i]):
            return True
    return False


def simulate_sonar(scene: SceneModel, pose, spec: RobotSpec) -> list[float]:
    """One range per mounted sonar, cone reduced to a single ray; obstacles
    entirely above the robot are ignored."""
    x, y, th = pose
    edges = _index(scene).edges_for_band(0.0, spec.height)
    out = []
    for mount, max_r in spec.sonar_ranges:
        d = np.array([[math.cos(th + mount), math.sin(th + mount)]])
        t = rays_segments_hits(np.array([x, y], dtype=float), d, edges)[0]
        out.append(min(float(t), max_r))
    return out


# ---------------------------------------------------------------------------
# scene file I/O

def scene_to_dict(scene: SceneModel) -> dict:
    return {
        "format": SCENE_FORMAT,
        "name": scene.name,
        "bounds": list(scene.bounds),
        "obstacles": [
            {"polygon": [list(v) for v in p.footprint],
             "z": [p.z_lo, p.z_hi], "tag": p.tag}
            for p in scene.obstacles
        ],
        "targets": {k: list(v) for k, v in scene.targets.items()},
    }


def scene_from_dict(doc: dict) -> SceneModel:
    if doc.get("format") != SCENE_FORMAT:
        raise ValueError(f"unsupported scene format {doc.get('format')!r}")
    obstacles = tuple(
        Prism(
            footprint=tuple((float(x), float(y)) for x, y in o["polygon"]),
            z_lo=float(o["z"][0]), z_hi=float(o["z"][1]),
            tag=o.get("tag", ""),
        )
        for o in doc["obstacles"]
    )
    return SceneModel(
        bounds=tuple(float(v) for v in doc["bounds"]),
        obstacles=obstacles,
        targets={k: (float(v[0]), float(v[1])) for k, v in doc["targets"].items()},
        name=doc.get("name", "scene"),
    )


def load_scene(path) -> SceneModel:
    with open(path) as f:
        return scene_from_dict(json.load(f))


def save_scene(scene: SceneModel, path) -> None:
    with open(path, "w") as f:
        json.dump(scene_to_dict(scene), f, indent=2)
        f.write("\n")
