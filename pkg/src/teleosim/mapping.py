"""Two-map building: laser-slice occupancy grid plus a navigation grid that
also knows about obstacles the planar laser cannot see.

The localization grid integrates scans with an additive log-odds model. The
navigation grid starts as a copy and is enriched by down-projecting a dense
voxel grid filled from depth samples, so tabletops (not just table legs)
block planned paths.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .world import RobotSpec, SceneModel, simulate_depth, simulate_lidar

MAP_FORMAT = "map/1"
BUNDLE_FORMAT = "map-bundle/1"

# trinary PGM pixel values
PGM_OCCUPIED = 0
PGM_FREE = 254
PGM_UNKNOWN = 205


@dataclass
class OccupancyGrid:
    """Log-odds grid; logodds[iy, ix], cell (0, 0) at origin, row-major."""

    resolution: float
    origin: tuple[float, float]
    width: int
    height: int
    logodds: np.ndarray
    l_min: float = -5.0
    l_max: float = 5.0
    occupied_thresh: float = 0.5
    free_thresh: float = -0.5

    def __post_init__(self):
        if self.logodds.shape != (self.height, self.width):
            raise ValueError("logodds shape must be (height, width)")
        if not (self.free_thresh < 0.0 < self.occupied_thresh):
            raise ValueError("need free_thresh < 0 < occupied_thresh")
        if not (self.l_min < self.free_thresh and self.occupied_thresh < self.l_max):
            raise ValueError("clamp range must bracket the thresholds")

    @classmethod
    def blank(cls, origin, width, height, resolution, **kw) -> "OccupancyGrid":
        return cls(resolution=resolution, origin=(float(origin[0]), float(origin[1])),
                   width=width, height=height,
                   logodds=np.zeros((height, width)), **kw)

    @classmethod
    def for_bounds(cls, bounds, resolution, margin=0.5, **kw) -> "OccupancyGrid":
        xmin, ymin, xmax, ymax = bounds
        w = int(math.ceil((xmax - xmin + 2 * margin) / resolution))
        h = int(math.ceil((ymax - ymin + 2 * margin) / resolution))
        return cls.blank((xmin - margin, ymin - margin), w, h, resolution, **kw)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        return (int(math.floor((x - self.origin[0]) / self.resolution)),
                int(math.floor((y - self.origin[1]) / self.resolution)))

    def cell_to_world(self, ix, iy):
        """Cell center."""
        return (self.origin[0] + (ix + 0.5) * self.resolution,
                self.origin[1] + (iy + 0.5) * self.resolution)

    def in_grid(self, ix: int, iy: int) -> bool:
        return 0 <= ix < self.width and 0 <= iy < self.height

    def occupied_mask(self) -> np.ndarray:
        return self.logodds > self.occupied_thresh

    def free_mask(self) -> np.ndarray:
        return self.logodds < self.free_thresh

    def unknown_mask(self) -> np.ndarray:
        return ~(self.occupied_mask() | self.free_mask())

    def copy(self) -> "OccupancyGrid":
        return OccupancyGrid(resolution=self.resolution, origin=self.origin,
                             width=self.width, height=self.height,
                             logodds=self.logodds.copy(), l_min=self.l_min,
                             l_max=self.l_max, occupied_thresh=self.occupied_thresh,
                             free_thresh=self.free_thresh)


@dataclass
class VoxelGrid:
    """Dense boolean voxel block; occupancy[ix, iy, iz]."""

    resolution: float
    origin: tuple[float, float, float]
    dims: tuple[int, int, int]
    occupancy: np.ndarray

    def __post_init__(self):
        if self.occupancy.shape != self.dims:
            raise ValueError("occupancy shape must equal dims")
        if self.occupancy.dtype != np.bool_:
            raise ValueError("occupancy must be boolean")

    @classmethod
    def blank(cls, origin, dims, resolution) -> "VoxelGrid":
        return cls(resolution=resolution, origin=tuple(float(v) for v in origin),
                   dims=tuple(dims), occupancy=np.zeros(dims, dtype=bool))

    @property
    def z_extent(self) -> tuple[float, float]:
        return (self.origin[2], self.origin[2] + self.dims[2] * self.resolution)


@dataclass
class MapBundle:
    localization_map: OccupancyGrid
    navigation_map: OccupancyGrid
    meta: dict

    def __post_init__(self):
        a, b = self.localization_map, self.navigation_map
        if a.resolution != b.resolution or a.origin != b.origin:
            raise ValueError("bundle grids must share resolution and origin")


@dataclass(frozen=True)
class MapConfig:
    resolution: float = 0.05
    l_occ: float = 0.85
    l_free: float = -0.4
    l_min: float = -5.0
    l_max: float = 5.0
    occupied_thresh: float = 0.5
    free_thresh: float = -0.5
    margin: float = 0.5
    z_band_low: float = 0.05  # floor returns below this never project down
    seed: int = 0
    # mapping runs use a noise-free laser so the build is a pure function
    # of scene and trajectory
    robot: RobotSpec = field(default_factory=lambda: RobotSpec(laser_sigma=0.0))

    def __post_init__(self):
        if not (self.l_free < 0.0 < self.l_occ):
            raise ValueError("need l_free < 0 < l_occ")


def integrate_scan(grid: OccupancyGrid, pose, scan,
                   l_free: float = -0.4, l_occ: float = 0.85) -> OccupancyGrid:
    """Additive log-odds update for one scan: traversed cells get l_free,
    hit endpoints get l_occ, then the whole grid is clamped once. Per-scan
    delta accumulation makes the result independent of beam order."""
    if not (l_free < 0.0 < l_occ):
        raise ValueError("need l_free < 0 < l_occ")
    x, y, th = pose
    ox, oy = grid.origin
    res = grid.resolution
    if not grid.in_grid(*grid.world_to_cell(x, y)):
        raise ValueError("pose outside grid extent")

    angles = th + scan.angles
    dirs = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    ranges = np.asarray(scan.ranges, dtype=float)
    hit = ranges < scan.max_range

    # truncate each beam where it exits the grid (half-open upper border)
    hi_x = ox + grid.width * res - 1e-9
    hi_y = oy + grid.height * res - 1e-9
    with np.errstate(divide="ignore"):
        tx = np.where(dirs[:, 0] > 0, (hi_x - x) / dirs[:, 0],
                      np.where(dirs[:, 0] < 0, (ox - x) / dirs[:, 0], np.inf))
        ty = np.where(dirs[:, 1] > 0, (hi_y - y) / dirs[:, 1],
                      np.where(dirs[:, 1] < 0, (oy - y) / dirs[:, 1], np.inf))
    t_exit = np.minimum(tx, ty)
    lens = np.minimum(ranges, t_exit)
    hit_in_grid = hit & (ranges <= t_exit)

    # supersample the free-space segments at half-cell spacing
    step = 0.5 * res
    n_steps = int(np.max(lens) / step) + 1
    ts = np.arange(n_steps) * step
    sample_t = np.minimum(ts[None, :], lens[:, None])
    px = x + dirs[:, 0:1] * sample_t
    py = y + dirs[:, 1:2] * sample_t
    ix = np.floor((px - ox) / res).astype(np.int64)
    iy = np.floor((py - oy) / res).astype(np.int64)
    # duplicates collapse per beam so each beam touches a cell exactly once
    ncells = grid.width * grid.height
    beam_ids = np.repeat(np.arange(len(ranges), dtype=np.int64), n_steps)
    keys = np.unique(beam_ids * ncells + (iy * grid.width + ix).ravel())
    cells = keys % ncells
    beams = keys // ncells

    end_cell = np.full(len(ranges), -1, dtype=np.int64)
    if np.any(hit_in_grid):
        ex = x + dirs[hit_in_grid, 0] * ranges[hit_in_grid]
        ey = y + dirs[hit_in_grid, 1] * ranges[hit_in_grid]
        eix = np.floor((ex - ox) / res).astype(np.int64)
        eiy = np.floor((ey - oy) / res).astype(np.int64)
        end_cell[hit_in_grid] = eiy * grid.width + eix

    keep = cells != end_cell[beams]  # endpoint cells are not also freed
    # integer counts keep the delta independent of beam order, bit-exactly
    cnt_free = np.zeros(ncells, dtype=np.int64)
    cnt_occ = np.zeros(ncells, dtype=np.int64)
    np.add.at(cnt_free, cells[keep], 1)
    np.add.at(cnt_occ, end_cell[end_cell >= 0], 1)
    delta = cnt_free * l_free + cnt_occ * l_occ

    grid.logodds = np.clip(grid.logodds + delta.reshape(grid.height, grid.width),
                           grid.l_min, grid.l_max)
    return grid


def integrate_depth(vox: VoxelGrid, pose, points) -> VoxelGrid:
    """Mark voxels containing the given robot-frame points; points outside
    the grid are ignored."""
    pts = np.asarray(points, dtype=float)
    if pts.size == 0:
        return vox
    x, y, th = pose
    c, s = math.cos(th), math.sin(th)
    wx = x + c * pts[:, 0] - s * pts[:, 1]
    wy = y + s * pts[:, 0] + c * pts[:, 1]
    wz = pts[:, 2]
    res = vox.resolution
    ix = np.floor((wx - vox.origin[0]) / res).astype(np.int64)
    iy = np.floor((wy - vox.origin[1]) / res).astype(np.int64)
    iz = np.floor((wz - vox.origin[2]) / res).astype(np.int64)
    nx, ny, nz = vox.dims
    inside = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
    vox.occupancy[ix[inside], iy[inside], iz[inside]] = True
    return vox


def down_project(vox: VoxelGrid, z_band: tuple[float, float]) -> OccupancyGrid:
    """Collapse the voxel block to a 2D grid: a cell is occupied iff any
    voxel in its column with z-center inside z_band is occupied; everything
    else stays unknown."""
    lo, hi = z_band
    z0, z1 = vox.z_extent
    if lo < z0 - 1e-9 or hi > z1 + 1e-9:
        raise ValueError("z_band outside voxel grid extent")
    nz = vox.dims[2]
    zc = vox.origin[2] + (np.arange(nz) + 0.5) * vox.resolution
    band = (zc >= lo) & (zc <= hi)
    columns = vox.occupancy[:, :, band].any(axis=2)  # (nx, ny)
    grid = OccupancyGrid.blank(vox.origin[:2], vox.dims[0], vox.dims[1],
                               vox.resolution)
    grid.logodds[columns.T] = grid.l_max
    return grid


def build_map_bundle(scene: SceneModel, trajectory, cfg: MapConfig = MapConfig()) -> MapBundle:
    """Drive the simulated sensors along a known-pose trajectory and produce
    the (localization, navigation) grid pair."""
    spec = cfg.robot
    rng = np.random.default_rng(cfg.seed)
    kw = dict(l_min=cfg.l_min, l_max=cfg.l_max,
              occupied_thresh=cfg.occupied_thresh, free_thresh=cfg.free_thresh)
    laser = OccupancyGrid.for_bounds(scene.bounds, cfg.resolution, cfg.margin, **kw)
    nz = int(math.ceil(spec.height / cfg.resolution))
    vox = VoxelGrid.blank((*laser.origin, 0.0), (laser.width, laser.height, nz),
                          cfg.resolution)

    for pose in trajectory:
        if not scene.inside_bounds(pose[0], pose[1]):
            raise ValueError(f"trajectory pose {pose} outside scene bounds")
        scan = simulate_lidar(scene, pose, spec, rng)
        integrate_scan(laser, pose, scan, cfg.l_free, cfg.l_occ)
        pts = simulate_depth(scene, pose, spec, rng)
        integrate_depth(vox, pose, pts)

    nav = laser.copy()
    projected = down_project(vox, (cfg.z_band_low, spec.height))
    nav.logodds[projected.occupied_mask()] = nav.l_max

    meta = {"resolution": cfg.resolution, "seed": cfg.seed, "scene": scene.name}
    return MapBundle(localization_map=laser, navigation_map=nav, meta=meta)


# ---------------------------------------------------------------------------
# map file pair I/O (trinary PGM + JSON sidecar)

def save_map_pair(grid: OccupancyGrid, stem) -> tuple[Path, Path]:
    """Write <stem>.pgm and <stem>.json. The PGM is trinary with a canonical
    header so identical grids produce identical bytes."""
    stem = Path(stem)
    pix = np.full((grid.height, grid.width), PGM_UNKNOWN, dtype=np.uint8)
    pix[grid.occupied_mask()] = PGM_OCCUPIED
    pix[grid.free_mask()] = PGM_FREE
    pgm_path = stem.with_suffix(".pgm")
    with open(pgm_path, "wb") as f:
        f.write(f"P5\n{grid.width} {grid.height}\n255\n".encode("ascii"))
        f.write(pix[::-1].tobytes())  # row 0 of the file is the top of the map
    sidecar = {
        "format": MAP_FORMAT,
        "resolution": grid.resolution,
        "origin": [grid.origin[0], grid.origin[1], 0.0],
        "occupied_thresh": grid.occupied_thresh,
        "free_thresh": grid.free_thresh,
    }
    json_path = stem.with_suffix(".json")
    with open(json_path, "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")
    return pgm_path, json_path


def load_map_pair(stem) -> OccupancyGrid:
    """Read a map pair back; trinary classes map to canonical log-odds."""
    stem = Path(stem)
    with open(stem.with_suffix(".json")) as f:
        sidecar = json.load(f)
    if sidecar.get("format") != MAP_FORMAT:
        raise ValueError(f"unsupported map format {sidecar.get('format')!r}")
    data = stem.with_suffix(".pgm").read_bytes()
    header, _, rest = data.partition(b"\n")
    if header != b"P5":
        raise ValueError("not a binary PGM")
    dims, _, rest = rest.partition(b"\n")
    maxval, _, raw = rest.partition(b"\n")
    w, h = (int(v) for v in dims.split())
    if maxval != b"255":
        raise ValueError("expected maxval 255")
    pix = np.frombuffer(raw, dtype=np.uint8, count=w * h).reshape(h, w)[::-1]
    grid = OccupancyGrid.blank(tuple(sidecar["origin"][:2]), w, h,
                               float(sidecar["resolution"]),
                               occupied_thresh=float(sidecar["occupied_thresh"]),
                               free_thresh=float(sidecar["free_thresh"]))
    known = (pix == PGM_OCCUPIED) | (pix == PGM_FREE) | (pix == PGM_UNKNOWN)
    if not known.all():
        raise ValueError("unexpected pixel value in map PGM")
    grid.logodds[pix == PGM_OCCUPIED] = grid.l_max
    grid.logodds[pix == PGM_FREE] = grid.l_min
    return grid


def save_bundle(bundle: MapBundle, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_map_pair(bundle.localization_map, directory / "localization")
    save_map_pair(bundle.navigation_map, directory / "navigation")
    with open(directory / "bundle.json", "w") as f:
        json.dump({"format": BUNDLE_FORMAT, **bundle.meta}, f, indent=2, sort_keys=True)
        f.write("\n")


def load_bundle(directory) -> MapBundle:
    directory = Path(directory)
    with open(directory / "bundle.json") as f:
        meta = json.load(f)
    if meta.pop("format", None) != BUNDLE_FORMAT:
        raise ValueError("unsupported bundle format")
    return MapBundle(
        localization_map=load_map_pair(directory / "localization"),
        navigation_map=load_map_pair(directory / "navigation"),
        meta=meta,
    )
