"""Adaptive Monte-Carlo localization against the laser-slice map.

Odometry motion model + likelihood-field sensor model + KLD-adaptive
low-variance resampling, plus the delocalization monitor that feeds the
evaluation metrics.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import distance_transform_edt
from scipy.stats import norm

from .geometry import angle_diff, normalize_angle, normalize_angles
from .mapping import OccupancyGrid


@dataclass
class ParticleSet:
    poses: np.ndarray          # (n, 3)
    weights: np.ndarray        # (n,), sum to 1
    generation: int = 0
    correction_failed: bool = False

    def __post_init__(self):
        if self.poses.ndim != 2 or self.poses.shape[1] != 3:
            raise ValueError("poses must be (n, 3)")
        if self.weights.shape != (len(self.poses),):
            raise ValueError("weights must match poses")

    def __len__(self):
        return len(self.poses)


@dataclass(frozen=True)
class McConfig:
    n_min: int = 100
    n_max: int = 5000
    kld_epsilon: float = 0.05
    kld_delta: float = 0.01
    # odometry model variance coefficients
    a1: float = 0.01   # rot variance from rotation
    a2: float = 0.005  # rot variance from translation
    a3: float = 0.01   # trans variance from translation
    a4: float = 0.005  # trans variance from rotation
    sigma_hit: float = 0.1
    z_hit: float = 0.9
    z_rand: float = 0.1
    bin_xy: float = 0.5
    bin_theta: float = math.radians(15.0)
    beam_stride: int = 8  # correct() uses every beam_stride-th beam

    def __post_init__(self):
        if not (0 < self.n_min <= self.n_max):
            raise ValueError("need 0 < n_min <= n_max")
        if abs(self.z_hit + self.z_rand - 1.0) > 1e-12:
            raise ValueError("z_hit + z_rand must equal 1")


@dataclass
class PoseEstimate:
    mean: tuple[float, float, float]
    cov: np.ndarray  # 3x3
    stamp: float = 0.0

    def __post_init__(self):
        if self.cov.shape != (3, 3):
            raise ValueError("cov must be 3x3")
        if not np.allclose(self.cov, self.cov.T, atol=1e-9):
            raise ValueError("cov must be symmetric")


@dataclass
class DelocMonitor:
    d_thresh: float = 0.5
    theta_thresh: float = math.radians(30.0)
    dwell: float = 2.0
    count: int = 0
    tripped: bool = False
    exceeded_since: float | None = None


class LikelihoodField:
    """Per-cell precomputed log sensor likelihood from the distance to the
    nearest occupied cell."""

    def __init__(self, grid: OccupancyGrid, cfg: McConfig, max_range: float):
        occ = grid.occupied_mask()
        if occ.any():
            dist = distance_transform_edt(~occ) * grid.resolution
        else:
            dist = np.full(occ.shape, np.inf)
        gauss = np.exp(-0.5 * (dist / cfg.sigma_hit) ** 2) / (
            cfg.sigma_hit * math.sqrt(2.0 * math.pi))
        self.log_prob = np.log(cfg.z_hit * gauss + cfg.z_rand / max_range)
        self.log_prob_miss = math.log(cfg.z_rand / max_range)
        self.grid = grid
        self.max_range = max_range

    def lookup_log(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        """Log likelihood at world coordinates; off-map points get the
        random-return floor."""
        g = self.grid
        ix = np.floor((xs - g.origin[0]) / g.resolution).astype(np.int64)
        iy = np.floor((ys - g.origin[1]) / g.resolution).astype(np.int64)
        inside = (ix >= 0) & (ix < g.width) & (iy >= 0) & (iy < g.height)
        out = np.full(xs.shape, self.log_prob_miss)
        out[inside] = self.log_prob[iy[inside], ix[inside]]
        return out


def init_particles(pose, n: int, rng: np.random.Generator,
                   std=(0.1, 0.1, 0.05)) -> ParticleSet:
    """Gaussian cloud around an initial pose guess."""
    poses = np.tile(np.asarray(pose, dtype=float), (n, 1))
    poses[:, 0] += rng.normal(0.0, std[0], n)
    poses[:, 1] += rng.normal(0.0, std[1], n)
    poses[:, 2] = normalize_angles(poses[:, 2] + rng.normal(0.0, std[2], n))
    return ParticleSet(poses=poses, weights=np.full(n, 1.0 / n))


def odom_delta_from_poses(p0, p1) -> tuple[float, float, float]:
    """Decompose a pose change into (trans, rot1, rot2)."""
    dx, dy = p1[0] - p0[0], p1[1] - p0[1]
    trans = math.hypot(dx, dy)
    if trans < 1e-6:
        rot1 = 0.0
    else:
        rot1 = angle_diff(math.atan2(dy, dx), p0[2])
        if abs(rot1) > math.pi / 2:  # treat backward motion as reversing
            trans = -trans
            rot1 = normalize_angle(rot1 + math.pi)
    rot2 = normalize_angle(angle_diff(p1[2], p0[2]) - rot1)
    return trans, rot1, rot2


def predict(ps: ParticleSet, odom_delta, cfg: McConfig,
            rng: np.random.Generator) -> ParticleSet:
    """Odometry motion update; a1..a4 scale the noise variances."""
    trans, rot1, rot2 = odom_delta
    n = len(ps)
    s_rot1 = math.sqrt(cfg.a1 * rot1 ** 2 + cfg.a2 * trans ** 2)
    s_trans = math.sqrt(cfg.a3 * trans ** 2 + cfg.a4 * (rot1 ** 2 + rot2 ** 2))
    s_rot2 = math.sqrt(cfg.a1 * rot2 ** 2 + cfg.a2 * trans ** 2)
    r1 = rot1 + (rng.normal(0.0, s_rot1, n) if s_rot1 > 0 else 0.0)
    tr = trans + (rng.normal(0.0, s_trans, n) if s_trans > 0 else 0.0)
    r2 = rot2 + (rng.normal(0.0, s_rot2, n) if s_rot2 > 0 else 0.0)
    heading = ps.poses[:, 2] + r1
    ps.poses[:, 0] += tr * np.cos(heading)
    ps.poses[:, 1] += tr * np.sin(heading)
    ps.poses[:, 2] = normalize_angles(heading + r2)
    return ps


def correct(ps: ParticleSet, scan, lf: LikelihoodField,
            cfg: McConfig) -> ParticleSet:
    """Likelihood-field weight update; weights normalized on return."""
    angles = np.asarray(scan.angles)[:: cfg.beam_stride]
    ranges = np.asarray(scan.ranges)[:: cfg.beam_stride]
    used = ranges < scan.max_range
    ps.correction_failed = False
    if not np.any(used):
        ps.weights = np.full(len(ps), 1.0 / len(ps))
        return ps
    angles, ranges = angles[used], ranges[used]
    beam_dir = ps.poses[:, 2:3] + angles[None, :]
    ex = ps.poses[:, 0:1] + ranges[None, :] * np.cos(beam_dir)
    ey = ps.poses[:, 1:2] + ranges[None, :] * np.sin(beam_dir)
    logw = lf.lookup_log(ex, ey).sum(axis=1)
    logw -= logw.max()
    w = np.exp(logw)
    total = w.sum()
    if not np.isfinite(total) or total <= 0.0:
        ps.weights = np.full(len(ps), 1.0 / len(ps))
        ps.correction_failed = True
        return ps
    ps.weights = w / total
    return ps


def kld_bound(k: int, epsilon: float, delta: float) -> int:
    """Sample-size bound from the number of occupied histogram bins."""
    if k < 2:
        return 0
    z = norm.ppf(1.0 - delta)
    km1 = k - 1
    a = 2.0 / (9.0 * km1)
    n = (km1 / (2.0 * epsilon)) * (1.0 - a + math.sqrt(a) * z) ** 3
    return int(math.ceil(n))


def resample_kld(ps: ParticleSet, cfg: McConfig,
                 rng: np.random.Generator) -> ParticleSet:
    """Low-variance resampling to the KLD-adaptive target count."""
    bx = np.floor(ps.poses[:, 0] / cfg.bin_xy).astype(np.int64)
    by = np.floor(ps.poses[:, 1] / cfg.bin_xy).astype(np.int64)
    bt = np.floor(ps.poses[:, 2] / cfg.bin_theta).astype(np.int64)
    k = len(np.unique(np.stack([bx, by, bt], axis=1), axis=0))
    n_target = min(max(kld_bound(k, cfg.kld_epsilon, cfg.kld_delta), cfg.n_min),
                   cfg.n_max)

    cum = np.cumsum(ps.weights)
    cum[-1] = 1.0
    start = rng.uniform(0.0, 1.0 / n_target)
    pointers = start + np.arange(n_target) / n_target
    idx = np.searchsorted(cum, pointers, side="left")
    return ParticleSet(poses=ps.poses[idx].copy(),
                       weights=np.full(n_target, 1.0 / n_target),
                       generation=ps.generation + 1,
                       correction_failed=ps.correction_failed)


def estimate(ps: ParticleSet, stamp: float = 0.0) -> PoseEstimate:
    """Weighted mean pose (circular mean heading) and covariance."""
    w = ps.weights
    mx = float(np.dot(w, ps.poses[:, 0]))
    my = float(np.dot(w, ps.poses[:, 1]))
    mth = math.atan2(float(np.dot(w, np.sin(ps.poses[:, 2]))),
                     float(np.dot(w, np.cos(ps.poses[:, 2]))))
    d = np.empty_like(ps.poses)
    d[:, 0] = ps.poses[:, 0] - mx
    d[:, 1] = ps.poses[:, 1] - my
    d[:, 2] = normalize_angles(ps.poses[:, 2] - mth)
    cov = (w[:, None] * d).T @ d
    cov = 0.5 * (cov + cov.T)
    return PoseEstimate(mean=(mx, my, normalize_angle(mth)), cov=cov, stamp=stamp)


def monitor(dm: DelocMonitor, est: PoseEstimate, truth, now: float) -> DelocMonitor:
    """Count sustained estimate-vs-truth divergences with hysteresis."""
    pos_err = math.hypot(est.mean[0] - truth[0], est.mean[1] - truth[1])
    head_err = abs(angle_diff(est.mean[2], truth[2]))
    if dm.tripped:
        if pos_err < 0.5 * dm.d_thresh and head_err < 0.5 * dm.theta_thresh:
            dm.tripped = False
            dm.exceeded_since = None
        return dm
    if pos_err > dm.d_thresh or head_err > dm.theta_thresh:
        if dm.exceeded_since is None:
            dm.exceeded_since = now
        if now - dm.exceeded_since >= dm.dwell:
            dm.count += 1
            dm.tripped = True
    else:
        dm.exceeded_since = None
    return dm


class MclFilter:
    """Tick-loop wrapper: predict on odometry, correct+resample on scans."""

    def __init__(self, grid: OccupancyGrid, initial_pose, cfg: McConfig,
                 rng: np.random.Generator, max_range: float = 5.6,
                 n_init: int | None = None):
        self.cfg = cfg
        self.rng = rng
        self.field = LikelihoodField(grid, cfg, max_range)
        self.particles = init_particles(initial_pose, n_init or cfg.n_min, rng)
        self.monitor = DelocMonitor()
        self.last_estimate = estimate(self.particles)

    def predict(self, odom_delta) -> None:
        predict(self.particles, odom_delta, self.cfg, self.rng)

    def update(self, scan, stamp: float, truth=None) -> PoseEstimate:
        correct(self.particles, scan, self.field, self.cfg)
        self.particles = resample_kld(self.particles, self.cfg, self.rng)
        self.last_estimate = estimate(self.particles, stamp)
        if truth is not None:
            monitor(self.monitor, self.last_estimate, truth, stamp)
        return self.last_estimate
