"""2D geometry helpers shared by the simulator, mapping and planning code.

Angles are radians, lengths meters. Polygons are CCW vertex arrays of shape
(n, 2); all routines treat polygon boundaries as part of the polygon.
"""
from __future__ import annotations

import math

import numpy as np

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = a % TWO_PI
    if r > math.pi:
        r -= TWO_PI
    return r


def normalize_angles(a: np.ndarray) -> np.ndarray:
    r = np.mod(a, TWO_PI)
    r = np.where(r > math.pi, r - TWO_PI, r)
    return r


def angle_diff(a: float, b: float) -> float:
    """Signed smallest rotation taking b onto a."""
    return normalize_angle(a - b)


def polygon_area(poly: np.ndarray) -> float:
    """Signed area; positive for CCW vertex order."""
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def is_convex_ccw(poly: np.ndarray, eps: float = 1e-12) -> bool:
    """True for a simple convex polygon in CCW order (collinear runs allowed)."""
    n = len(poly)
    if n < 3:
        return False
    e = np.roll(poly, -1, axis=0) - poly
    cross = e[:, 0] * np.roll(e[:, 1], -1) - e[:, 1] * np.roll(e[:, 0], -1)
    return bool(np.all(cross >= -eps)) and polygon_area(poly) > eps


def polygon_edges(poly: np.ndarray) -> np.ndarray:
    """Edge list of shape (n, 2, 2): rows (start, end)."""
    return np.stack([poly, np.roll(poly, -1, axis=0)], axis=1)


def point_in_convex(poly: np.ndarray, pt, eps: float = 1e-9) -> bool:
    """Point inside or on the boundary of a convex CCW polygon."""
    px, py = float(pt[0]), float(pt[1])
    a = poly
    b = np.roll(poly, -1, axis=0)
    cross = (b[:, 0] - a[:, 0]) * (py - a[:, 1]) - (b[:, 1] - a[:, 1]) * (px - a[:, 0])
    return bool(np.all(cross >= -eps))


def convex_polygons_intersect(a: np.ndarray, b: np.ndarray, eps: float = 1e-9) -> bool:
    """Separating-axis test with closed boundaries: touching counts as overlap."""
    for poly in (a, b):
        edges = np.roll(poly, -1, axis=0) - poly
        # outward normals for CCW order
        axes = np.stack([edges[:, 1], -edges[:, 0]], axis=1)
        pa = a @ axes.T
        pb = b @ axes.T
        if np.any(pa.max(axis=0) < pb.min(axis=0) - eps) or np.any(
            pb.max(axis=0) < pa.min(axis=0) - eps
        ):
            return False
    return True


def rays_segments_hits(
    origin: np.ndarray, directions: np.ndarray, segments: np.ndarray
) -> np.ndarray:
    """Nearest forward intersection distance per ray against a segment soup.

    origin (2,), directions (b, 2) unit vectors, segments (n, 2, 2).
    Returns (b,) distances, inf where a ray misses every segment.
    """
    b = directions.shape[0]
    if segments.shape[0] == 0:
        return np.full(b, np.inf)
    p = segments[:, 0, :]                       # (n, 2)
    s = segments[:, 1, :] - segments[:, 0, :]   # (n, 2)
    po = p - origin                             # (n, 2)
    # cross(d, s): (b, n)
    denom = directions[:, 0:1] * s[:, 1] - directions[:, 1:2] * s[:, 0]
    cross_po_s = po[:, 0] * s[:, 1] - po[:, 1] * s[:, 0]            # (n,)
    # cross(po, d): (b, n)
    cross_po_d = directions[:, 1:2] * po[:, 0] - directions[:, 0:1] * po[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = cross_po_s / denom                  # ray parameter, (b, n)
        u = cross_po_d / denom                  # segment parameter, (b, n)
    valid = (np.abs(denom) > 1e-12) & (t >= 0.0) & (u >= -1e-9) & (u <= 1.0 + 1e-9)
    t = np.where(valid, t, np.inf)
    return t.min(axis=1)


def ray_segments_hit(origin, direction, segments: np.ndarray) -> float:
    d = np.asarray(direction, dtype=float).reshape(1, 2)
    return float(rays_segments_hits(np.asarray(origin, dtype=float), d, segments)[0])


def oriented_rect(center_x: float, center_y: float, theta: float,
                  length: float, width: float) -> np.ndarray:
    """CCW corners of a rectangle centered at (x, y), long side along theta."""
    hl, hw = 0.5 * length, 0.5 * width
    c, s = math.cos(theta), math.sin(theta)
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([center_x, center_y])


def point_to_polygon_distance(poly: np.ndarray, pt) -> float:
    """Euclidean distance from a point to a convex polygon (0 inside)."""
    if point_in_convex(poly, pt):
        return 0.0
    p = np.asarray(pt, dtype=float)
    a = poly
    b = np.roll(poly, -1, axis=0)
    ab = b - a
    ap = p - a
    denom = np.einsum("ij,ij->i", ab, ab)
    t = np.clip(np.einsum("ij,ij->i", ap, ab) / np.maximum(denom, 1e-18), 0.0, 1.0)
    closest = a + ab * t[:, None]
    return float(np.min(np.hypot(closest[:, 0] - p[0], closest[:, 1] - p[1])))


def clip_segment_to_rect(x0, y0, x1, y1, xmin, ymin, xmax, ymax):
    """Liang-Barsky clip; returns (x0, y0, x1, y1) or None if fully outside."""
    dx, dy = x1 - x0, y1 - y0
    t0, t1 = 0.0, 1.0
    for p, q in ((-dx, x0 - xmin), (dx, xmax - x0), (-dy, y0 - ymin), (dy, ymax - y0)):
        if p == 0.0:
            if q < 0.0:
                return None
            continue
        r = q / p
        if p < 0.0:
            if r > t1:
                return None
            t0 = max(t0, r)
        else:
            if r < t0:
                return None
            t1 = min(t1, r)
    return (x0 + t0 * dx, y0 + t0 * dy, x0 + t1 * dx, y0 + t1 * dy)


def bresenham_cells(ix0: int, iy0: int, ix1: int, iy1: int) -> list[tuple[int, int]]:
    """8-connected grid cells from (ix0, iy0) to (ix1, iy1), inclusive."""
    cells = []
    dx, dy = abs(ix1 - ix0), abs(iy1 - iy0)
    sx = 1 if ix0 < ix1 else -1
    sy = 1 if iy0 < iy1 else -1
    err = dx - dy
    x, y = ix0, iy0
    while True:
        cells.append((x, y))
        if x == ix1 and y == iy1:
            break
        e2 = 2 * err
        if e2 > -dy:
            err -= dy
            x += sx
        if e2 < dx:
            err += dx
            y += sy
    return cells
