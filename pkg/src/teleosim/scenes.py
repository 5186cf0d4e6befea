"""Shipped scenes and the survey trajectory used to build their maps.

The office scene is the benchmark: walls, two tables whose tops float
above laser height on thin legs, a sofa, a cupboard and a standing
person. The table scene is the minimal demonstration that planning on the
laser-slice map cuts under a tabletop while the down-projected map routes
around it.
"""
from __future__ import annotations

import functools
import math
from importlib import resources
from pathlib import Path

from .world import Prism, RobotSpec, SceneModel, check_collision, load_scene

TABLE_TOP_Z = (0.70, 0.74)
LEG_SIZE = 0.06
WALL_HEIGHT = 2.0
WALL_THICKNESS = 0.12


def box(x0: float, y0: float, x1: float, y1: float, z_lo: float, z_hi: float,
        tag: str = "") -> Prism:
    return Prism(footprint=((x0, y0), (x1, y0), (x1, y1), (x0, y1)),
                 z_lo=z_lo, z_hi=z_hi, tag=tag)


def octagon(cx: float, cy: float, radius: float, z_lo: float, z_hi: float,
            tag: str = "") -> Prism:
    pts = tuple((cx + radius * math.cos(a), cy + radius * math.sin(a))
                for a in (2.0 * math.pi * i / 8 for i in range(8)))
    return Prism(footprint=pts, z_lo=z_lo, z_hi=z_hi, tag=tag)


def _walls(xmax: float, ymax: float) -> list[Prism]:
    t = WALL_THICKNESS
    return [
        box(0.0, 0.0, xmax, t, 0.0, WALL_HEIGHT, "wall-s"),
        box(0.0, ymax - t, xmax, ymax, 0.0, WALL_HEIGHT, "wall-n"),
        box(0.0, t, t, ymax - t, 0.0, WALL_HEIGHT, "wall-w"),
        box(xmax - t, t, xmax, ymax - t, 0.0, WALL_HEIGHT, "wall-e"),
    ]


def _table(x0: float, y0: float, x1: float, y1: float, tag: str,
           leg_inset: float = 0.12) -> list[Prism]:
    """Top slab above laser height plus four corner legs."""
    z_lo, z_hi = TABLE_TOP_Z
    parts = [box(x0, y0, x1, y1, z_lo, z_hi, f"{tag}-top")]
    h = LEG_SIZE / 2
    for i, (cx, cy) in enumerate(((x0 + leg_inset, y0 + leg_inset),
                                  (x1 - leg_inset, y0 + leg_inset),
                                  (x1 - leg_inset, y1 - leg_inset),
                                  (x0 + leg_inset, y1 - leg_inset))):
        parts.append(box(cx - h, cy - h, cx + h, cy + h, 0.0, z_lo,
                         f"{tag}-leg{i}"))
    return parts


@functools.lru_cache(maxsize=None)
def office_scene() -> SceneModel:
    obstacles = _walls(9.0, 7.0)
    obstacles += _table(2.7, 3.05, 4.3, 3.95, "table")
    # flush against the east wall: a gap narrower than the robot's rotation
    # sweep would be a wedge trap it can never rotate out of
    obstacles += _table(7.98, 2.8, 8.88, 4.2, "desk")
    obstacles.append(box(4.5, 0.15, 6.3, 0.95, 0.0, 0.75, "sofa"))
    obstacles.append(box(5.5, 6.43, 6.5, 6.88, 0.0, 1.9, "cupboard"))
    # standing at the table edge: person and table merge into one obstacle
    # island, so the room keeps no narrow gap between separate obstacles
    obstacles.append(octagon(4.6, 3.5, 0.25, 0.0, 1.7, "person"))
    # the course runs the room perimeter counterclockwise: every leg has a
    # clear sight line, the furniture fills the middle, and every corner is
    # a left turn so recovery rotation (always CCW) works with the pilot
    # instead of against it
    targets = {
        "S": (1.2, 1.2),
        "R": (1.0, 3.5),
        "T1": (6.4, 1.4),
        "T2": (7.0, 5.5),
        "T3": (1.4, 5.3),
    }
    return SceneModel(bounds=(0.0, 0.0, 9.0, 7.0), obstacles=tuple(obstacles),
                      targets=targets, name="office")


@functools.lru_cache(maxsize=None)
def table_scene() -> SceneModel:
    # the table is wide enough that the between-legs corridor is the cheap
    # route on the laser-slice map; only the projected map blocks it
    obstacles = _walls(6.0, 4.0)
    obstacles += _table(2.2, 1.3, 3.8, 2.7, "table")
    targets = {
        "S": (1.0, 2.0),
        "R": (1.0, 1.0),
        "T1": (5.0, 2.0),
        "T2": (5.0, 3.1),
        "T3": (5.0, 0.9),
    }
    return SceneModel(bounds=(0.0, 0.0, 6.0, 4.0), obstacles=tuple(obstacles),
                      targets=targets, name="table")


BUILTIN_SCENES = {"office": office_scene, "table": table_scene}


def get_scene(ref: str) -> SceneModel:
    """Scene by builtin name, else by file path."""
    if ref in BUILTIN_SCENES:
        return BUILTIN_SCENES[ref]()
    path = Path(ref)
    if path.exists():
        return load_scene(path)
    raise FileNotFoundError(
        f"no such scene {ref!r} (builtins: {sorted(BUILTIN_SCENES)})")


def packaged_scene_path(name: str):
    return resources.files("teleosim").joinpath(f"scenes/{name}.json")


def mapping_trajectory(scene: SceneModel, spec: RobotSpec | None = None,
                       step: float = 1.0, margin: float = 0.55) -> list[tuple[float, float, float]]:
    """Survey poses for map building: a serpentine grid over the interior,
    four headings per station so the depth camera sees every tabletop from
    all sides. Poses that would put the robot in contact are skipped."""
    if spec is None:
        spec = RobotSpec()
    xmin, ymin, xmax, ymax = scene.bounds
    xs, ys = [], []
    x = xmin + margin
    while x <= xmax - margin + 1e-9:
        xs.append(x)
        x += step
    y = ymin + margin
    while y <= ymax - margin + 1e-9:
        ys.append(y)
        y += step
    poses = []
    for iy, y in enumerate(ys):
        row = xs if iy % 2 == 0 else xs[::-1]
        for x in row:
            for heading in (0.0, math.pi / 2, math.pi, -math.pi / 2):
                pose = (x, y, heading)
                if not check_collision(scene, pose, spec):
                    poses.append(pose)
    return poses
