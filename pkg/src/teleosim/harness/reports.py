"""Run metrics, their CSV/JSON serialization and the replay engine.

The replay log is a JSONL event stream (header, commands, controller
events, collisions, delocalizations, target arrivals, run end). Metrics
are a pure function of that stream: replay_metrics() recomputes the same
RunMetrics, bit for bit, that the live run produced.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

METRICS_FORMAT = "metrics/1"
TABLE_FORMAT = "mapeval/1"

CSV_COLUMNS = (
    "scene", "seed", "nav_map", "control", "operator", "completed",
    "commands_T1", "commands_T2", "commands_T3",
    "time_T1", "time_T2", "time_T3",
    "commands_total", "time_total", "collisions", "delocalizations",
    "recoveries", "clears", "distance",
)

TABLE_COLUMNS = ("config", "scene", "seed", "delocalizations", "collisions",
                 "commands", "duration", "aborted")


@dataclass(frozen=True)
class RunMetrics:
    scene: str
    seed: int
    nav_map: str
    control: str
    operator: str
    completed: bool
    targets: tuple[str, ...]
    commands_per_target: tuple[int, ...]
    time_per_target: tuple[float, ...]
    commands_total: int
    time_total: float
    collisions: int
    delocalizations: int
    recoveries: int
    clears: int
    distance: float

    def __post_init__(self):
        counts = (*self.commands_per_target, self.commands_total,
                  self.collisions, self.delocalizations, self.recoveries,
                  self.clears)
        if any(c < 0 for c in counts):
            raise ValueError("counts must be >= 0")
        if len(self.commands_per_target) != len(self.targets) or \
                len(self.time_per_target) != len(self.targets):
            raise ValueError("per-target vectors must match the target list")
        if any(t < 0.0 for t in self.time_per_target) or self.distance < 0.0:
            raise ValueError("times and distance must be >= 0")
        if not math.isclose(sum(self.time_per_target), self.time_total,
                            rel_tol=0.0, abs_tol=1e-9):
            raise ValueError("per-target times must sum to the total")
        if sum(self.commands_per_target) != self.commands_total:
            raise ValueError("per-target commands must sum to the total")


def metrics_to_dict(m: RunMetrics) -> dict:
    doc = asdict(m)
    doc["targets"] = list(m.targets)
    doc["commands_per_target"] = list(m.commands_per_target)
    doc["time_per_target"] = list(m.time_per_target)
    doc["format"] = METRICS_FORMAT
    return doc


def metrics_from_dict(doc: dict) -> RunMetrics:
    if doc.get("format") != METRICS_FORMAT:
        raise ValueError(f"unsupported metrics format {doc.get('format')!r}")
    d = {k: v for k, v in doc.items() if k != "format"}
    for key in ("targets", "commands_per_target", "time_per_target"):
        d[key] = tuple(d[key])
    return RunMetrics(**d)


def _metrics_row(m: RunMetrics) -> dict:
    row = {
        "scene": m.scene, "seed": m.seed, "nav_map": m.nav_map,
        "control": m.control, "operator": m.operator,
        "completed": m.completed,
        "commands_total": m.commands_total, "time_total": m.time_total,
        "collisions": m.collisions, "delocalizations": m.delocalizations,
        "recoveries": m.recoveries, "clears": m.clears,
        "distance": m.distance,
    }
    for name, c, t in zip(m.targets, m.commands_per_target, m.time_per_target):
        row[f"commands_{name}"] = c
        row[f"time_{name}"] = t
    return row


def _cell(value) -> str:
    # repr round-trips floats exactly; everything else serializes plainly
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _open_out(path: Path, force: bool):
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force to overwrite")
    return path.open("w", newline="")


def export_metrics(m: RunMetrics, path, force: bool = False) -> Path:
    """CSV or JSON by suffix; refuses to overwrite without force."""
    path = Path(path)
    if path.suffix == ".json":
        with _open_out(path, force) as f:
            json.dump(metrics_to_dict(m), f, indent=2, sort_keys=True)
            f.write("\n")
    elif path.suffix == ".csv":
        row = _metrics_row(m)
        with _open_out(path, force) as f:
            w = csv.writer(f)
            w.writerow(CSV_COLUMNS)
            w.writerow([_cell(row[c]) for c in CSV_COLUMNS])
    else:
        raise ValueError(f"unsupported export suffix {path.suffix!r}")
    return path


def import_metrics(path) -> RunMetrics:
    path = Path(path)
    if path.suffix == ".json":
        with path.open() as f:
            return metrics_from_dict(json.load(f))
    if path.suffix != ".csv":
        raise ValueError(f"unsupported import suffix {path.suffix!r}")
    with path.open(newline="") as f:
        rows = list(csv.DictReader(f))
    if len(rows) != 1:
        raise ValueError("expected exactly one metrics row")
    r = rows[0]
    targets = tuple(c[len("commands_"):] for c in CSV_COLUMNS
                    if c.startswith("commands_") and c != "commands_total")
    return RunMetrics(
        scene=r["scene"], seed=int(r["seed"]), nav_map=r["nav_map"],
        control=r["control"], operator=r["operator"],
        completed=r["completed"] == "true", targets=targets,
        commands_per_target=tuple(int(r[f"commands_{t}"]) for t in targets),
        time_per_target=tuple(float(r[f"time_{t}"]) for t in targets),
        commands_total=int(r["commands_total"]),
        time_total=float(r["time_total"]), collisions=int(r["collisions"]),
        delocalizations=int(r["delocalizations"]),
        recoveries=int(r["recoveries"]), clears=int(r["clears"]),
        distance=float(r["distance"]),
    )


def export_rows(rows: list[dict], path, force: bool = False) -> Path:
    """Map-eval table export, CSV or JSON by suffix."""
    path = Path(path)
    if path.suffix == ".json":
        with _open_out(path, force) as f:
            json.dump({"format": TABLE_FORMAT, "rows": rows}, f, indent=2,
                      sort_keys=True)
            f.write("\n")
    elif path.suffix == ".csv":
        with _open_out(path, force) as f:
            w = csv.writer(f)
            w.writerow(TABLE_COLUMNS)
            for row in rows:
                w.writerow([_cell(row[c]) for c in TABLE_COLUMNS])
    else:
        raise ValueError(f"unsupported export suffix {path.suffix!r}")
    return path


# -- replay -----------------------------------------------------------------

def write_replay_log(events: list[dict], path, force: bool = False) -> Path:
    path = Path(path)
    with _open_out(path, force) as f:
        for e in events:
            f.write(json.dumps(e, sort_keys=True))
            f.write("\n")
    return path


def read_replay_log(path) -> list[dict]:
    with Path(path).open() as f:
        return [json.loads(line) for line in f if line.strip()]


def replay_metrics(events: list[dict]) -> RunMetrics:
    """Recompute RunMetrics from a course replay log alone."""
    if not events or events[0].get("type") != "run_header":
        raise ValueError("replay log must start with a run_header event")
    header = events[0]
    end = next(e for e in events if e.get("type") == "run_end")

    reached = [e for e in events if e.get("type") == "target_reached"]
    commands = [e for e in events if e.get("type") == "command"]
    targets = tuple(e["target"] for e in reached)
    targets += ("T1", "T2", "T3")[len(targets):]

    # leg i starts where the previous arrival was detected; commands at the
    # exact boundary stamp belong to the new leg. An unfinished leg runs to
    # the end of the log, boundary stamp included.
    boundaries = [(e["stamp"], False) for e in reached]
    if len(reached) < 3 and not end["completed"]:
        boundaries.append((end["stamp"], True))
    times, counts = [], []
    prev = 0.0
    for b, is_open in boundaries:
        times.append(b - prev)
        counts.append(sum(
            1 for c in commands
            if prev <= c["stamp"] and (c["stamp"] <= b if is_open
                                       else c["stamp"] < b)))
        prev = b
    while len(times) < 3:
        times.append(0.0)
        counts.append(0)

    return RunMetrics(
        scene=header["scene"], seed=header["seed"],
        nav_map=header["nav_map"], control=header["control"],
        operator=header["operator"], completed=end["completed"],
        targets=targets,
        commands_per_target=tuple(counts), time_per_target=tuple(times),
        commands_total=end["commands"], time_total=end["stamp"],
        collisions=end["collisions"], delocalizations=end["delocalizations"],
        recoveries=sum(1 for e in events if e.get("type") == "recovery_entered"),
        clears=sum(1 for e in events if e.get("type") == "costmap_cleared"),
        distance=end["distance"],
    )
