"""Line-delimited JSON record files shared by every pipeline stage.

Line 1 is a header ``{"format_version", "kind", "generator": {stage,
params, seed}}``; every further line is one record.  Keys are sorted and
floats use Python's shortest round-trip repr, so equal data gives equal
bytes.
"""

from __future__ import annotations

import base64
import json
from pathlib import Path
from typing import Any, Iterable

import numpy as np

from .compliance import GroundTruthRecord
from .detector import Detection, DetectionSet, Observation, OccupancyEstimate
from .errors import FormatError
from .fusion import Crossing, DispenserEvent
from .scene import cell_to_world
from .tracker import Trajectory

FORMAT_VERSION = 1


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=False)


def write_records(path, kind: str, rows: Iterable[dict], stage: str, params: dict | None = None, seed=None, **extra) -> None:
    header = {"format_version": FORMAT_VERSION, "kind": kind, "generator": {"stage": stage, "params": params or {}, "seed": seed}}
    header.update(extra)
    lines = [_dumps(header)] + [_dumps(r) for r in rows]
    Path(path).write_text("\n".join(lines) + "\n")


def read_records(path, kind: str | None = None) -> tuple[dict, list[dict]]:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FormatError("file not found", path) from None
    lines = text.splitlines()
    if not lines:
        raise FormatError("empty file, expected a header line", path, 1)
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise FormatError(f"header is not JSON: {exc.msg}", path, 1) from exc
    if not isinstance(header, dict) or "format_version" not in header:
        raise FormatError("missing format_version header", path, 1)
    if header["format_version"] != FORMAT_VERSION:
        raise FormatError(f"format_version {header['format_version']!r}, expected {FORMAT_VERSION}", path, 1)
    if kind is not None and header.get("kind") != kind:
        raise FormatError(f"expected a {kind!r} file, got {header.get('kind')!r}", path, 1)
    rows = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            row = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"invalid JSON: {exc.msg}", path, n) from exc
        if not isinstance(row, dict):
            raise FormatError("record must be a JSON object", path, n)
        row["_line"] = n
        rows.append(row)
    return header, rows


def _field(row: dict, key: str, path, cast=None) -> Any:
    try:
        v = row[key]
        return cast(v) if cast else v
    except KeyError:
        raise FormatError(f"missing field {key!r}", path, row.get("_line")) from None
    except (TypeError, ValueError) as exc:
        raise FormatError(f"bad value for {key!r}: {exc}", path, row.get("_line")) from None


# -- observations ----------------------------------------------------------------


def observation_row(o: Observation) -> dict:
    sil = np.asarray(o.silhouette, dtype=bool)
    bits = base64.b64encode(np.packbits(sil.ravel()).tobytes()).decode("ascii")
    return {"sensor_id": o.sensor_id, "t": float(o.timestamp), "shape": list(sil.shape), "bits": bits}


def observation_from_row(row: dict, path=None) -> Observation:
    shape = tuple(_field(row, "shape", path))
    try:
        raw = np.frombuffer(base64.b64decode(_field(row, "bits", path)), dtype=np.uint8)
        sil = np.unpackbits(raw)[: shape[0] * shape[1]].reshape(shape).astype(bool)
    except (ValueError, IndexError) as exc:
        raise FormatError(f"bad silhouette bits: {exc}", path, row.get("_line")) from None
    return Observation(_field(row, "sensor_id", path, str), _field(row, "t", path, float), sil)


def read_observations(path) -> tuple[dict, list[list[Observation]]]:
    """Observations grouped into frames by timestamp, in time order."""
    header, rows = read_records(path, "observations")
    frames: dict[float, list[Observation]] = {}
    for r in rows:
        o = observation_from_row(r, path)
        frames.setdefault(o.timestamp, []).append(o)
    return header, [sorted(frames[t], key=lambda o: o.sensor_id) for t in sorted(frames)]


# -- detections ---------------------------------------------------------------------


def detection_rows(sets: Iterable[DetectionSet]) -> list[dict]:
    return [
        {"t": d.timestamp, "x": d.x, "y": d.y, "sources": [[s, list(c)] for s, c in d.sources]}
        for ds in sets
        for d in ds.detections
    ]


def detection_log_rows(estimates: Iterable[OccupancyEstimate], grid) -> list[dict]:
    out = []
    for e in estimates:
        for c in e.occupied_cells:
            x, y = cell_to_world(c, grid)
            out.append({"timestamp": e.timestamp, "sensor_id": e.sensor_id, "cell": list(c), "world_x": x, "world_y": y})
    return out


def read_detections(path) -> tuple[dict, list[DetectionSet]]:
    header, rows = read_records(path, "detections")
    by_t: dict[float, list[Detection]] = {}
    for r in rows:
        t = _field(r, "t", path, float)
        src = tuple((str(s), tuple(int(v) for v in c)) for s, c in _field(r, "sources", path))
        by_t.setdefault(t, []).append(Detection(t, _field(r, "x", path, float), _field(r, "y", path, float), src))
    return header, [DetectionSet(t, tuple(by_t[t])) for t in sorted(by_t)]


# -- events, tracks, crossings, truth ----------------------------------------------------


def event_rows(events: Iterable[DispenserEvent]) -> list[dict]:
    return [{"sensor_id": e.sensor_id, "dispenser_id": e.dispenser_id, "t": e.timestamp} for e in events]


def read_events(path) -> tuple[dict, list[DispenserEvent]]:
    header, rows = read_records(path, "events")
    return header, [
        DispenserEvent(_field(r, "sensor_id", path, str), _field(r, "dispenser_id", path, str), _field(r, "t", path, float))
        for r in rows
    ]


def track_rows(tracks: Iterable[Trajectory]) -> list[dict]:
    out = []
    for tr in tracks:
        labels = tr.labels or [""] * len(tr)
        for (t, x, y), a in zip(tr.points.tolist(), labels):
            out.append({"track_id": tr.id, "t": t, "x": x, "y": y, "action_label": a})
    return out


TRACK_KINDS = ("tracks", "labeled_tracks", "true_tracks")


def read_tracks(path) -> tuple[dict, list[Trajectory]]:
    header, rows = read_records(path)
    if header.get("kind") not in TRACK_KINDS:
        raise FormatError(f"expected a track file, got {header.get('kind')!r}", path, 1)
    pts: dict[int, list] = {}
    labels: dict[int, list] = {}
    for r in rows:
        tid = _field(r, "track_id", path, int)
        pts.setdefault(tid, []).append((_field(r, "t", path, float), _field(r, "x", path, float), _field(r, "y", path, float)))
        labels.setdefault(tid, []).append(str(r.get("action_label", "")))
    tracks = []
    for tid in sorted(pts):
        lab = labels[tid] if any(labels[tid]) else None
        tracks.append(Trajectory(tid, np.array(pts[tid]), labels=lab))
    return header, tracks


def crossing_rows(crossings: Iterable[Crossing]) -> list[dict]:
    return [
        {"track_id": c.track_id, "door_id": c.door_id, "direction": c.direction, "t": c.t, "compliant": c.compliant}
        for c in crossings
    ]


def _as_bool(v) -> bool:
    if not isinstance(v, bool):
        raise ValueError(f"expected true/false, got {v!r}")
    return v


def _direction(r, path) -> str:
    d = _field(r, "direction", path, str)
    if d not in ("enter", "exit"):
        raise FormatError(f"direction must be 'enter' or 'exit', got {d!r}", path, r.get("_line"))
    return d


def read_crossings(path) -> tuple[dict, list[Crossing]]:
    header, rows = read_records(path, "crossings")
    return header, [
        Crossing(_field(r, "track_id", path, int), _field(r, "door_id", path, str), _direction(r, path), _field(r, "t", path, float), _field(r, "compliant", path, _as_bool))
        for r in rows
    ]


def truth_rows(truth: Iterable[GroundTruthRecord]) -> list[dict]:
    # same keys as crossing records, so annotations and predictions interchange
    return [{"track_id": g.person_id, "door_id": g.door_id, "direction": g.direction, "t": g.t, "compliant": g.washed} for g in truth]


def read_truth(path) -> tuple[dict, list[GroundTruthRecord]]:
    header, rows = read_records(path)
    if header.get("kind") not in ("truth", "crossings"):
        raise FormatError(f"expected a 'truth' or 'crossings' file, got {header.get('kind')!r}", path, 1)
    return header, [
        GroundTruthRecord(_field(r, "track_id", path, int), _field(r, "door_id", path, str), _direction(r, path), _field(r, "t", path, float), _field(r, "compliant", path, _as_bool))
        for r in rows
    ]
