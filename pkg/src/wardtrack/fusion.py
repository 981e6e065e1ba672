"""Match dispenser events to trajectories and label door crossings.

A track becomes clean when a dispenser event is matched to it and stays
clean for ``wash_window`` seconds or until it crosses a door, whichever
comes first.  An entry is compliant when the track is clean as it crosses;
an exit is compliant when the track washes after the exit, before its next
crossing and within ``wash_window``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConsistencyError
from .scene import FloorPlan
from .tracker import Trajectory

NO_ACTION = "none"
WASHED = "washed"


@dataclass(frozen=True)
class DispenserEvent:
    sensor_id: str
    dispenser_id: str
    timestamp: float


@dataclass(frozen=True)
class Crossing:
    track_id: int
    door_id: str
    direction: str  # "enter" | "exit"
    t: float
    compliant: bool | None = None


@dataclass(frozen=True)
class FusionParams:
    time_tolerance: float = 5.0
    proximity: float = 1.0
    dwell_min: float = 1.0
    wash_window: float = 30.0
    carry_clean_through_room: bool = False


@dataclass
class LabeledTrack:
    track: Trajectory
    labels: list[str]
    crossings: list[Crossing]
    washes: list[float]
    status: list[tuple[float, float, bool]]  # (t_from, t_to, clean), contiguous

    @property
    def id(self) -> int:
        return self.track.id

    def clean_at(self, t: float) -> bool:
        for t0, t1, clean in self.status:
            if t0 <= t < t1:
                return clean
        return False


@dataclass
class FusionResult:
    tracks: list[LabeledTrack]
    crossings: list[Crossing]
    matches: dict[int, int | None] = field(default_factory=dict)  # event index -> track id

    @property
    def orphans(self) -> int:
        return sum(1 for v in self.matches.values() if v is None)

    @property
    def matched(self) -> int:
        return sum(1 for v in self.matches.values() if v is not None)


def match_event(
    e: DispenserEvent,
    tracks: Sequence[Trajectory],
    plan: FloorPlan,
    time_tolerance: float = 5.0,
    proximity: float = 1.0,
) -> int | None:
    """Id of the track that most plausibly used the dispenser, or None.

    Candidates have a point within ``time_tolerance`` of the event and
    within ``proximity`` of the dispenser.  They are ranked by how far from
    the dispenser they were at the event (their point nearest in time), with
    ties going to the lower track id.
    """
    anchor = np.asarray(plan.dispenser(e.dispenser_id).position)
    best = None
    for tr in tracks:
        pts = tr.points
        dt = np.abs(pts[:, 0] - e.timestamp)
        d = np.hypot(*(pts[:, 1:] - anchor).T)
        if not np.any((dt <= time_tolerance) & (d <= proximity)):
            continue
        score = (float(d[int(np.argmin(dt))]), tr.id)
        if best is None or score < best:
            best = score
    return None if best is None else best[1]


def _segments_intersect(p, q, a, b) -> bool:
    def orient(u, v, w):
        return (v[0] - u[0]) * (w[1] - u[1]) - (v[1] - u[1]) * (w[0] - u[0])

    def on_seg(u, v, w):
        return min(u[0], v[0]) - 1e-12 <= w[0] <= max(u[0], v[0]) + 1e-12 and min(u[1], v[1]) - 1e-12 <= w[1] <= max(u[1], v[1]) + 1e-12

    o1, o2, o3, o4 = orient(p, q, a), orient(p, q, b), orient(a, b, p), orient(a, b, q)
    if ((o1 > 0) != (o2 > 0) or o1 == 0 or o2 == 0) and ((o3 > 0) != (o4 > 0) or o3 == 0 or o4 == 0):
        if o1 == 0 and o2 == 0:
            return on_seg(p, q, a) or on_seg(p, q, b) or on_seg(a, b, p)
        if o1 == 0 and not on_seg(p, q, a):
            return False
        if o2 == 0 and not on_seg(p, q, b):
            return False
        return True
    return False


def detect_door_crossings(track: Trajectory, plan: FloorPlan) -> list[Crossing]:
    """Door crossings along a track, in time order.

    A crossing is a step between consecutive points that moves from outside
    a room (side <= 0) to inside (side > 0) or back, through the door
    segment.  Its time is interpolated where the step meets the door line.
    """
    out = []
    pts = track.points
    for door in plan.doors:
        if len(pts) < 2:
            break
        side = door.side(pts[:, 1:])
        inside = side > 0
        for k in np.flatnonzero(inside[1:] != inside[:-1]):
            p, q = pts[k], pts[k + 1]
            if not _segments_intersect(p[1:], q[1:], door.a, door.b):
                continue
            s0, s1 = side[k], side[k + 1]
            frac = s0 / (s0 - s1) if s0 != s1 else 0.0
            t = float(p[0] + frac * (q[0] - p[0]))
            out.append(Crossing(track.id, door.id, "enter" if inside[k + 1] else "exit", t))
    out.sort(key=lambda c: (c.t, c.door_id))
    return out


def _point_index(track: Trajectory, t: float) -> int:
    times = track.points[:, 0]
    k = int(np.searchsorted(times, t - 1e-9))
    return min(k, len(times) - 1)


def label_tracks(
    tracks: Sequence[Trajectory],
    events: Sequence[DispenserEvent],
    plan: FloorPlan,
    params: FusionParams = FusionParams(),
) -> FusionResult:
    tracks = sorted(tracks, key=lambda tr: tr.id)
    washes: dict[int, list[float]] = {tr.id: [] for tr in tracks}
    matches: dict[int, int | None] = {}
    for k, e in enumerate(events):
        tid = match_event(e, tracks, plan, params.time_tolerance, params.proximity)
        matches[k] = tid
        if tid is not None:
            washes[tid].append(e.timestamp)

    labeled, all_crossings = [], []
    for tr in tracks:
        w = sorted(washes[tr.id])
        crossings = detect_door_crossings(tr, plan)
        judged, intervals = _judge(crossings, w, params)

        labels = [NO_ACTION] * len(tr)

        def put(idx, label):
            if labels[idx] not in (NO_ACTION, label):
                raise ConsistencyError(f"track {tr.id}: point {idx} labeled both {labels[idx]!r} and {label!r}")
            labels[idx] = label

        for t in w:
            put(_point_index(tr, t), WASHED)
        for c in judged:
            put(_point_index(tr, c.t), f"{'enter' if c.direction == 'enter' else 'exit'}_room:{c.door_id}")

        labeled.append(LabeledTrack(tr, labels, judged, w, _status(tr, intervals)))
        all_crossings.extend(judged)

    all_crossings.sort(key=lambda c: (c.t, c.track_id, c.door_id))
    return FusionResult(labeled, all_crossings, matches)


def _judge(crossings: list[Crossing], washes: list[float], params: FusionParams):
    """Judge each crossing and collect the ``[t0, t1)`` clean intervals.

    A wash at the same instant as a crossing counts as before it.
    """
    marks = sorted([(t, 0, None) for t in washes] + [(c.t, 1, n) for n, c in enumerate(crossings)], key=lambda m: (m[0], m[1]))
    intervals: list[list[float]] = []
    clean_at = [False] * len(crossings)
    for t, kind, n in marks:
        live = bool(intervals) and intervals[-1][0] <= t < intervals[-1][1]
        if kind == 0:
            if live:
                intervals[-1][1] = max(intervals[-1][1], t + params.wash_window)
            else:
                intervals.append([t, t + params.wash_window])
            continue
        clean_at[n] = live
        if live and not (params.carry_clean_through_room and crossings[n].direction == "enter"):
            intervals[-1][1] = t

    out = []
    for n, c in enumerate(crossings):
        if c.direction == "enter":
            ok = clean_at[n]
        else:
            nxt = crossings[n + 1].t if n + 1 < len(crossings) else math.inf
            horizon = min(nxt, c.t + params.wash_window)
            ok = any(c.t < t <= horizon for t in washes) or (params.carry_clean_through_room and clean_at[n])
        out.append(Crossing(c.track_id, c.door_id, c.direction, c.t, ok))
    return out, intervals


def judge_crossings(crossings: Sequence[Crossing], washes: Sequence[float], params: FusionParams = FusionParams()) -> list[Crossing]:
    """Compliance of each crossing of one person, given their wash times."""
    crossings = sorted(crossings, key=lambda c: (c.t, c.door_id))
    return _judge(crossings, sorted(washes), params)[0]


def _status(tr: Trajectory, intervals: list[list[float]]) -> list[tuple[float, float, bool]]:
    t, t_end = float(tr.start[0]), float(tr.end[0])
    out = []
    for t0, t1 in intervals:
        if t1 <= t0:
            continue
        if t0 > t:
            out.append((t, t0, False))
        out.append((t0, t1, True))
        t = t1
    if t < t_end or not out:
        out.append((t, max(t, t_end), False))
    return out
