"""Compliance rates, scoring against ground truth and the proximity baseline."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .fusion import Crossing, detect_door_crossings
from .scene import FloorPlan
from .tracker import Trajectory

DIRECTIONS = ("enter", "exit")


@dataclass(frozen=True)
class GroundTruthRecord:
    person_id: int
    door_id: str
    direction: str
    t: float
    washed: bool


def compliance_rate(crossings: Sequence) -> dict[str, float | None]:
    """Compliant fraction per direction; None where there were no crossings.

    Accepts ``Crossing`` objects (``compliant``) or ground-truth records
    (``washed``).
    """
    out = {}
    for d in DIRECTIONS:
        sel = [c for c in crossings if c.direction == d]
        ok = sum(1 for c in sel if _label(c))
        out[d] = ok / len(sel) if sel else None
    return out


def _label(c) -> bool:
    return bool(c.washed if isinstance(c, GroundTruthRecord) else c.compliant)


@dataclass(frozen=True)
class Confusion:
    """Label agreement over matched pairs; positive means compliant."""

    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0


@dataclass(frozen=True)
class AccuracyResult:
    accuracy: float | None  # correct / truth count
    correct: int
    matched: int
    truth_count: int
    pred_count: int
    confusion: Confusion
    pairs: tuple[tuple[int, int], ...] = ()  # (truth index, pred index)

    @property
    def missed(self) -> int:
        return self.truth_count - self.matched

    @property
    def false_positives(self) -> int:
        """Predictions that matched no truth record."""
        return self.pred_count - self.matched


def score_accuracy(pred: Sequence[Crossing], truth: Sequence[GroundTruthRecord], tau_match: float = 5.0) -> AccuracyResult:
    """Greedy one-to-one matching, nearest in time first.

    Pairs need the same door and direction and ``|dt| <= tau_match``.
    Equal gaps go to the lower truth index, then the lower prediction index.
    """
    cands = []
    for i, g in enumerate(truth):
        for j, p in enumerate(pred):
            dt = abs(p.t - g.t)
            if p.door_id == g.door_id and p.direction == g.direction and dt <= tau_match:
                cands.append((dt, i, j))
    cands.sort()
    used_t, used_p, pairs = set(), set(), []
    for _, i, j in cands:
        if i in used_t or j in used_p:
            continue
        used_t.add(i)
        used_p.add(j)
        pairs.append((i, j))
    pairs.sort()

    tp = fp = tn = fn = 0
    for i, j in pairs:
        want, got = _label(truth[i]), _label(pred[j])
        tp += want and got
        tn += not want and not got
        fp += got and not want
        fn += want and not got
    correct = tp + tn
    acc = correct / len(truth) if truth else None
    return AccuracyResult(acc, correct, len(pairs), len(truth), len(pred), Confusion(tp, fp, tn, fn), tuple(pairs))


def proximity_baseline(
    tracks: Sequence[Trajectory],
    plan: FloorPlan,
    radius: float = 1.0,
    include_doors: bool = True,
) -> list[Crossing]:
    """Label crossings by proximity alone, as radio localization would.

    An entry is compliant when the track came within ``radius`` of a
    dispenser (or door, with ``include_doors``) at some earlier point; an
    exit, at some later point.
    """
    anchors = [d.position for d in plan.dispensers]
    segs = [(d.a, d.b) for d in plan.doors] if include_doors else []
    out = []
    for tr in sorted(tracks, key=lambda t: t.id):
        near = _near_any(tr.points[:, 1:], anchors, segs, radius)
        times = tr.points[:, 0]
        for c in detect_door_crossings(tr, plan):
            window = times < c.t if c.direction == "enter" else times > c.t
            out.append(Crossing(c.track_id, c.door_id, c.direction, c.t, bool(np.any(near & window))))
    out.sort(key=lambda c: (c.t, c.track_id, c.door_id))
    return out


def _near_any(xy: np.ndarray, points, segments, radius: float) -> np.ndarray:
    near = np.zeros(len(xy), dtype=bool)
    for p in points:
        near |= np.hypot(*(xy - np.asarray(p)).T) <= radius
    for a, b in segments:
        near |= segment_distance(xy, a, b) <= radius
    return near


def segment_distance(xy, a, b) -> np.ndarray:
    """Distance from each point in ``xy`` to the segment ``a-b``."""
    xy = np.asarray(xy, dtype=float).reshape(-1, 2)
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    ab = b - a
    denom = float(ab @ ab)
    s = np.zeros(len(xy)) if denom == 0 else np.clip((xy - a) @ ab / denom, 0, 1)
    return np.hypot(*(xy - (a + s[:, None] * ab)).T)


@dataclass
class ComplianceReport:
    counts: dict[str, dict[str, int]]
    rates: dict[str, float | None]
    accuracy: AccuracyResult | None = None
    baseline_accuracy: AccuracyResult | None = None
    orphan_events: int = 0
    matched_events: int = 0
    extra: dict[str, float] = field(default_factory=dict)

    @classmethod
    def build(cls, crossings, truth=None, baseline=None, orphan_events=0, matched_events=0, tau_match=5.0):
        counts = {
            d: {
                "crossings": sum(1 for c in crossings if c.direction == d),
                "compliant": sum(1 for c in crossings if c.direction == d and c.compliant),
            }
            for d in DIRECTIONS
        }
        acc = score_accuracy(crossings, truth, tau_match) if truth is not None else None
        base = score_accuracy(baseline, truth, tau_match) if truth is not None and baseline is not None else None
        return cls(counts, compliance_rate(crossings), acc, base, orphan_events, matched_events)

    def to_records(self) -> list[dict]:
        recs = []
        for d in DIRECTIONS:
            recs.append({"metric": f"{d}.crossings", "value": self.counts[d]["crossings"]})
            recs.append({"metric": f"{d}.compliant", "value": self.counts[d]["compliant"]})
            recs.append({"metric": f"{d}.rate", "value": self.rates[d]})
        for name, a in (("pipeline", self.accuracy), ("baseline", self.baseline_accuracy)):
            if a is None:
                continue
            recs.append({"metric": f"{name}.accuracy", "value": a.accuracy})
            recs.append({"metric": f"{name}.correct", "value": a.correct})
            recs.append({"metric": f"{name}.matched", "value": a.matched})
            recs.append({"metric": f"{name}.truth_count", "value": a.truth_count})
            recs.append({"metric": f"{name}.false_positives", "value": a.false_positives})
            for k in ("tp", "fp", "tn", "fn"):
                recs.append({"metric": f"{name}.confusion.{k}", "value": getattr(a.confusion, k)})
        recs.append({"metric": "events.matched", "value": self.matched_events})
        recs.append({"metric": "events.orphan", "value": self.orphan_events})
        for k in sorted(self.extra):
            recs.append({"metric": k, "value": self.extra[k]})
        return recs

    def summary(self) -> str:
        def pct(v):
            return "n/a" if v is None else f"{v:.4f}"

        lines = []
        for d in DIRECTIONS:
            c = self.counts[d]
            lines.append(f"{d:5s}  crossings {c['crossings']:4d}  compliant {c['compliant']:4d}  rate {pct(self.rates[d])}")
        if self.accuracy is not None:
            a = self.accuracy
            lines.append(f"pipeline accuracy {pct(a.accuracy)} ({a.correct}/{a.truth_count}, unmatched predictions {a.false_positives})")
        if self.baseline_accuracy is not None:
            b = self.baseline_accuracy
            lines.append(f"baseline accuracy {pct(b.accuracy)} ({b.correct}/{b.truth_count})")
        lines.append(f"dispenser events: {self.matched_events} matched, {self.orphan_events} orphan")
        return "\n".join(lines) + "\n"
