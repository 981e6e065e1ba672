"""Dispenser-use classifiers over per-sensor observation windows.

Any object with ``scan(stream) -> list[DispenserEvent]`` can be plugged into
the pipeline; ``classify_event`` is the single-window entry point.  The
shipped ``DwellClassifier`` fires when a foreground blob stays over the
dispenser's image region long enough.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol, Sequence

import numpy as np
from scipy import ndimage

from .detector import Observation
from .fusion import DispenserEvent
from .scene import Scene, SensorModel

DISPENSER_BOX = 0.5  # side of the ground box projected around a dispenser


class EventClassifier(Protocol):
    def __call__(self, window: Sequence[Observation]) -> DispenserEvent | None: ...

    def scan(self, stream: Sequence[Observation]) -> list[DispenserEvent]: ...


def classify_event(window: Sequence[Observation], c: EventClassifier) -> DispenserEvent | None:
    return c(window)


@dataclass(frozen=True)
class DispenserRegion:
    dispenser_id: str
    rows: tuple[int, int]  # inclusive pixel bounds
    cols: tuple[int, int]

    def contains(self, row: float, col: float) -> bool:
        return self.rows[0] <= row <= self.rows[1] and self.cols[0] <= col <= self.cols[1]


def dispenser_region(s: SensorModel, position, height: float, box: float = DISPENSER_BOX) -> tuple | None:
    """Pixel bounding box of a ``box``-wide column over ``position``.

    None when part of the column falls outside the image, so only sensors
    that see the whole dispenser area get a region.
    """
    x, y = position
    h = box / 2
    corners = np.array([(x + dx, y + dy, z) for dx in (-h, h) for dy in (-h, h) for z in (0.0, height)])
    col, row, zc = s.project(corners)
    hh, ww = s.image_size
    if np.any(zc <= 0) or col.min() < 0 or row.min() < 0 or col.max() > ww or row.max() > hh:
        return None
    return (int(math.floor(row.min())), int(math.ceil(row.max())) - 1), (int(math.floor(col.min())), int(math.ceil(col.max())) - 1)


class DwellClassifier:
    """Rule-based reference: a blob centroid dwelling in a dispenser region.

    ``regions`` maps sensor id to the dispenser regions it sees.  A run is a
    stretch of consecutive frames (gaps up to ``max_skip`` frame periods are
    bridged) in which one blob of at least ``min_area`` pixels keeps its
    centroid inside the region, moving at most ``max_jump`` pixels per frame.  Runs of ``dwell_frames`` frames or more
    become events stamped at the run's midpoint.
    """

    def __init__(
        self,
        regions: dict[str, list[DispenserRegion]],
        frame_rate: float = 10.0,
        dwell_min: float = 1.0,
        min_area: int = 20,
        max_skip: float = 1.5,
        max_jump: float = 6.0,
    ):
        if frame_rate <= 0:
            raise ValueError("frame_rate must be positive")
        self.regions = regions
        self.frame_rate = frame_rate
        self.dwell_frames = max(1, int(round(dwell_min * frame_rate)))
        self.min_area = min_area
        self.max_skip = max_skip
        self.max_jump = max_jump

    @classmethod
    def from_scene(cls, scene: Scene, frame_rate: float = 10.0, dwell_min: float = 1.0, **kw) -> "DwellClassifier":
        regions: dict[str, list[DispenserRegion]] = {}
        for s in scene.sensors:
            for d in scene.plan.dispensers:
                r = dispenser_region(s, d.position, scene.person.height)
                if r is not None:
                    regions.setdefault(s.id, []).append(DispenserRegion(d.id, *r))
        return cls(regions, frame_rate, dwell_min, **kw)

    def _centroids(self, obs: Observation, region: DispenserRegion) -> list[tuple[float, float]]:
        """Centroids of sufficiently large blobs that lie inside ``region``."""
        lab, n = ndimage.label(np.asarray(obs.silhouette, dtype=bool))
        if n == 0:
            return []
        idx = np.arange(1, n + 1)
        area = ndimage.sum_labels(np.ones_like(lab), lab, idx)
        return [
            (r, c)
            for a, (r, c) in zip(area, ndimage.center_of_mass(lab > 0, lab, idx))
            if a >= self.min_area and region.contains(r, c)
        ]

    def scan(self, stream: Sequence[Observation]) -> list[DispenserEvent]:
        stream = sorted(stream, key=lambda o: o.timestamp)
        if not stream:
            return []
        sid = stream[0].sensor_id
        if any(o.sensor_id != sid for o in stream):
            raise ValueError("a window must come from a single sensor")
        events = []
        gap = self.max_skip / self.frame_rate
        for region in self.regions.get(sid, []):
            run: list[float] = []
            last = None
            for o in stream:
                if run and o.timestamp - run[-1] > gap + 1e-9:
                    events.extend(self._close(run, sid, region))
                    run = []
                hits = self._centroids(o, region)
                if run and hits:
                    # follow the blob nearest the previous centroid; a jump means someone else
                    near = min(hits, key=lambda h: math.dist(h, last))
                    if math.dist(near, last) <= self.max_jump:
                        run.append(o.timestamp)
                        last = near
                        continue
                events.extend(self._close(run, sid, region))
                run = [o.timestamp] if hits else []
                last = min(hits) if hits else None
            events.extend(self._close(run, sid, region))
        events.sort(key=lambda e: (e.timestamp, e.dispenser_id))
        return events

    def _close(self, run, sid, region):
        if len(run) >= self.dwell_frames:
            return [DispenserEvent(sid, region.dispenser_id, (run[0] + run[-1]) / 2)]
        return []

    def __call__(self, window: Sequence[Observation]) -> DispenserEvent | None:
        """The first event in the window, if any."""
        found = self.scan(window)
        return found[0] if found else None
