"""Sparse occupancy detection by set-covering greedy pursuit.

Each sensor gets a dictionary holding one binary silhouette ("atom") per
ground cell.  ``pursue`` explains an observed foreground mask as a union of
at most ``max_atoms`` atoms; ``detect_frame`` runs it on every sensor of a
frame and fuses the per-sensor cells into ground-plane detections.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import ShapeError
from .scene import Cell, FloorPlan, GridSpec, PersonModel, Scene, SensorModel, cell_to_world, project_person

DEFAULT_MAX_ATOMS = 10
DEFAULT_OVERFILL_PENALTY = 1.0
DEFAULT_STOP_FRACTION = 0.05
DEFAULT_MERGE_RADIUS = 0.5


@dataclass(frozen=True)
class Observation:
    sensor_id: str
    timestamp: float
    silhouette: np.ndarray  # bool (H, W)


@dataclass
class SilhouetteDictionary:
    """Atoms for one sensor, stored as a stacked ``(n, H, W)`` bool array.

    ``cells`` is sorted, so the row index of an atom doubles as its rank for
    tie-breaking.
    """

    sensor_id: str
    image_size: tuple[int, int]
    cells: list[Cell]
    masks: np.ndarray
    _flat: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.masks = np.asarray(self.masks, dtype=bool).reshape(len(self.cells), *self.image_size)
        self._flat = self.masks.reshape(len(self.cells), self.image_size[0] * self.image_size[1]).astype(np.float32)

    def __len__(self) -> int:
        return len(self.cells)

    @property
    def atoms(self) -> dict[Cell, np.ndarray]:
        return {c: self.masks[k] for k, c in enumerate(self.cells)}

    @property
    def atom_norms(self) -> dict[Cell, int]:
        counts = self._flat.sum(axis=1)
        return {c: int(n) for c, n in zip(self.cells, counts)}

    def index(self, cell: Cell) -> int:
        return self.cells.index(tuple(cell))

    def union(self, cells: Iterable[Cell]) -> np.ndarray:
        out = np.zeros(self.image_size, dtype=bool)
        for c in cells:
            out |= self.masks[self.index(c)]
        return out

    def default_stop(self) -> float:
        """Stopping threshold: a fixed fraction of the smallest atom."""
        if not self.cells:
            return 0.0
        return DEFAULT_STOP_FRACTION * float(self._flat.sum(axis=1).min())


@dataclass(frozen=True)
class OccupancyEstimate:
    sensor_id: str
    timestamp: float
    occupied_cells: tuple[Cell, ...]
    residual_energy: float
    gains: tuple[float, ...] = ()
    residual_trace: tuple[float, ...] = ()


@dataclass(frozen=True)
class Detection:
    timestamp: float
    x: float
    y: float
    sources: tuple[tuple[str, Cell], ...]


@dataclass(frozen=True)
class DetectionSet:
    timestamp: float
    detections: tuple[Detection, ...] = ()

    def __len__(self):
        return len(self.detections)

    def points(self) -> np.ndarray:
        return np.array([(d.x, d.y) for d in self.detections], dtype=float).reshape(-1, 2)


def build_dictionary(
    s: SensorModel,
    g: GridSpec,
    m: PersonModel,
    plan: FloorPlan | None = None,
) -> SilhouetteDictionary:
    cells, masks = [], []
    for cell in g.cells():
        im = project_person(cell, s, m, g, plan)
        if im.any():
            cells.append(cell)
            masks.append(im)
    h, w = s.image_size
    stack = np.array(masks, dtype=bool) if masks else np.zeros((0, h, w), dtype=bool)
    return SilhouetteDictionary(s.id, (h, w), cells, stack)


def build_dictionaries(scene: Scene) -> dict[str, SilhouetteDictionary]:
    return {s.id: build_dictionary(s, scene.grid, scene.person, scene.plan) for s in scene.sensors}


def residual_energy(y: np.ndarray, D: SilhouetteDictionary, cells: Iterable[Cell]) -> float:
    """Squared norm of the set-covering residual: observed pixels no selected atom covers."""
    return float(np.count_nonzero(np.asarray(y, dtype=bool) & ~D.union(cells)))


def pursue(
    y: Observation,
    D: SilhouetteDictionary,
    max_atoms: int = DEFAULT_MAX_ATOMS,
    stop: float | None = None,
    overfill_penalty: float = DEFAULT_OVERFILL_PENALTY,
) -> OccupancyEstimate:
    """Greedy set-covering pursuit of the occupied cells behind ``y``.

    The gain of a candidate atom is the number of observed pixels it would
    newly cover, minus ``overfill_penalty`` times its pixels outside the
    observation.  Selection stops after ``max_atoms`` atoms, when the best
    gain is ``<= stop``, or when the residual is empty.  Equal gains go to
    the lowest cell.
    """
    if max_atoms < 1:
        raise ValueError(f"max_atoms must be >= 1, got {max_atoms}")
    sil = np.asarray(y.silhouette, dtype=bool)
    if sil.shape != tuple(D.image_size):
        raise ShapeError(f"silhouette shape {sil.shape} does not match dictionary {tuple(D.image_size)}")
    if stop is None:
        stop = D.default_stop()

    flat_y = sil.ravel()
    residual = flat_y.copy()
    chosen: list[int] = []
    gains: list[float] = []
    trace = [float(residual.sum())]
    if len(D) and residual.any():
        atoms = D._flat
        overfill = overfill_penalty * (atoms @ (~flat_y).astype(np.float32))
        available = np.ones(len(D), dtype=bool)
        while len(chosen) < max_atoms and residual.any():
            gain = atoms @ residual.astype(np.float32) - overfill
            gain[~available] = -np.inf
            k = int(np.argmax(gain))
            if not gain[k] > stop:
                break
            chosen.append(k)
            gains.append(float(gain[k]))
            available[k] = False
            residual &= ~D.masks[k].ravel()
            trace.append(float(residual.sum()))
        chosen = _prune(chosen, D, flat_y, overfill, stop)

    cells = tuple(sorted(D.cells[k] for k in chosen))
    return OccupancyEstimate(D.sensor_id, y.timestamp, cells, residual_energy(sil, D, cells), tuple(gains), tuple(trace))


def _prune(chosen: list[int], D: SilhouetteDictionary, flat_y: np.ndarray, overfill: np.ndarray, stop: float) -> list[int]:
    # Reverse delete: an early greedy pick can become redundant once later
    # atoms cover its pixels.  Drop the weakest atom whose gain given all the
    # others is <= stop, and repeat.
    chosen = list(chosen)
    while len(chosen) > 1:
        masks = D.masks[chosen].reshape(len(chosen), -1) & flat_y
        cover = masks.sum(axis=0)
        unique = (masks & (cover == 1)).sum(axis=1) - overfill[chosen]
        worst = min(range(len(chosen)), key=lambda q: (unique[q], -chosen[q]))
        if unique[worst] > stop:
            break
        del chosen[worst]
    return chosen


def merge_detections(
    per_sensor: Sequence[tuple[str, Cell, tuple[float, float]]],
    timestamp: float,
    merge_radius: float = DEFAULT_MERGE_RADIUS,
) -> DetectionSet:
    """Fuse per-sensor cell hits into one detection per person.

    Pairs from different sensors are linked closest-first while they lie
    within ``merge_radius`` and the two clusters share no sensor; each
    cluster becomes a detection at its centroid.  The result does not depend
    on input order.
    """
    items = sorted(per_sensor, key=lambda r: (r[0], r[1]))
    n = len(items)
    if n == 0:
        return DetectionSet(timestamp, ())
    pts = np.array([r[2] for r in items], dtype=float)
    parent = list(range(n))
    members = [{items[k][0]} for k in range(n)]

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    pairs = []
    for a in range(n):
        for b in range(a + 1, n):
            if items[a][0] == items[b][0]:
                continue
            dist = float(np.hypot(*(pts[a] - pts[b])))
            if dist <= merge_radius:
                pairs.append((dist, a, b))
    for _, a, b in sorted(pairs):
        ra, rb = find(a), find(b)
        if ra == rb or members[ra] & members[rb]:
            continue
        lo, hi = min(ra, rb), max(ra, rb)
        parent[hi] = lo
        members[lo] |= members[hi]

    clusters: dict[int, list[int]] = {}
    for k in range(n):
        clusters.setdefault(find(k), []).append(k)
    dets = []
    for ks in clusters.values():
        c = pts[ks].mean(axis=0)
        dets.append(Detection(timestamp, float(c[0]), float(c[1]), tuple((items[k][0], items[k][1]) for k in ks)))
    dets.sort(key=lambda d: (d.x, d.y, d.sources))
    return DetectionSet(timestamp, tuple(dets))


def detect_frame(
    frame: Iterable[Observation],
    dicts: Mapping[str, SilhouetteDictionary],
    grid: GridSpec,
    max_atoms: int = DEFAULT_MAX_ATOMS,
    stop: float | None = None,
    overfill_penalty: float = DEFAULT_OVERFILL_PENALTY,
    merge_radius: float = DEFAULT_MERGE_RADIUS,
    jobs: int = 1,
) -> tuple[DetectionSet, list[OccupancyEstimate]]:
    """Detect people in one synchronized frame.

    Returns the merged detections and the per-sensor estimates they came
    from (the latter feed the detection log).
    """
    frame = sorted(frame, key=lambda o: o.sensor_id)
    if not frame:
        return DetectionSet(0.0, ()), []
    timestamp = min(o.timestamp for o in frame)

    def run(obs):
        return pursue(obs, dicts[obs.sensor_id], max_atoms, stop, overfill_penalty)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            estimates = list(ex.map(run, frame))
        estimates.sort(key=lambda e: e.sensor_id)
    else:
        estimates = [run(o) for o in frame]

    hits = [(e.sensor_id, c, cell_to_world(c, grid)) for e in estimates for c in e.occupied_cells]
    return merge_detections(hits, timestamp, merge_radius), estimates
