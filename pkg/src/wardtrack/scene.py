"""Static world model: ground grid, floor plan, sensor and person geometry.

Coordinates are metric.  The ground plane is ``z = 0`` and cells are
addressed as ``(i, j)`` with ``i`` along x and ``j`` along y.  Cell order
(used for deterministic tie-breaking downstream) is lexicographic on
``(i, j)``.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator

import numpy as np
import yaml

from .errors import ExtentError, FormatError, ValidationError

SCENE_FORMAT_VERSION = 1

Point = tuple[float, float]
Segment = tuple[Point, Point]
Cell = tuple[int, int]


@dataclass(frozen=True)
class GridSpec:
    origin: Point = (0.0, 0.0)
    cell_size: float = 0.25
    width: int = 1
    height: int = 1

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValidationError(f"cell_size must be positive, got {self.cell_size}")
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"grid must have at least one cell, got {self.width}x{self.height}")

    @property
    def extent(self) -> tuple[float, float, float, float]:
        """(xmin, ymin, xmax, ymax) in meters."""
        x0, y0 = self.origin
        return (x0, y0, x0 + self.width * self.cell_size, y0 + self.height * self.cell_size)

    @property
    def n_cells(self) -> int:
        return self.width * self.height

    def contains(self, p: Point) -> bool:
        xmin, ymin, xmax, ymax = self.extent
        return xmin <= p[0] <= xmax and ymin <= p[1] <= ymax

    def cells(self) -> Iterator[Cell]:
        for i in range(self.width):
            for j in range(self.height):
                yield (i, j)

    def cell_centers(self) -> np.ndarray:
        """Array of shape (width, height, 2) holding every cell center."""
        x0, y0 = self.origin
        xs = x0 + (np.arange(self.width) + 0.5) * self.cell_size
        ys = y0 + (np.arange(self.height) + 0.5) * self.cell_size
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack([gx, gy], axis=-1)


def world_to_cell(p: Point, g: GridSpec) -> Cell:
    """Index of the cell containing ``p``.

    The upper extent edge belongs to the last cell so that the whole
    closed extent maps somewhere.
    """
    if not g.contains(p):
        raise ExtentError(f"point {tuple(p)} outside grid extent {g.extent}")
    i = int(math.floor((p[0] - g.origin[0]) / g.cell_size))
    j = int(math.floor((p[1] - g.origin[1]) / g.cell_size))
    return (min(i, g.width - 1), min(j, g.height - 1))


def cell_to_world(cell: Cell, g: GridSpec) -> Point:
    i, j = cell
    if not (0 <= i < g.width and 0 <= j < g.height):
        raise ExtentError(f"cell {tuple(cell)} outside {g.width}x{g.height} grid")
    return (g.origin[0] + (i + 0.5) * g.cell_size, g.origin[1] + (j + 0.5) * g.cell_size)


@dataclass(frozen=True)
class Door:
    """A doorway segment ``a -> b`` leading into ``room_id``.

    ``room_side`` says on which side of the directed segment the room lies
    (``"left"`` means positive cross product).
    """

    id: str
    a: Point
    b: Point
    room_id: str
    room_side: str = "left"

    def __post_init__(self):
        if self.room_side not in ("left", "right"):
            raise ValidationError(f"door {self.id}: room_side must be 'left' or 'right'")

    @property
    def center(self) -> Point:
        return ((self.a[0] + self.b[0]) / 2, (self.a[1] + self.b[1]) / 2)

    def side(self, p) -> np.ndarray:
        """Signed side of ``p`` (broadcasts); positive means inside the room."""
        p = np.asarray(p, dtype=float)
        ax, ay = self.a
        bx, by = self.b
        cross = (bx - ax) * (p[..., 1] - ay) - (by - ay) * (p[..., 0] - ax)
        return cross if self.room_side == "left" else -cross


@dataclass(frozen=True)
class Dispenser:
    id: str
    position: Point


@dataclass(frozen=True)
class FloorPlan:
    walls: tuple[Segment, ...] = ()
    doors: tuple[Door, ...] = ()
    dispensers: tuple[Dispenser, ...] = ()
    wall_height: float = 2.4

    def __post_init__(self):
        for kind, items in (("door", self.doors), ("dispenser", self.dispensers)):
            ids = [it.id for it in items]
            if len(set(ids)) != len(ids):
                raise ValidationError(f"duplicate {kind} ids: {ids}")

    def door(self, door_id: str) -> Door:
        for d in self.doors:
            if d.id == door_id:
                return d
        raise KeyError(door_id)

    def dispenser(self, dispenser_id: str) -> Dispenser:
        for d in self.dispensers:
            if d.id == dispenser_id:
                return d
        raise KeyError(dispenser_id)

    def check_within(self, g: GridSpec) -> None:
        pts = [p for w in self.walls for p in w]
        pts += [p for d in self.doors for p in (d.a, d.b)]
        pts += [d.position for d in self.dispensers]
        for p in pts:
            if not g.contains(p):
                raise ValidationError(f"floor plan point {p} outside grid extent {g.extent}")


@dataclass(frozen=True)
class SensorModel:
    """Pinhole depth sensor.

    ``yaw`` is the heading of the optical axis in the ground plane and
    ``pitch`` its tilt below horizontal, both in degrees.  At ``pitch=90``
    the sensor looks straight down and ``yaw`` fixes the image rotation:
    image columns run along the world direction ``(sin yaw, -cos yaw)``.
    """

    id: str
    position: tuple[float, float, float]
    yaw: float = 0.0
    pitch: float = 90.0
    fov_h: float = 58.0
    fov_v: float = 45.0
    range_min: float = 0.8
    range_max: float = 4.0
    image_size: tuple[int, int] = (64, 80)

    def __post_init__(self):
        if not 0 < self.fov_h < 180 or not 0 < self.fov_v < 180:
            raise ValidationError(f"sensor {self.id}: field of view must be in (0, 180) degrees")
        if not 0 <= self.range_min < self.range_max:
            raise ValidationError(f"sensor {self.id}: need 0 <= range_min < range_max")
        if self.image_size[0] < 1 or self.image_size[1] < 1:
            raise ValidationError(f"sensor {self.id}: bad image size {self.image_size}")

    def basis(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(forward, right, down) unit vectors of the camera frame."""
        yw, pt = math.radians(self.yaw), math.radians(self.pitch)
        f = np.array([math.cos(pt) * math.cos(yw), math.cos(pt) * math.sin(yw), -math.sin(pt)])
        r = np.array([math.sin(yw), -math.cos(yw), 0.0])
        d = np.cross(f, r)
        return f, r, d

    @property
    def focal(self) -> tuple[float, float]:
        h, w = self.image_size
        return (w / 2) / math.tan(math.radians(self.fov_h) / 2), (h / 2) / math.tan(math.radians(self.fov_v) / 2)

    def project(self, points) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Project 3D points to continuous pixel coords.

        Returns ``(col, row, zc)`` where ``zc`` is depth along the optical
        axis.  Pixel ``(r, c)`` covers ``[c, c+1) x [r, r+1)``.
        """
        pts = np.asarray(points, dtype=float)
        f, r, d = self.basis()
        v = pts - np.asarray(self.position)
        zc = v @ f
        fx, fy = self.focal
        h, w = self.image_size
        with np.errstate(divide="ignore", invalid="ignore"):
            col = w / 2 + fx * (v @ r) / zc
            row = h / 2 + fy * (v @ d) / zc
        return col, row, zc

    def in_frustum(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        col, row, zc = self.project(pts)
        dist = np.linalg.norm(pts - np.asarray(self.position), axis=-1)
        h, w = self.image_size
        return (zc > 0) & (col >= 0) & (col <= w) & (row >= 0) & (row <= h) & (dist >= self.range_min) & (dist <= self.range_max)


@dataclass(frozen=True)
class PersonModel:
    height: float = 1.7
    radius: float = 0.25

    def __post_init__(self):
        if not (self.height > 0 and self.radius > 0):
            raise ValidationError("person height and radius must be positive")


@dataclass(frozen=True)
class Scene:
    grid: GridSpec
    plan: FloorPlan = field(default_factory=FloorPlan)
    sensors: tuple[SensorModel, ...] = ()
    person: PersonModel = field(default_factory=PersonModel)

    def __post_init__(self):
        ids = [s.id for s in self.sensors]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"duplicate sensor ids: {ids}")
        self.plan.check_within(self.grid)

    def sensor(self, sensor_id: str) -> SensorModel:
        for s in self.sensors:
            if s.id == sensor_id:
                return s
        raise KeyError(sensor_id)


# -- rendering ---------------------------------------------------------------


@functools.lru_cache(maxsize=64)
def pixel_rays(s: SensorModel) -> np.ndarray:
    """Unit ray direction through every pixel center, shape (H, W, 3)."""
    h, w = s.image_size
    f, r, d = s.basis()
    fx, fy = s.focal
    cols = (np.arange(w) + 0.5 - w / 2) / fx
    rows = (np.arange(h) + 0.5 - h / 2) / fy
    rays = f + cols[None, :, None] * r + rows[:, None, None] * d
    return rays / np.linalg.norm(rays, axis=-1, keepdims=True)


@functools.lru_cache(maxsize=64)
def wall_depth(s: SensorModel, plan: FloorPlan) -> np.ndarray:
    """Distance along each pixel ray to the nearest wall, ``inf`` if none."""
    rays = pixel_rays(s)
    out = np.full(rays.shape[:2], np.inf)
    cx, cy, cz = s.position
    dx, dy, dz = rays[..., 0], rays[..., 1], rays[..., 2]
    for (ax, ay), (bx, by) in plan.walls:
        ex, ey = bx - ax, by - ay
        denom = dx * ey - dy * ex
        with np.errstate(divide="ignore", invalid="ignore"):
            t = ((ax - cx) * ey - (ay - cy) * ex) / denom
            u = ((ax - cx) * dy - (ay - cy) * dx) / denom
        z = cz + t * dz
        hit = (np.abs(denom) > 1e-12) & (t > 1e-9) & (u >= 0) & (u <= 1) & (z >= 0) & (z <= plan.wall_height)
        out = np.where(hit & (t < out), t, out)
    return out


def person_depth(
    position: Point,
    s: SensorModel,
    m: PersonModel,
    plan: FloorPlan | None = None,
) -> np.ndarray:
    """Range image of a single upright cylinder standing at ``position``.

    Pixels whose first hit falls outside ``[range_min, range_max]`` or
    behind a wall are ``inf``.
    """
    rays = pixel_rays(s)
    h, w = s.image_size
    cx, cy, cz = s.position
    ox, oy = cx - position[0], cy - position[1]
    # cheap reject: nothing of the cylinder can be in range
    if math.hypot(ox, oy) - m.radius > s.range_max:
        return np.full((h, w), np.inf)

    dx, dy, dz = rays[..., 0], rays[..., 1], rays[..., 2]
    a = dx * dx + dy * dy
    b = 2 * (dx * ox + dy * oy)
    c = ox * ox + oy * oy - m.radius**2
    disc = b * b - 4 * a * c
    with np.errstate(divide="ignore", invalid="ignore"):
        t_side = (-b - np.sqrt(np.where(disc >= 0, disc, np.nan))) / (2 * a)
    z_side = cz + t_side * dz
    side_ok = (disc >= 0) & (a > 1e-15) & (t_side > 0) & (z_side >= 0) & (z_side <= m.height)
    t_side = np.where(side_ok, t_side, np.inf)

    with np.errstate(divide="ignore", invalid="ignore"):
        t_cap = (m.height - cz) / dz
    px = ox + t_cap * dx
    py = oy + t_cap * dy
    cap_ok = (np.abs(dz) > 1e-15) & (t_cap > 0) & (px * px + py * py <= m.radius**2)
    t_cap = np.where(cap_ok, t_cap, np.inf)

    t = np.minimum(t_side, t_cap)
    visible = (t >= s.range_min) & (t <= s.range_max)
    if plan is not None and plan.walls:
        visible &= t < wall_depth(s, plan)
    return np.where(visible, t, np.inf)


def project_person(
    cell: Cell,
    s: SensorModel,
    m: PersonModel,
    g: GridSpec,
    plan: FloorPlan | None = None,
) -> np.ndarray:
    """Binary silhouette (H x W bool) of a person standing at ``cell``."""
    return np.isfinite(person_depth(cell_to_world(cell, g), s, m, plan))


# -- config files -----------------------------------------------------------


def _pt(v) -> Point:
    return (float(v[0]), float(v[1]))


def scene_from_dict(d: dict, path=None) -> Scene:
    version = d.get("format_version")
    if version != SCENE_FORMAT_VERSION:
        raise FormatError(f"scene format_version {version!r}, expected {SCENE_FORMAT_VERSION}", path)
    try:
        gd = d["grid"]
        grid = GridSpec(_pt(gd.get("origin", (0, 0))), float(gd.get("cell_size", 0.25)), int(gd["width"]), int(gd["height"]))
        plan = FloorPlan(
            walls=tuple((_pt(w[0]), _pt(w[1])) for w in d.get("walls", [])),
            doors=tuple(
                Door(str(x["id"]), _pt(x["segment"][0]), _pt(x["segment"][1]), str(x["room_id"]), x.get("room_side", "left"))
                for x in d.get("doors", [])
            ),
            dispensers=tuple(Dispenser(str(x["id"]), _pt(x["position"])) for x in d.get("dispensers", [])),
            wall_height=float(d.get("wall_height", 2.4)),
        )
        sensors = []
        for x in d.get("sensors", []):
            kw = {k: float(x[k]) for k in ("yaw", "pitch", "fov_h", "fov_v", "range_min", "range_max") if k in x}
            if "image_size" in x:
                kw["image_size"] = (int(x["image_size"][0]), int(x["image_size"][1]))
            sensors.append(SensorModel(str(x["id"]), tuple(float(v) for v in x["position"]), **kw))
        pd = d.get("person", {})
        person = PersonModel(float(pd.get("height", 1.7)), float(pd.get("radius", 0.25)))
        return Scene(grid, plan, tuple(sensors), person)
    except (KeyError, TypeError, IndexError) as exc:
        raise FormatError(f"bad scene description: {exc!r}", path) from exc


def scene_to_dict(scene: Scene) -> dict:
    g, p = scene.grid, scene.plan
    return {
        "format_version": SCENE_FORMAT_VERSION,
        "grid": {"origin": list(g.origin), "cell_size": g.cell_size, "width": g.width, "height": g.height},
        "wall_height": p.wall_height,
        "walls": [[list(a), list(b)] for a, b in p.walls],
        "doors": [
            {"id": d.id, "segment": [list(d.a), list(d.b)], "room_id": d.room_id, "room_side": d.room_side}
            for d in p.doors
        ],
        "dispensers": [{"id": d.id, "position": list(d.position)} for d in p.dispensers],
        "sensors": [
            {
                "id": s.id,
                "position": list(s.position),
                "yaw": s.yaw,
                "pitch": s.pitch,
                "fov_h": s.fov_h,
                "fov_v": s.fov_v,
                "range_min": s.range_min,
                "range_max": s.range_max,
                "image_size": list(s.image_size),
            }
            for s in scene.sensors
        ],
        "person": {"height": scene.person.height, "radius": scene.person.radius},
    }


def load_scene(path) -> Scene:
    path = Path(path)
    try:
        d = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        line = exc.problem_mark.line + 1 if getattr(exc, "problem_mark", None) else None
        raise FormatError(f"invalid YAML: {exc}", path, line) from exc
    if not isinstance(d, dict):
        raise FormatError("scene file must hold a mapping", path)
    return scene_from_dict(d, path)


def save_scene(scene: Scene, path) -> None:
    Path(path).write_text(yaml.safe_dump(scene_to_dict(scene), sort_keys=False))


def default_scene() -> Scene:
    """The bundled ward: a corridor with three patient rooms."""
    return load_scene(Path(__file__).parent / "data" / "ward.yaml")
