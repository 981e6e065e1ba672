"""Synthetic ward simulator: scripted agents, rendered silhouettes, truth labels.

Agents move by linear interpolation between timed waypoints.  Each frame a
sensor sees the union of the silhouettes of every agent present, rendered
at the agent's grid cell, so noiseless frames are exact unions of
dictionary atoms.  Truth crossings and wash times come straight from the
scripts.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .compliance import GroundTruthRecord, segment_distance
from .detector import Observation
from .errors import FormatError, ValidationError
from .fusion import Crossing, FusionParams, judge_crossings
from .scene import Scene, cell_to_world, default_scene, load_scene, person_depth, scene_from_dict, scene_to_dict, world_to_cell
from .tracker import Trajectory

SIM_FORMAT_VERSION = 1
SCRIPT_TOLERANCE = 0.3  # how close an agent must be to the dispenser / door it uses
WASH_DURATION = 2.0
WALK_SPEED = 1.2
SCENARIO_KINDS = ("compliant_entry", "passby_no_wash", "crossing_pair", "blind_gap", "crowded", "mixed")


@dataclass(frozen=True)
class AgentScript:
    """Timed waypoints plus the actions the agent performs along them.

    ``room_visits`` holds ``(door_id, t_enter, t_exit)``; either time may be
    None when the agent starts or ends inside the room.  ``behaviour`` is
    a free-form tag (e.g. ``"passby_enter"``) carried for analysis only.
    """

    agent_id: int
    waypoints: tuple[tuple[float, float, float], ...]
    wash_actions: tuple[tuple[str, float, float], ...] = ()
    room_visits: tuple[tuple[str, float | None, float | None], ...] = ()
    behaviour: str = ""

    def __post_init__(self):
        object.__setattr__(self, "waypoints", tuple(tuple(float(v) for v in w) for w in self.waypoints))
        object.__setattr__(self, "wash_actions", tuple((str(d), float(t), float(s)) for d, t, s in self.wash_actions))
        object.__setattr__(
            self,
            "room_visits",
            tuple((str(d), None if a is None else float(a), None if b is None else float(b)) for d, a, b in self.room_visits),
        )

    @property
    def start(self) -> float:
        return self.waypoints[0][0]

    @property
    def end(self) -> float:
        return self.waypoints[-1][0]

    def positions(self, times) -> np.ndarray:
        """(n, 2) positions at ``times``; NaN where the agent is absent."""
        times = np.asarray(times, dtype=float)
        w = np.array(self.waypoints)
        xy = np.stack([np.interp(times, w[:, 0], w[:, 1]), np.interp(times, w[:, 0], w[:, 2])], axis=-1)
        absent = (times < self.start - 1e-9) | (times > self.end + 1e-9)
        xy[absent] = np.nan
        return xy

    def position(self, t: float):
        p = self.positions([t])[0]
        return None if np.isnan(p[0]) else (float(p[0]), float(p[1]))

    def wash_times(self) -> list[float]:
        """Midpoint of each wash."""
        return sorted(t + d / 2 for _, t, d in self.wash_actions)

    def crossings(self) -> list[Crossing]:
        out = []
        for door, t_in, t_out in self.room_visits:
            if t_in is not None:
                out.append(Crossing(self.agent_id, door, "enter", t_in))
            if t_out is not None:
                out.append(Crossing(self.agent_id, door, "exit", t_out))
        return sorted(out, key=lambda c: (c.t, c.door_id))


@dataclass(frozen=True)
class NoiseModel:
    pixel_flip_prob: float = 0.0
    dropout_prob: float = 0.0

    def __post_init__(self):
        for name in ("pixel_flip_prob", "dropout_prob"):
            v = getattr(self, name)
            if not 0 <= v <= 1:
                raise ValidationError(f"{name} must lie in [0, 1], got {v}")


@dataclass
class SimConfig:
    agents: list[AgentScript] = field(default_factory=list)
    scene: dict | str | None = None  # embedded scene, a path, or None for the bundled ward
    frame_rate: float = 10.0
    noise: NoiseModel = NoiseModel()
    seed: int = 0
    random_agents: dict | None = None  # {n_agents, wash_probability}
    kind: str | None = None
    duration: float | None = None

    def __post_init__(self):
        if not self.frame_rate > 0:
            raise ValidationError(f"frame_rate must be positive, got {self.frame_rate}")

    def load_scene(self, base: Path | None = None) -> Scene:
        if self.scene is None:
            return default_scene()
        if isinstance(self.scene, dict):
            return scene_from_dict(self.scene)
        p = Path(self.scene)
        if base is not None and not p.is_absolute():
            p = base / p
        return load_scene(p)

    def to_dict(self) -> dict:
        return {
            "format_version": SIM_FORMAT_VERSION,
            "kind": self.kind,
            "seed": self.seed,
            "frame_rate": self.frame_rate,
            "duration": self.duration,
            "noise": {"pixel_flip_prob": self.noise.pixel_flip_prob, "dropout_prob": self.noise.dropout_prob},
            "scene": self.scene,
            "random_agents": self.random_agents,
            "agents": [
                {
                    "agent_id": a.agent_id,
                    "waypoints": [list(w) for w in a.waypoints],
                    "wash_actions": [list(w) for w in a.wash_actions],
                    "room_visits": [list(v) for v in a.room_visits],
                    "behaviour": a.behaviour,
                }
                for a in self.agents
            ],
        }

    @classmethod
    def from_dict(cls, d: dict, path=None) -> "SimConfig":
        if not isinstance(d, dict) or d.get("format_version") != SIM_FORMAT_VERSION:
            got = d.get("format_version") if isinstance(d, dict) else None
            raise FormatError(f"simulation config format_version {got!r}, expected {SIM_FORMAT_VERSION}", path)
        try:
            agents = [
                AgentScript(int(a["agent_id"]), a["waypoints"], a.get("wash_actions", []), a.get("room_visits", []), str(a.get("behaviour") or ""))
                for a in d.get("agents") or []
            ]
            noise = NoiseModel(**(d.get("noise") or {}))
            return cls(
                agents=agents,
                scene=d.get("scene"),
                frame_rate=float(d.get("frame_rate", 10.0)),
                noise=noise,
                seed=int(d.get("seed", 0)),
                random_agents=d.get("random_agents"),
                kind=d.get("kind"),
                duration=d.get("duration"),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ValidationError):
                raise
            raise FormatError(f"bad simulation config: {exc!r}", path) from exc

    def save(self, path) -> None:
        Path(path).write_text(yaml.safe_dump(self.to_dict(), sort_keys=False))

    @classmethod
    def load(cls, path) -> "SimConfig":
        path = Path(path)
        try:
            d = yaml.safe_load(path.read_text())
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            raise FormatError(f"invalid YAML: {exc}", path, mark.line + 1 if mark else None) from exc
        return cls.from_dict(d, path)


@dataclass
class SimResult:
    scene: Scene
    times: np.ndarray
    frames: list[list[Observation]]  # per frame, one observation per sensor that did not drop out
    truth: list[GroundTruthRecord]
    trajectories: list[Trajectory]
    washes: list[tuple[int, str, float]]  # (agent_id, dispenser_id, midpoint)
    scripts: list[AgentScript]

    def stream(self, sensor_id: str) -> list[Observation]:
        return [o for f in self.frames for o in f if o.sensor_id == sensor_id]


def validate_script(a: AgentScript, scene: Scene, v_max: float = 2.0, tol: float = SCRIPT_TOLERANCE) -> None:
    w = np.array(a.waypoints, dtype=float).reshape(-1, 3)
    if len(w) == 0:
        raise ValidationError(f"agent {a.agent_id}: no waypoints")
    if not np.all(np.isfinite(w)):
        raise ValidationError(f"agent {a.agent_id}: non-finite waypoint")
    dt = np.diff(w[:, 0])
    if np.any(dt <= 0):
        raise ValidationError(f"agent {a.agent_id}: waypoint times must increase strictly")
    speed = np.hypot(np.diff(w[:, 1]), np.diff(w[:, 2])) / np.where(dt > 0, dt, 1)
    if np.any(speed > v_max + 1e-9):
        k = int(np.argmax(speed))
        raise ValidationError(f"agent {a.agent_id}: speed {speed[k]:.3f} m/s exceeds {v_max} between waypoints {k} and {k + 1}")
    x0, y0, x1, y1 = scene.grid.extent
    if np.any((w[:, 1] < x0) | (w[:, 1] >= x1) | (w[:, 2] < y0) | (w[:, 2] >= y1)):
        raise ValidationError(f"agent {a.agent_id}: waypoint outside the grid")

    def at(t, what):
        p = a.position(t)
        if p is None:
            raise ValidationError(f"agent {a.agent_id}: {what} at t={t} lies outside the script's time span")
        return p

    for d_id, t, dur in a.wash_actions:
        try:
            disp = scene.plan.dispenser(d_id)
        except KeyError as exc:
            raise ValidationError(f"agent {a.agent_id}: unknown dispenser {d_id!r}") from exc
        if dur <= 0:
            raise ValidationError(f"agent {a.agent_id}: wash duration must be positive")
        for tt in (t, t + dur):
            p = at(tt, f"wash at {d_id}")
            if math.dist(p, disp.position) > tol:
                raise ValidationError(f"agent {a.agent_id}: not within {tol} m of {d_id} at t={tt}")
    for d_id, t_in, t_out in a.room_visits:
        try:
            door = scene.plan.door(d_id)
        except KeyError as exc:
            raise ValidationError(f"agent {a.agent_id}: unknown door {d_id!r}") from exc
        if t_in is not None and t_out is not None and t_out <= t_in:
            raise ValidationError(f"agent {a.agent_id}: exit from {d_id} precedes entry")
        for tt in (t_in, t_out):
            if tt is None:
                continue
            p = at(tt, f"crossing of {d_id}")
            if segment_distance([p], door.a, door.b)[0] > tol:
                raise ValidationError(f"agent {a.agent_id}: not within {tol} m of {d_id} at t={tt}")


def simulate(cfg: SimConfig, fusion: FusionParams = FusionParams(), base: Path | None = None) -> SimResult:
    """Render every frame of ``cfg`` and derive the truth labels."""
    scene = cfg.load_scene(base)
    rng = np.random.default_rng(cfg.seed)
    scripts = list(cfg.agents)
    if cfg.random_agents:
        ra = cfg.random_agents
        scripts += random_agents(scene, int(ra.get("n_agents", 5)), float(ra.get("wash_probability", 0.5)), rng, first_id=len(scripts))
    ids = [a.agent_id for a in scripts]
    if len(set(ids)) != len(ids):
        raise ValidationError("agent ids must be unique")
    for a in scripts:
        validate_script(a, scene)

    end = cfg.duration if cfg.duration is not None else max((a.end for a in scripts), default=0.0)
    n_frames = int(math.floor(end * cfg.frame_rate + 1e-9)) + 1
    times = np.arange(n_frames) / cfg.frame_rate
    pos = {a.agent_id: a.positions(times) for a in scripts}

    cache: dict = {}

    def depth(s, cell):
        key = (s.id, cell)
        if key not in cache:
            cache[key] = person_depth(cell_to_world(cell, scene.grid), s, scene.person, scene.plan)
        return cache[key]

    frames = []
    for k, t in enumerate(times):
        cells = sorted(world_to_cell(tuple(p[k]), scene.grid) for p in pos.values() if not np.isnan(p[k, 0]))
        frame = []
        for s in scene.sensors:
            h, w = s.image_size
            if cfg.noise.dropout_prob and rng.random() < cfg.noise.dropout_prob:
                continue
            zbuf = np.full((h, w), np.inf)
            for c in cells:
                zbuf = np.minimum(zbuf, depth(s, c))
            sil = np.isfinite(zbuf)
            if cfg.noise.pixel_flip_prob:
                sil ^= rng.random((h, w)) < cfg.noise.pixel_flip_prob
            frame.append(Observation(s.id, float(t), sil))
        frames.append(frame)

    truth, washes = [], []
    for a in sorted(scripts, key=lambda a: a.agent_id):
        for c in judge_crossings(a.crossings(), a.wash_times(), fusion):
            truth.append(GroundTruthRecord(a.agent_id, c.door_id, c.direction, c.t, bool(c.compliant)))
        washes += [(a.agent_id, d, t + dur / 2) for d, t, dur in a.wash_actions]
    truth.sort(key=lambda r: (r.t, r.person_id, r.door_id))
    washes.sort(key=lambda w: (w[2], w[0]))

    trajectories = []
    for a in sorted(scripts, key=lambda a: a.agent_id):
        p = pos[a.agent_id]
        keep = ~np.isnan(p[:, 0])
        trajectories.append(Trajectory(a.agent_id, np.column_stack([times[keep], p[keep]])))
    return SimResult(scene, times, frames, truth, trajectories, washes, scripts)


# -- scenario construction ---------------------------------------------------------


def door_point(scene: Scene, door_id: str, offset: float):
    """Point ``offset`` meters from the door center along its normal (positive is into the room)."""
    door = scene.plan.door(door_id)
    ex, ey = door.b[0] - door.a[0], door.b[1] - door.a[1]
    n = math.hypot(ex, ey)
    nx, ny = (-ey / n, ex / n) if door.room_side == "left" else (ey / n, -ex / n)
    cx, cy = door.center
    return cx + offset * nx, cy + offset * ny


class _Walker:
    """Builds an ``AgentScript`` leg by leg at a constant walking speed."""

    def __init__(self, scene: Scene, agent_id: int, start, t0: float = 0.0, speed: float = WALK_SPEED):
        self.scene = scene
        self.id = agent_id
        self.speed = speed
        self.t = t0
        self.pts = [(t0, float(start[0]), float(start[1]))]
        self.washes: list[tuple[str, float, float]] = []
        self.visits: list[list] = []

    @property
    def here(self):
        return self.pts[-1][1:]

    def to(self, x: float, y: float, speed: float | None = None) -> "_Walker":
        d = math.dist(self.here, (x, y))
        if d > 1e-12:
            self.t += d / (speed or self.speed)
            self.pts.append((self.t, float(x), float(y)))
        return self

    def wait(self, seconds: float) -> "_Walker":
        self.t += seconds
        self.pts.append((self.t, *self.here))
        return self

    def wash(self, dispenser_id: str, duration: float = WASH_DURATION) -> "_Walker":
        self.to(*self.scene.plan.dispenser(dispenser_id).position)
        self.washes.append((dispenser_id, self.t, duration))
        return self.wait(duration)

    def enter(self, door_id: str, depth: float = 0.8) -> "_Walker":
        self.to(*door_point(self.scene, door_id, -0.4))
        self.to(*door_point(self.scene, door_id, 0.0))
        self.visits.append([door_id, self.t, None])
        return self.to(*door_point(self.scene, door_id, depth))

    def exit(self, door_id: str) -> "_Walker":
        self.to(*door_point(self.scene, door_id, 0.0))
        for v in self.visits:
            if v[0] == door_id and v[2] is None:
                v[2] = self.t
                break
        else:
            self.visits.append([door_id, None, self.t])
        return self.to(*door_point(self.scene, door_id, -0.4))

    def script(self, behaviour: str = "") -> AgentScript:
        return AgentScript(self.id, self.pts, self.washes, [tuple(v) for v in self.visits], behaviour)


def _separated(a: AgentScript, others: Sequence[AgentScript], min_dist: float, rate: float = 10.0, handoff: float = 6.0) -> bool:
    """No close encounters, and no agent appearing where another just vanished.

    The second rule keeps separate people distinguishable: an agent that
    starts within reach of where another ended less than ``handoff`` seconds
    earlier would look like the same person to any tracker.
    """
    for b in others:
        for first, second in ((a, b), (b, a)):
            gap = second.start - first.end
            if -1e-9 <= gap <= handoff:
                if math.dist(first.waypoints[-1][1:], second.waypoints[0][1:]) <= 2.0 * gap + 1.0:
                    return False
        lo, hi = max(a.start, b.start), min(a.end, b.end)
        if lo > hi:
            continue
        ts = np.arange(math.ceil(lo * rate), math.floor(hi * rate) + 1) / rate
        if len(ts) and np.min(np.hypot(*(a.positions(ts) - b.positions(ts)).T)) < min_dist:
            return False
    return True


def min_separation(scripts: Sequence[AgentScript], rate: float = 10.0) -> float:
    """Smallest distance between two agents present at the same frame."""
    best = math.inf
    for i, a in enumerate(scripts):
        for b in scripts[i + 1 :]:
            lo, hi = max(a.start, b.start), min(a.end, b.end)
            ts = np.arange(math.ceil(lo * rate), math.floor(hi * rate) + 1) / rate
            if len(ts):
                best = min(best, float(np.min(np.hypot(*(a.positions(ts) - b.positions(ts)).T))))
    return best


def _behaviour(scene: Scene, kind: str, agent_id: int, t0: float, rng: np.random.Generator) -> AgentScript:
    """One agent doing ``kind`` near a randomly chosen door."""
    doors = scene.plan.doors
    door = doors[int(rng.integers(len(doors)))]
    gel = min(scene.plan.dispensers, key=lambda d: math.dist(d.position, door.center)).id
    speed = float(rng.uniform(1.0, 1.3))
    x_lo, _, x_hi, _ = scene.grid.extent
    cx = door.center[0]

    def clamp(x):
        return min(max(x, x_lo + 0.3), x_hi - 0.3)

    lane = float(rng.uniform(0.8, 1.1))
    gel_x = scene.plan.dispenser(gel).position[0]
    side = 1.0 if gel_x >= cx else -1.0
    w = None
    if kind == "wash_enter":
        w = _Walker(scene, agent_id, (clamp(gel_x + side * 1.6), lane), t0, speed).wash(gel).enter(door.id).wait(1.0)
    elif kind == "passby_enter":
        # walks along the lane past the dispenser without stopping, then enters
        w = _Walker(scene, agent_id, (clamp(gel_x + side * 1.6), lane), t0, speed).to(cx, lane).enter(door.id).wait(1.0)
    elif kind == "direct_enter":
        w = _Walker(scene, agent_id, (clamp(cx - side * 1.8), lane), t0, speed).enter(door.id).wait(1.0)
    elif kind == "exit_wash":
        w = _Walker(scene, agent_id, door_point(scene, door.id, 0.8), t0, speed).wait(0.5).exit(door.id).wash(gel).to(clamp(gel_x + side * 1.2), lane)
    elif kind == "exit_no_wash":
        w = _Walker(scene, agent_id, door_point(scene, door.id, 0.8), t0, speed).wait(0.5).exit(door.id).to(clamp(cx - side * 1.8), lane)
    elif kind == "pass":
        y = float(rng.uniform(0.3, 0.5))
        a, b = x_lo + 1.0, x_hi - 1.0
        if rng.random() < 0.5:
            a, b = b, a
        w = _Walker(scene, agent_id, (a, y), t0, speed).to(b, y)
    else:
        raise ValueError(f"unknown behaviour {kind!r}")
    return w.script(kind)


def _schedule(scene: Scene, kinds: Sequence[str], rng: np.random.Generator, spacing: float, first_id: int = 0, min_dist: float = 0.8):
    out: list[AgentScript] = []
    for k, kind in enumerate(kinds):
        for attempt in range(500):
            t0 = round(k * spacing + float(rng.uniform(0, spacing)) + attempt * 0.5, 1)
            a = _behaviour(scene, kind, first_id + k, t0, rng)
            if _separated(a, out, min_dist):
                out.append(a)
                break
        else:
            raise ValidationError(f"could not place agent {first_id + k} ({kind}) without collisions")
    return out


def random_agents(scene: Scene, n_agents: int, wash_probability: float, rng: np.random.Generator, first_id: int = 0, spacing: float = 2.5):
    """Scripts for ``n_agents`` people entering or leaving rooms, washing with the given probability."""
    if not 0 <= wash_probability <= 1:
        raise ValidationError("wash_probability must lie in [0, 1]")
    kinds = []
    for _ in range(n_agents):
        washes = rng.random() < wash_probability
        if rng.random() < 0.5:
            kinds.append("wash_enter" if washes else ("passby_enter" if rng.random() < 0.5 else "direct_enter"))
        else:
            kinds.append("exit_wash" if washes else "exit_no_wash")
    return _schedule(scene, kinds, rng, spacing, first_id)


MIXED_COMPOSITION = {"wash_enter": 5, "passby_enter": 5, "direct_enter": 2, "exit_wash": 3, "exit_no_wash": 3, "pass": 2}


def generate_scenario(kind: str, seed: int = 0) -> SimConfig:
    """Canonical fixture for one success or failure mode.

    ``mixed`` is a 20-agent blend (see ``MIXED_COMPOSITION``) containing
    pass-by-without-washing agents.
    """
    if kind not in SCENARIO_KINDS:
        raise ValueError(f"unknown scenario kind {kind!r}; choose from {', '.join(SCENARIO_KINDS)}")
    scene = default_scene()
    rng = np.random.default_rng(seed)
    scene_ref = None
    if kind == "compliant_entry":
        agents = [_Walker(scene, 0, (5.0, 1.0)).wash("gel1").enter("door1").wait(1.0).script("wash_enter")]
    elif kind == "passby_no_wash":
        # passes 0.625 m from gel1 at walking pace, then enters door1
        agents = [_Walker(scene, 0, (5.0, 1.0)).to(2.0, 1.0).enter("door1").wait(1.0).script("passby_enter")]
    elif kind == "crossing_pair":
        # paths cross near (4.8, 1.15); B waits so they pass that point apart
        a = _Walker(scene, 0, (3.0, 0.5)).to(6.0, 1.6).enter("door2").wait(1.0)
        b = _Walker(scene, 1, (7.0, 0.5)).wait(2.5).wash("gel1").enter("door1").wait(1.0)
        agents = [a.script(), b.script()]
    elif kind == "blind_gap":
        d = scene_to_dict(scene)
        d["sensors"] = [s for s in d["sensors"] if s["id"] not in ("s_gel2", "s_door3")]
        scene_ref = d
        agents = [_Walker(scene, 0, (4.6, 1.0)).wash("gel1").to(8.0, 1.2).enter("door3", depth=0.5).wait(1.0).script()]
    elif kind == "crowded":
        agents = _crowded(scene)
    else:
        kinds = [k for k, n in MIXED_COMPOSITION.items() for _ in range(n)]
        kinds = [kinds[i] for i in rng.permutation(len(kinds))]
        agents = _schedule(scene, kinds, rng, spacing=2.5)
    return SimConfig(agents=agents, scene=scene_ref, seed=seed, kind=kind)


def _crowded(scene: Scene) -> list[AgentScript]:
    """Eight people in view at t = 0: three entering, three leaving, two passing."""
    agents = []
    aid = 0
    for door, gel, exit_to in (("door1", "gel1", None), ("door2", "gel1", "wash"), ("door3", "gel3", "wash")):
        d = scene.plan.door(door)
        cx = d.center[0]
        gx = scene.plan.dispenser(f"gel{door[-1]}").position[0]
        enter = _Walker(scene, aid, (gx + 0.7, 1.2)).wash(f"gel{door[-1]}").to(cx + 0.3, 1.6).to(cx + 0.3, 2.0)
        enter.visits.append([door, enter.t, None])
        enter.to(cx + 0.6, 2.8).wait(2.0)
        agents.append(enter.script())
        aid += 1
        leave = _Walker(scene, aid, (cx - 0.6, 2.9)).wait(5.0).to(cx - 0.3, 2.0)
        leave.visits.append([door, None, leave.t])
        leave.to(cx - 0.3, 1.6)
        if exit_to == "wash":
            leave.wash(gel)
        else:
            leave.to(0.6, 1.0)
        agents.append(leave.script())
        aid += 1
    agents.append(_Walker(scene, aid, (2.0, 0.3)).to(11.5, 0.3).script())
    agents.append(_Walker(scene, aid + 1, (0.5, 0.3)).to(10.0, 0.3).script())
    return agents
