"""Batch pipeline stages over a run directory.

Each stage reads the files of the previous one from ``workdir`` and writes
its own next to them::

    simulate  -> scene.yaml, observations.jsonl, truth.jsonl, true_tracks.jsonl
    detect    -> detections.jsonl, detection_log.jsonl, events.jsonl
    track     -> tracks.jsonl
    fuse      -> labeled_tracks.jsonl, crossings.jsonl, baseline_crossings.jsonl
    score     -> report.jsonl, report.txt
    render    -> tracks.svg, heatmap.svg

The simulation seed travels in every header so outputs stay traceable to
the run that produced them.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import records as rec
from .classifier import DwellClassifier
from .compliance import ComplianceReport, proximity_baseline
from .config import PipelineConfig
from .detector import build_dictionaries, detect_frame
from .errors import FormatError
from .fusion import label_tracks
from .render import render_heatmap, render_tracks
from .scene import Scene, default_scene, load_scene, save_scene
from .sim import SimConfig, simulate as run_simulation
from .tracker import track as run_tracker

log = logging.getLogger(__name__)

SCENE_FILE = "scene.yaml"
STAGES = ("simulate", "detect", "track", "fuse", "score", "render")


def _params(obj) -> dict:
    return dataclasses.asdict(obj)


def stage_scene(workdir: Path, cfg: PipelineConfig) -> Scene:
    """The run's scene: the copy saved by ``simulate``, else the configured one."""
    p = Path(workdir) / SCENE_FILE
    if p.exists():
        return load_scene(p)
    return load_scene(cfg.scene) if cfg.scene else default_scene()


def simulate(workdir, sim: SimConfig, cfg: PipelineConfig = PipelineConfig(), base: Path | None = None) -> None:
    workdir = Path(workdir)
    workdir.mkdir(parents=True, exist_ok=True)
    if sim.scene is None and cfg.scene:
        sim = dataclasses.replace(sim, scene=cfg.scene)
    result = run_simulation(sim, cfg.fusion, base)
    save_scene(result.scene, workdir / SCENE_FILE)
    params = {"kind": sim.kind, "frame_rate": sim.frame_rate, "noise": _params(sim.noise), "n_agents": len(result.scripts)}
    rows = [rec.observation_row(o) for f in result.frames for o in f]
    rec.write_records(workdir / "observations.jsonl", "observations", rows, "simulate", params, sim.seed, frame_rate=sim.frame_rate)
    rec.write_records(workdir / "truth.jsonl", "truth", rec.truth_rows(result.truth), "simulate", params, sim.seed)
    rec.write_records(workdir / "true_tracks.jsonl", "true_tracks", rec.track_rows(result.trajectories), "simulate", params, sim.seed)
    log.info("simulate: %d frames, %d agents, %d truth crossings", len(result.frames), len(result.scripts), len(result.truth))


def detect(workdir, cfg: PipelineConfig = PipelineConfig(), jobs: int = 1) -> None:
    workdir = Path(workdir)
    header, frames = rec.read_observations(workdir / "observations.jsonl")
    seed = header["generator"].get("seed")
    frame_rate = float(header.get("frame_rate", 10.0))
    scene = stage_scene(workdir, cfg)
    dicts = build_dictionaries(scene)
    unknown = {o.sensor_id for f in frames for o in f} - set(dicts)
    if unknown:
        raise FormatError(f"observations from sensors not in the scene: {sorted(unknown)}", workdir / "observations.jsonl")
    d = cfg.detector

    def one(frame):
        return detect_frame(frame, dicts, scene.grid, d.max_atoms, d.stop, d.overfill_penalty, d.merge_radius)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            out = list(ex.map(one, frames))
    else:
        out = [one(f) for f in frames]
    sets = [ds for ds, _ in out]
    estimates = [e for _, es in out for e in es]

    c = cfg.classifier
    clf = DwellClassifier.from_scene(scene, frame_rate, cfg.fusion.dwell_min, min_area=c.min_area, max_skip=c.max_skip, max_jump=c.max_jump)
    sensors = sorted({o.sensor_id for f in frames for o in f})
    streams = [[o for f in frames for o in f if o.sensor_id == s] for s in sensors]
    events = [e for s in streams for e in clf.scan(s)]
    events.sort(key=lambda e: (e.timestamp, e.sensor_id, e.dispenser_id))

    params = _params(d)
    rec.write_records(workdir / "detections.jsonl", "detections", rec.detection_rows(sets), "detect", params, seed)
    rec.write_records(workdir / "detection_log.jsonl", "detection_log", rec.detection_log_rows(estimates, scene.grid), "detect", params, seed)
    cparams = {**_params(c), "dwell_min": cfg.fusion.dwell_min, "frame_rate": frame_rate}
    rec.write_records(workdir / "events.jsonl", "events", rec.event_rows(events), "detect", cparams, seed)
    log.info("detect: %d frames, %d detections, %d dispenser events", len(sets), sum(len(s.detections) for s in sets), len(events))


def track(workdir, cfg: PipelineConfig = PipelineConfig()) -> None:
    workdir = Path(workdir)
    header, sets = rec.read_detections(workdir / "detections.jsonl")
    tracks = run_tracker(sets, cfg.tracker)
    rec.write_records(workdir / "tracks.jsonl", "tracks", rec.track_rows(tracks), "track", _params(cfg.tracker), header["generator"].get("seed"))
    log.info("track: %d tracks", len(tracks))


def fuse(workdir, cfg: PipelineConfig = PipelineConfig()) -> None:
    workdir = Path(workdir)
    header, tracks = rec.read_tracks(workdir / "tracks.jsonl")
    _, events = rec.read_events(workdir / "events.jsonl")
    seed = header["generator"].get("seed")
    scene = stage_scene(workdir, cfg)
    for k, e in enumerate(events):
        try:
            scene.plan.dispenser(e.dispenser_id)
        except KeyError:
            raise FormatError(f"event {k}: unknown dispenser {e.dispenser_id!r}", workdir / "events.jsonl", k + 2) from None
    result = label_tracks(tracks, events, scene.plan, cfg.fusion)
    labeled = [dataclasses.replace(lt.track, labels=lt.labels) for lt in result.tracks]
    params = _params(cfg.fusion)
    counts = {"matched_events": result.matched, "orphan_events": result.orphans}
    rec.write_records(workdir / "labeled_tracks.jsonl", "labeled_tracks", rec.track_rows(labeled), "fuse", params, seed)
    rec.write_records(workdir / "crossings.jsonl", "crossings", rec.crossing_rows(result.crossings), "fuse", params, seed, **counts)
    ev = cfg.evaluation
    base = proximity_baseline(tracks, scene.plan, ev.baseline_radius, ev.baseline_include_doors)
    bparams = {"radius": ev.baseline_radius, "include_doors": ev.baseline_include_doors}
    rec.write_records(workdir / "baseline_crossings.jsonl", "crossings", rec.crossing_rows(base), "baseline", bparams, seed)
    log.info("fuse: %d crossings, %d events matched, %d orphan", len(result.crossings), result.matched, result.orphans)


def score(workdir, cfg: PipelineConfig = PipelineConfig(), truth_path=None) -> ComplianceReport:
    """Compliance report; accuracy sections appear when truth is available."""
    workdir = Path(workdir)
    header, crossings = rec.read_crossings(workdir / "crossings.jsonl")
    seed = header["generator"].get("seed")
    truth_path = Path(truth_path) if truth_path else workdir / "truth.jsonl"
    truth = rec.read_truth(truth_path)[1] if truth_path.exists() else None
    base_path = workdir / "baseline_crossings.jsonl"
    baseline = rec.read_crossings(base_path)[1] if base_path.exists() else None
    report = ComplianceReport.build(
        crossings,
        truth,
        baseline,
        orphan_events=int(header.get("orphan_events", 0)),
        matched_events=int(header.get("matched_events", 0)),
        tau_match=cfg.evaluation.tau_match,
    )
    rec.write_records(workdir / "report.jsonl", "report", report.to_records(), "score", _params(cfg.evaluation), seed)
    (workdir / "report.txt").write_text(report.summary())
    log.info("score:\n%s", report.summary().rstrip())
    return report


def render(workdir, cfg: PipelineConfig = PipelineConfig(), tracks_path=None) -> None:
    workdir = Path(workdir)
    _, tracks = rec.read_tracks(Path(tracks_path) if tracks_path else workdir / "tracks.jsonl")
    scene = stage_scene(workdir, cfg)
    render_tracks(tracks, scene.plan, scene.grid, workdir / "tracks.svg")
    render_heatmap(tracks, scene.grid, workdir / "heatmap.svg", scene.plan)
    log.info("render: wrote tracks.svg and heatmap.svg")


def run_all(workdir, sim: SimConfig, cfg: PipelineConfig = PipelineConfig(), jobs: int = 1, base: Path | None = None) -> ComplianceReport:
    """Every stage in order; same bytes as calling them one by one."""
    simulate(workdir, sim, cfg, base)
    detect(workdir, cfg, jobs)
    track(workdir, cfg)
    fuse(workdir, cfg)
    report = score(workdir, cfg)
    render(workdir, cfg)
    return report
