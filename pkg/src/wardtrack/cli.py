"""Command-line entry point: ``wardtrack <stage> WORKDIR [options]``.

Exit codes: 0 success, 1 usage error, 2 bad or missing input data,
3 internal invariant violation.  Set ``WARDTRACK_LOG`` (e.g. ``INFO`` or
``DEBUG``) for progress logging on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import PipelineConfig
from .errors import ConsistencyError, FormatError, ValidationError
from .sim import SCENARIO_KINDS, SimConfig, generate_scenario

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("workdir", type=Path, help="run directory holding the stage files")
    p.add_argument("--config", type=Path, help="pipeline config YAML")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override one config value (repeatable)")


def _add_sim(p: argparse.ArgumentParser) -> None:
    g = p.add_mutually_exclusive_group()
    g.add_argument("--kind", help=f"generate a built-in scenario: {', '.join(SCENARIO_KINDS)}")
    g.add_argument("--scenario", type=Path, help="simulation config YAML")
    p.add_argument("--seed", type=int, help="random seed (overrides the scenario's)")


def _add_jobs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--jobs", type=int, default=1, help="worker threads for detection (output does not depend on it)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="wardtrack", description="Hand-hygiene compliance from overhead depth sensors.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    helps = {
        "simulate": "render a scenario into observations and truth",
        "detect": "per-frame people detection and dispenser events",
        "track": "link detections into tracks",
        "fuse": "match dispenser events to tracks and judge door crossings",
        "score": "compliance rates and accuracy against truth",
        "render": "SVG figures of tracks and a visit heatmap",
        "pipeline": "all stages in order",
    }
    for name, h in helps.items():
        p = sub.add_parser(name, help=h, description=h)
        _add_common(p)
        if name in ("simulate", "pipeline"):
            _add_sim(p)
        if name in ("detect", "pipeline"):
            _add_jobs(p)
        if name == "score":
            p.add_argument("--truth", type=Path, help="truth file (default WORKDIR/truth.jsonl)")
        if name == "render":
            p.add_argument("--tracks", type=Path, help="track file (default WORKDIR/tracks.jsonl)")
    return parser


def _sim_config(args) -> tuple[SimConfig, Path | None]:
    if args.scenario:
        sim, base = SimConfig.load(args.scenario), args.scenario.parent
    else:
        kind = args.kind or "compliant_entry"
        if kind not in SCENARIO_KINDS:
            raise UsageError(f"unknown scenario kind {kind!r}; choose from {', '.join(SCENARIO_KINDS)}")
        sim, base = generate_scenario(kind, args.seed or 0), None
    if args.seed is not None:
        sim.seed = args.seed
    return sim, base


def _setup_logging() -> None:
    level = os.environ.get("WARDTRACK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if getattr(args, "jobs", 1) < 1:
            raise UsageError("--jobs must be at least 1")
        cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
        try:
            cfg = cfg.override(args.overrides)
        except (ValidationError, FormatError, TypeError) as exc:
            raise UsageError(f"--set: {exc}") from exc
        cmd, wd = args.command, args.workdir
        if cmd in ("simulate", "pipeline"):
            sim, base = _sim_config(args)
            if cmd == "simulate":
                pipeline.simulate(wd, sim, cfg, base)
            else:
                print(pipeline.run_all(wd, sim, cfg, args.jobs, base).summary(), end="")
        elif not wd.is_dir():
            raise FormatError("run directory not found", wd)
        elif cmd == "detect":
            pipeline.detect(wd, cfg, args.jobs)
        elif cmd == "track":
            pipeline.track(wd, cfg)
        elif cmd == "fuse":
            pipeline.fuse(wd, cfg)
        elif cmd == "score":
            print(pipeline.score(wd, cfg, args.truth).summary(), end="")
        elif cmd == "render":
            pipeline.render(wd, cfg, args.tracks)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConsistencyError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ValueError, OSError) as exc:
        # FormatError, ValidationError and the geometry errors are all ValueErrors
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


def main(argv: list[str] | None = None) -> None:
    _setup_logging()
    sys.exit(run(argv))


if __name__ == "__main__":
    main()
