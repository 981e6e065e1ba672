"""Simulate one washing visitor, run every stage and print the report.

    python3 demos/quickstart.py [RUN_DIR]
"""

import sys
import tempfile
from pathlib import Path

from wardtrack import pipeline
from wardtrack.records import read_crossings, read_events
from wardtrack.sim import generate_scenario

wd = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="wardtrack_"))
report = pipeline.run_all(wd, generate_scenario("compliant_entry"))

_, events = read_events(wd / "events.jsonl")
_, crossings = read_crossings(wd / "crossings.jsonl")
print(f"run directory: {wd}")
for e in events:
    print(f"wash detected at {e.dispenser_id} by {e.sensor_id}, t={e.timestamp:.1f}s")
for c in crossings:
    print(f"track {c.track_id} {c.direction}s {c.door_id} at t={c.t:.1f}s, compliant={c.compliant}")
print(report.summary(), end="")
