"""Track the crowded scenario and write track and heatmap SVGs.

    python3 demos/heatmap.py [OUT_DIR]
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from wardtrack import pipeline
from wardtrack.records import read_tracks
from wardtrack.render import visit_counts
from wardtrack.scene import cell_to_world
from wardtrack.sim import generate_scenario

wd = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp(prefix="wardtrack_crowded_"))
pipeline.run_all(wd, generate_scenario("crowded"))
scene = pipeline.stage_scene(wd, pipeline.PipelineConfig())
_, tracks = read_tracks(wd / "tracks.jsonl")
counts = visit_counts(tracks, scene.grid)
i, j = np.unravel_index(np.argmax(counts), counts.shape)
print(f"{len(tracks)} tracks, {counts.sum()} points; busiest cell at {cell_to_world((int(i), int(j)), scene.grid)}")
print(f"figures: {wd / 'tracks.svg'}  {wd / 'heatmap.svg'}")
