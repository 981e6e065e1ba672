import xml.etree.ElementTree as ET

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from wardtrack.render import render_heatmap, render_tracks, visit_counts
from wardtrack.scene import world_to_cell
from wardtrack.tracker import Trajectory


def _walk(tid, p0, p1, n=50):
    ts = np.arange(n) / 10.0
    return Trajectory(tid, np.column_stack([ts, np.linspace(p0[0], p1[0], n), np.linspace(p0[1], p1[1], n)]))


def test_svgs_are_deterministic(tmp_path, ward):
    tracks = [_walk(0, (1, 1), (5, 1)), _walk(1, (6, 2.5), (6, 0.5))]
    for name in ("a", "b"):
        render_tracks(tracks, ward.plan, ward.grid, tmp_path / f"{name}_t.svg")
        render_heatmap(tracks, ward.grid, tmp_path / f"{name}_h.svg", ward.plan)
    assert (tmp_path / "a_t.svg").read_bytes() == (tmp_path / "b_t.svg").read_bytes()
    assert (tmp_path / "a_h.svg").read_bytes() == (tmp_path / "b_h.svg").read_bytes()


def test_empty_input_gives_valid_svg(tmp_path, ward):
    render_tracks([], ward.plan, ward.grid, tmp_path / "t.svg")
    counts = render_heatmap([], ward.grid, tmp_path / "h.svg", ward.plan)
    assert not counts.any()
    for f in ("t.svg", "h.svg"):
        assert ET.parse(tmp_path / f).getroot().tag.endswith("svg")


def test_stationary_track_fills_one_cell(ward):
    tr = Trajectory(0, np.column_stack([np.arange(100) / 10, np.full(100, 3.3), np.full(100, 1.1)]))
    counts = visit_counts([tr], ward.grid)
    assert counts.sum() == 100
    assert counts[world_to_cell((3.3, 1.1), ward.grid)] == 100


def test_points_outside_the_grid_are_ignored(ward):
    tr = Trajectory(0, np.array([[0.0, -5.0, 1.0], [0.1, 1.0, 1.0]]))
    assert visit_counts([tr], ward.grid).sum() == 1


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_counts_are_conserved(seed, n):
    from wardtrack.scene import default_scene

    grid = default_scene().grid
    rng = np.random.default_rng(seed)
    x0, y0, x1, y1 = grid.extent
    tracks = []
    for k in range(n):
        m = int(rng.integers(1, 40))
        xy = np.column_stack([rng.uniform(x0, x1 - 1e-9, m), rng.uniform(y0, y1 - 1e-9, m)])
        tracks.append(Trajectory(k, np.column_stack([np.arange(m) / 10.0, xy])))
    assert visit_counts(tracks, grid).sum() == sum(len(t) for t in tracks)


def test_corridor_is_the_hottest_region(ward):
    rng = np.random.default_rng(0)
    tracks = [_walk(k, (0.5, 1.0), (11.5, 1.0), n=120) for k in range(5)]
    tracks += [_walk(10 + k, (rng.uniform(1, 11), 2.5), (rng.uniform(1, 11), 4.5), n=20) for k in range(3)]
    counts = visit_counts(tracks, ward.grid)
    i, j = np.unravel_index(np.argmax(counts), counts.shape)
    from wardtrack.scene import cell_to_world

    assert cell_to_world((int(i), int(j)), ward.grid)[1] < 2.0
