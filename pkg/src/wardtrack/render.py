"""Static SVG figures: tracks over the floor plan and a visit heatmap.

Both use matplotlib's object API (no pyplot state) with a fixed SVG hash
salt and no date stamp, so identical inputs give identical bytes.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib
import numpy as np
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.figure import Figure
from matplotlib.patches import Polygon, Rectangle

from .scene import FloorPlan, GridSpec, world_to_cell
from .tracker import Trajectory

DOOR_COLOR = "tab:blue"
DISPENSER_COLOR = "tab:orange"
WALL_COLOR = "black"
HEATMAP_CMAP = "viridis"
DISPENSER_SIZE = 0.3
DOOR_THICKNESS = 0.15


def _save(fig: Figure, path) -> None:
    with matplotlib.rc_context({"svg.hashsalt": "wardtrack", "svg.fonttype": "none"}):
        FigureCanvasSVG(fig).print_svg(str(path), metadata={"Date": None})


def _figure(grid: GridSpec) -> tuple[Figure, object]:
    x0, y0, x1, y1 = grid.extent
    w = 8.0
    fig = Figure(figsize=(w, max(2.0, w * (y1 - y0) / (x1 - x0)) + 0.6))
    ax = fig.add_subplot()
    ax.set_xlim(x0, x1)
    ax.set_ylim(y0, y1)
    ax.set_aspect("equal")
    ax.set_xlabel("x [m]")
    ax.set_ylabel("y [m]")
    return fig, ax


def draw_plan(ax, plan: FloorPlan) -> None:
    """Walls as black lines, doors as blue rectangles, dispensers as orange squares."""
    for a, b in plan.walls:
        ax.plot([a[0], b[0]], [a[1], b[1]], color=WALL_COLOR, lw=1.5, zorder=1)
    for d in plan.doors:
        a, b = np.asarray(d.a, float), np.asarray(d.b, float)
        u = b - a
        n = np.array([-u[1], u[0]]) / np.hypot(*u) * DOOR_THICKNESS / 2
        ax.add_patch(Polygon([a - n, b - n, b + n, a + n], closed=True, color=DOOR_COLOR, zorder=2))
    h = DISPENSER_SIZE / 2
    for d in plan.dispensers:
        x, y = d.position
        ax.add_patch(Rectangle((x - h, y - h), DISPENSER_SIZE, DISPENSER_SIZE, color=DISPENSER_COLOR, zorder=2))


def render_tracks(tracks: Sequence[Trajectory], plan: FloorPlan, grid: GridSpec, path) -> None:
    """Each track as a polyline from a dot (start) to a cross (end)."""
    fig, ax = _figure(grid)
    draw_plan(ax, plan)
    cmap = matplotlib.colormaps["tab10"]
    for k, tr in enumerate(sorted(tracks, key=lambda t: t.id)):
        xy = tr.points[:, 1:]
        c = cmap(k % 10)
        ax.plot(xy[:, 0], xy[:, 1], color=c, lw=1.0, zorder=3)
        ax.plot(*xy[0], "o", color=c, ms=3, zorder=4)
        ax.plot(*xy[-1], "x", color=c, ms=4, zorder=4)
        ax.annotate(str(tr.id), xy[0], fontsize=6, color=c, zorder=5)
    ax.set_title(f"{len(tracks)} tracks")
    _save(fig, path)


def visit_counts(tracks: Sequence[Trajectory], grid: GridSpec) -> np.ndarray:
    """Per-cell track point counts, indexed ``[i, j]`` like grid cells.

    Points outside the grid extent are ignored.
    """
    counts = np.zeros((grid.width, grid.height), dtype=np.int64)
    for tr in tracks:
        for _, x, y in tr.points:
            if grid.contains((x, y)):
                counts[world_to_cell((x, y), grid)] += 1
    return counts


def render_heatmap(tracks: Sequence[Trajectory], grid: GridSpec, path=None, plan: FloorPlan | None = None) -> np.ndarray:
    """Visit counts per cell, optionally written as an SVG heatmap.

    The color scale is linear in the count, from 0 (darkest viridis) to the
    maximum count; empty track sets use the range [0, 1].
    """
    counts = visit_counts(tracks, grid)
    if path is not None:
        fig, ax = _figure(grid)
        im = ax.imshow(
            counts.T,
            origin="lower",
            extent=grid.extent[0::2] + grid.extent[1::2],
            cmap=HEATMAP_CMAP,
            vmin=0,
            vmax=max(1, int(counts.max())),
            interpolation="nearest",
            zorder=0,
        )
        if plan is not None:
            draw_plan(ax, plan)
        fig.colorbar(im, ax=ax, label="track points per cell")
        _save(fig, path)
    return counts
