import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import pixel_rays_from_angles, ray_march_silhouette
from wardtrack.errors import ExtentError, FormatError, ValidationError
from wardtrack.scene import (
    Dispenser,
    Door,
    FloorPlan,
    GridSpec,
    PersonModel,
    Scene,
    SensorModel,
    cell_to_world,
    load_scene,
    pixel_rays,
    project_person,
    save_scene,
    scene_from_dict,
    scene_to_dict,
    world_to_cell,
)

G = GridSpec((0.0, 0.0), 0.25, 40, 40)

# a level sensor 1 m up, looking along +x at a person 2 m away
SIDE = SensorModel("side", (0.0, 0.0, 1.0), yaw=0.0, pitch=0.0)
SIDE_GRID = GridSpec((0.875, -1.125), 0.25, 8, 9)
CELL_AT_2M = (4, 4)
# pixel count of the ray-marched oracle for that cell, frozen
CELL_AT_2M_PIXELS = 1120


def test_world_to_cell_examples():
    assert world_to_cell((0.0, 0.0), G) == (0, 0)
    assert world_to_cell((1.0, 0.5), G) == (4, 2)
    with pytest.raises(ExtentError):
        world_to_cell((-0.01, 0.0), G)
    with pytest.raises(ExtentError):
        world_to_cell((0.0, 10.01), G)


def test_upper_edge_maps_to_last_cell():
    assert world_to_cell((10.0, 10.0), G) == (39, 39)


def test_grid_invariants():
    with pytest.raises(ValidationError):
        GridSpec(cell_size=0.0)
    with pytest.raises(ValidationError):
        GridSpec(width=0)
    assert G.n_cells == 1600
    assert G.extent == (0.0, 0.0, 10.0, 10.0)


@given(st.integers(0, 39), st.integers(0, 39))
def test_cell_center_round_trip(i, j):
    assert world_to_cell(cell_to_world((i, j), G), G) == (i, j)


@given(st.floats(0, 10), st.floats(0, 10))
def test_cell_center_within_half_cell(x, y):
    cx, cy = cell_to_world(world_to_cell((x, y), G), G)
    assert abs(cx - x) <= G.cell_size / 2 + 1e-12
    assert abs(cy - y) <= G.cell_size / 2 + 1e-12


def test_sensor_validation():
    with pytest.raises(ValidationError):
        SensorModel("s", (0, 0, 3), fov_h=180.0)
    with pytest.raises(ValidationError):
        SensorModel("s", (0, 0, 3), range_min=4.0, range_max=4.0)
    with pytest.raises(ValidationError):
        PersonModel(height=0.0)


def test_pixel_rays_match_independent_construction():
    for s in (SIDE, SensorModel("t", (3.0, 2.0, 3.0), yaw=30.0, pitch=70.0)):
        ref = pixel_rays_from_angles(s.position, s.yaw, s.pitch, s.fov_h, s.fov_v, s.image_size)
        np.testing.assert_allclose(pixel_rays(s), ref, atol=1e-12)


def test_in_frustum_points_project_inside_image():
    s = SensorModel("t", (3.0, 2.0, 3.0), yaw=30.0, pitch=70.0)
    rng = np.random.default_rng(0)
    pts = rng.uniform([-2, -2, 0], [8, 6, 3], size=(5000, 3))
    inside = s.in_frustum(pts)
    col, row, _ = s.project(pts[inside])
    h, w = s.image_size
    assert inside.sum() > 100
    assert np.all((col >= 0) & (col <= w) & (row >= 0) & (row <= h))


def test_out_of_range_cell_is_empty():
    s = SensorModel("far", (0.0, 5.0, 1.0), yaw=0.0, pitch=0.0)
    g = GridSpec((0.0, 0.0), 0.25, 40, 40)
    cell = world_to_cell((6.0, 5.0), g)
    assert math.dist(cell_to_world(cell, g), (0.0, 5.0)) >= 6.0 - g.cell_size
    assert not project_person(cell, s, PersonModel(), g).any()


def test_cell_behind_sensor_is_empty():
    assert not project_person((0, 0), SIDE, PersonModel(), GridSpec((-3.0, -0.125), 0.25, 1, 1)).any()


def test_cell_at_2m_matches_ray_march():
    m = PersonModel()
    im = project_person(CELL_AT_2M, SIDE, m, SIDE_GRID)
    assert cell_to_world(CELL_AT_2M, SIDE_GRID) == (2.0, 0.0)
    assert im.sum() == CELL_AT_2M_PIXELS
    rays = pixel_rays_from_angles(SIDE.position, SIDE.yaw, SIDE.pitch, SIDE.fov_h, SIDE.fov_v, SIDE.image_size)
    ref = ray_march_silhouette(SIDE.position, rays, (2.0, 0.0), m.radius, m.height, SIDE.range_min, SIDE.range_max)
    assert np.array_equal(im, ref)
    rows, cols = np.nonzero(im)
    assert rows.max() - rows.min() > cols.max() - cols.min()  # taller than wide


def test_identical_sensors_give_identical_silhouettes():
    twin = SensorModel("twin", SIDE.position, SIDE.yaw, SIDE.pitch)
    a = project_person(CELL_AT_2M, SIDE, PersonModel(), SIDE_GRID)
    b = project_person(CELL_AT_2M, twin, PersonModel(), SIDE_GRID)
    assert np.array_equal(a, b)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(0.0, 0.3), st.integers(0, 8))
def test_radius_monotonicity(r, dr, j):
    small = project_person((4, j), SIDE, PersonModel(1.7, r), SIDE_GRID)
    big = project_person((4, j), SIDE, PersonModel(1.7, r + dr), SIDE_GRID)
    assert not np.any(small & ~big)


def test_walls_occlude():
    plan = FloorPlan(walls=(((1.5, -1.0), (1.5, 1.0)),))
    g = GridSpec((0.0, -1.125), 0.25, 12, 9)
    cell = world_to_cell((2.0, 0.0), g)
    assert project_person(cell, SIDE, PersonModel(), g).any()
    assert not project_person(cell, SIDE, PersonModel(), g, plan).any()


def test_floor_plan_invariants():
    with pytest.raises(ValidationError):
        FloorPlan(dispensers=(Dispenser("a", (1, 1)), Dispenser("a", (2, 2))))
    with pytest.raises(ValidationError):
        Scene(G, FloorPlan(doors=(Door("d", (0, 0), (20, 0), "r"),)))
    with pytest.raises(ValidationError):
        Door("d", (0, 0), (1, 0), "r", room_side="up")


def test_door_side():
    d = Door("d", (0.0, 2.0), (1.0, 2.0), "r", "left")
    assert d.side((0.5, 3.0)) > 0
    assert d.side((0.5, 1.0)) < 0
    flipped = Door("d", (0.0, 2.0), (1.0, 2.0), "r", "right")
    assert flipped.side((0.5, 3.0)) < 0


def test_scene_round_trip(tmp_path, ward):
    assert scene_from_dict(scene_to_dict(ward)) == ward
    save_scene(ward, tmp_path / "s.yaml")
    assert load_scene(tmp_path / "s.yaml") == ward


def test_bundled_ward_layout(ward):
    assert [d.id for d in ward.plan.doors] == ["door1", "door2", "door3"]
    assert len(ward.sensors) == 6
    assert (ward.grid.width, ward.grid.height) == (48, 20)
    for s in ward.sensors:
        assert (s.fov_h, s.fov_v, s.range_min, s.range_max) == (58.0, 45.0, 0.8, 4.0)


def test_scene_format_version_checked(tmp_path, ward):
    d = scene_to_dict(ward)
    d["format_version"] = 99
    with pytest.raises(FormatError):
        scene_from_dict(d)
    p = tmp_path / "bad.yaml"
    p.write_text("grid: [unclosed\n")
    with pytest.raises(FormatError) as exc:
        load_scene(p)
    assert str(p) in str(exc.value)
