import numpy as np
import pytest

from wardtrack.classifier import DispenserRegion, DwellClassifier, classify_event, dispenser_region
from wardtrack.detector import Observation
from wardtrack.sim import AgentScript, SimConfig, generate_scenario, simulate


@pytest.fixture(scope="module")
def clf(ward):
    return DwellClassifier.from_scene(ward)


def test_regions_only_where_the_dispenser_is_fully_visible(clf, ward):
    assert sorted(clf.regions) == ["s_gel1", "s_gel2", "s_gel3"]
    for sid, regions in clf.regions.items():
        assert [r.dispenser_id for r in regions] == [f"gel{sid[-1]}"]
    s = ward.sensor("s_gel1")
    assert dispenser_region(s, (3.25, 1.625), 1.7) is not None
    assert dispenser_region(s, (9.0, 1.0), 1.7) is None


def test_region_contains():
    r = DispenserRegion("d", (2, 5), (3, 6))
    assert r.contains(2, 3) and r.contains(5, 6)
    assert not r.contains(1.9, 4) and not r.contains(3, 6.1)


def test_empty_window(clf):
    assert classify_event([], clf) is None


def test_dwelling_agent_fires_once(clf):
    # stands 2 s on gel1 at 10 fps
    a = AgentScript(0, [(0.0, 4.5, 1.6), (1.0, 3.25, 1.625), (3.0, 3.25, 1.625), (4.0, 4.5, 1.6)])
    r = simulate(SimConfig(agents=[a]))
    events = clf.scan(r.stream("s_gel1"))
    assert len(events) == 1
    e = events[0]
    assert (e.sensor_id, e.dispenser_id) == ("s_gel1", "gel1")
    assert 1.5 <= e.timestamp <= 2.5
    assert classify_event(r.stream("s_gel1"), clf) == e


def test_passing_agent_does_not_fire(clf):
    r = simulate(generate_scenario("passby_no_wash"))
    for s in r.scene.sensors:
        assert clf.scan(r.stream(s.id)) == []


def test_dwell_threshold(ward):
    a = AgentScript(0, [(0.0, 3.25, 1.625), (0.5, 3.25, 1.625)])  # 6 frames
    r = simulate(SimConfig(agents=[a]))
    stream = r.stream("s_gel1")
    assert DwellClassifier.from_scene(ward, dwell_min=1.0).scan(stream) == []
    assert len(DwellClassifier.from_scene(ward, dwell_min=0.5).scan(stream)) == 1


def test_back_to_back_users_give_two_events(clf):
    a = AgentScript(0, [(0.0, 3.25, 1.625), (2.0, 3.25, 1.625), (3.0, 5.0, 1.0)])
    # b queues 1.05 m away and steps up as soon as a leaves
    b = AgentScript(1, [(0.0, 2.2, 1.625), (2.4, 2.2, 1.625), (3.2, 3.25, 1.625), (5.2, 3.25, 1.625)])
    r = simulate(SimConfig(agents=[a, b]))
    assert len(clf.scan(r.stream("s_gel1"))) == 2


def test_window_from_one_sensor(clf):
    obs = [Observation("s_gel1", 0.0, np.zeros((64, 80), bool)), Observation("s_gel2", 0.1, np.zeros((64, 80), bool))]
    with pytest.raises(ValueError):
        clf.scan(obs)
    with pytest.raises(ValueError):
        DwellClassifier({}, frame_rate=0)


def test_custom_classifier_plugs_in():
    from wardtrack.fusion import DispenserEvent

    class Always:
        def __call__(self, window):
            return DispenserEvent(window[0].sensor_id, "gel1", window[0].timestamp) if window else None

        def scan(self, stream):
            e = self(stream)
            return [e] if e else []

    obs = [Observation("x", 1.0, np.zeros((2, 2), bool))]
    assert classify_event(obs, Always()) == DispenserEvent("x", "gel1", 1.0)
