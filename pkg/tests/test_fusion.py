import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wardtrack.errors import ConsistencyError
from wardtrack.fusion import (
    Crossing,
    DispenserEvent,
    FusionParams,
    detect_door_crossings,
    judge_crossings,
    label_tracks,
    match_event,
)
from wardtrack.tracker import Trajectory

GEL1 = (3.25, 1.625)


def _line(tid, t0, t1, p0, p1, rate=10.0):
    n = int(round((t1 - t0) * rate)) + 1
    ts = np.linspace(t0, t1, n)
    xs = np.linspace(p0[0], p1[0], n)
    ys = np.linspace(p0[1], p1[1], n)
    return Trajectory(tid, np.column_stack([ts, xs, ys]))


def _path(tid, legs, rate=10.0):
    """Concatenate straight legs [(t, x, y), ...] into one track."""
    pts = []
    for (t0, *a), (t1, *b) in zip(legs, legs[1:]):
        seg = _line(tid, t0, t1, a, b, rate).points
        pts.extend(seg if not pts else seg[1:])
    return Trajectory(tid, np.array(pts))


def _stand(tid, t0, t1, p, rate=10.0):
    return _line(tid, t0, t1, p, p, rate)


def _wash(t):
    return DispenserEvent("s_gel1", "gel1", t)


# -- match_event ----------------------------------------------------------------------


def test_single_candidate(ward):
    tr = _stand(3, 0, 10, GEL1)
    assert match_event(_wash(5.0), [tr], ward.plan) == 3


def test_nearest_candidate_wins(ward):
    near = _stand(1, 0, 10, (GEL1[0] + 0.4, GEL1[1]))
    far = _stand(0, 0, 10, (GEL1[0] - 0.9, GEL1[1]))
    assert match_event(_wash(5.0), [far, near], ward.plan) == 1


def test_no_track_in_time_window_is_orphan(ward):
    tr = _stand(0, 0, 10, GEL1)
    assert match_event(_wash(16.0), [tr], ward.plan) is None
    res = label_tracks([tr], [_wash(5.0), _wash(16.0)], ward.plan)
    assert res.matches == {0: 0, 1: None}
    assert res.matched + res.orphans == 2 and res.orphans == 1


def test_far_track_is_not_a_candidate(ward):
    assert match_event(_wash(5.0), [_stand(0, 0, 10, (GEL1[0] + 1.5, GEL1[1]))], ward.plan) is None


def test_equal_distance_goes_to_lower_id(ward):
    a = _stand(4, 0, 10, (GEL1[0] + 0.5, GEL1[1]))
    b = _stand(2, 0, 10, (GEL1[0] - 0.5, GEL1[1]))
    assert match_event(_wash(5.0), [a, b], ward.plan) == 2


def test_ranking_uses_position_at_event_time(ward):
    # a left the dispenser before the event; b is on it at the event
    a = _path(0, [(0, *GEL1), (2, *GEL1), (4, 4.5, 1.0)])
    b = _path(1, [(0, 4.0, 1.6), (3, *GEL1), (6, *GEL1)])
    assert match_event(_wash(4.5), [a, b], ward.plan) == 1


# -- door crossings -------------------------------------------------------------------


def test_parallel_track_has_no_crossings(ward):
    assert detect_door_crossings(_line(0, 0, 10, (0.5, 1.8), (11.5, 1.8)), ward.plan) == []


def test_exit_crossing(ward):
    cs = detect_door_crossings(_line(0, 0, 2, (2.0, 2.8), (2.0, 1.2)), ward.plan)
    assert [(c.door_id, c.direction) for c in cs] == [("door1", "exit")]
    assert cs[0].t == pytest.approx(1.0)


def test_enter_then_exit(ward):
    tr = _path(0, [(0, 6.0, 1.0), (1, 6.0, 3.0), (3, 6.0, 3.0), (4, 6.0, 1.0)])
    cs = detect_door_crossings(tr, ward.plan)
    assert [(c.door_id, c.direction) for c in cs] == [("door2", "enter"), ("door2", "exit")]
    assert cs[0].t < cs[1].t


def test_crossing_the_wall_line_outside_a_door_is_ignored(ward):
    assert detect_door_crossings(_line(0, 0, 2, (4.0, 1.0), (4.0, 3.0)), ward.plan) == []


# -- labeling -------------------------------------------------------------------------


def _wash_then_enter(tid=0, wait=0.0):
    return _path(tid, [(0, 4.0, 1.2), (1, *GEL1), (3 + wait, *GEL1), (5 + wait, 2.0, 1.6), (6 + wait, 2.0, 2.6)])


def test_wash_then_enter_is_compliant(ward):
    res = label_tracks([_wash_then_enter()], [_wash(2.0)], ward.plan)
    (c,) = res.crossings
    assert (c.door_id, c.direction, c.compliant) == ("door1", "enter", True)
    lt = res.tracks[0]
    assert lt.labels.count("washed") == 1 and lt.labels.count("enter_room:door1") == 1
    assert lt.clean_at(3.0) and not lt.clean_at(0.5)


def test_enter_without_wash_is_not_compliant(ward):
    res = label_tracks([_wash_then_enter()], [], ward.plan)
    assert [c.compliant for c in res.crossings] == [False]
    assert set(res.tracks[0].labels) == {"none", "enter_room:door1"}


def test_wash_too_long_before_entry(ward):
    res = label_tracks([_wash_then_enter(wait=40.0)], [_wash(2.0)], ward.plan)
    assert [c.compliant for c in res.crossings] == [False]


def _wash_enter_exit(tid=0):
    return _path(tid, [(0, *GEL1), (2, *GEL1), (4, 2.0, 1.6), (5, 2.0, 2.8), (8, 2.0, 2.8), (9, 2.0, 1.4), (11, 0.5, 1.0)])


def test_wash_enter_exit_without_rewash(ward):
    res = label_tracks([_wash_enter_exit()], [_wash(1.0)], ward.plan)
    assert [(c.direction, c.compliant) for c in res.crossings] == [("enter", True), ("exit", False)]
    assert not res.tracks[0].clean_at(6.0)


def test_carry_clean_through_room(ward):
    res = label_tracks([_wash_enter_exit()], [_wash(1.0)], ward.plan, FusionParams(carry_clean_through_room=True))
    assert [(c.direction, c.compliant) for c in res.crossings] == [("enter", True), ("exit", True)]


def test_exit_then_wash_is_compliant(ward):
    tr = _path(0, [(0, 2.0, 2.8), (1, 2.0, 1.4), (2.5, *GEL1), (5, *GEL1)])
    res = label_tracks([tr], [_wash(3.5)], ward.plan)
    assert [(c.direction, c.compliant) for c in res.crossings] == [("exit", True)]


def test_each_event_matches_one_track(ward):
    a = _stand(0, 0, 10, GEL1)
    b = _stand(1, 0, 10, (GEL1[0] + 0.2, GEL1[1]))
    res = label_tracks([a, b], [_wash(5.0)], ward.plan)
    assert res.matches == {0: 0}
    assert [len(t.washes) for t in res.tracks] == [1, 0]


def test_contradictory_labels_raise(ward):
    # two points only: the wash and the crossing land on the same point
    tr = Trajectory(0, np.array([[0.0, 2.0, 1.9], [1.0, 2.0, 2.1]]))
    tr_far = Trajectory(0, np.array([[0.0, 2.6, 1.7], [1.0, 2.0, 2.1]]))
    with pytest.raises(ConsistencyError):
        label_tracks([tr_far], [DispenserEvent("s", "gel1", 0.6)], ward.plan)
    assert label_tracks([tr], [], ward.plan).crossings[0].direction == "enter"


def test_judge_crossings_direct():
    cs = [Crossing(0, "d", "enter", 10.0), Crossing(0, "d", "exit", 20.0)]
    out = judge_crossings(cs, [5.0, 25.0])
    assert [c.compliant for c in out] == [True, True]
    out = judge_crossings(cs, [10.0])  # wash at the crossing instant counts as before
    assert [c.compliant for c in out] == [True, False]
    out = judge_crossings(cs, [-30.0])
    assert [c.compliant for c in out] == [False, False]


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(0, 100), max_size=5),
    st.lists(st.tuples(st.floats(0, 100), st.sampled_from(["enter", "exit"])), max_size=5),
    st.floats(0, 100),
)
def test_status_is_causal(washes, crossings, cut):
    # clean intervals before ``cut`` do not change when later marks are dropped
    from wardtrack.fusion import _judge

    cs = sorted((Crossing(0, "d", d, t) for t, d in crossings), key=lambda c: c.t)
    full = _judge(cs, sorted(washes), FusionParams())[1]
    early = _judge([c for c in cs if c.t <= cut], sorted(w for w in washes if w <= cut), FusionParams())[1]

    def clean(intervals, t):
        return any(a <= t < b for a, b in intervals)

    for t in np.linspace(0, cut, 50):
        assert clean(full, t) == clean(early, t)
