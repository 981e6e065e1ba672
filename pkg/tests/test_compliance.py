import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wardtrack.compliance import (
    ComplianceReport,
    GroundTruthRecord,
    compliance_rate,
    proximity_baseline,
    score_accuracy,
    segment_distance,
)
from wardtrack.fusion import Crossing
from wardtrack.tracker import Trajectory


def _crossings(direction, n, ok):
    return [Crossing(k, "d", direction, float(k), k < ok) for k in range(n)]


def _truth(specs):
    return [GroundTruthRecord(k, d, dirn, t, w) for k, (d, dirn, t, w) in enumerate(specs)]


def _pred(specs):
    return [Crossing(k, d, dirn, t, w) for k, (d, dirn, t, w) in enumerate(specs)]


TRUTH4 = [("door1", "enter", 10.0, True), ("door2", "exit", 20.0, False), ("door1", "exit", 30.0, True), ("door3", "enter", 40.0, False)]


def test_reference_rates():
    rates = compliance_rate(_crossings("enter", 170, 30) + _crossings("exit", 181, 34))
    assert rates["enter"] == pytest.approx(0.1765, abs=1e-4)
    assert rates["exit"] == pytest.approx(0.1878, abs=1e-4)


def test_rate_absent_without_crossings():
    assert compliance_rate([]) == {"enter": None, "exit": None}
    assert compliance_rate(_crossings("enter", 4, 1)) == {"enter": 0.25, "exit": None}


def test_rate_accepts_truth_records():
    assert compliance_rate(_truth(TRUTH4)) == {"enter": 0.5, "exit": 0.5}


def test_perfect_prediction():
    res = score_accuracy(_pred(TRUTH4), _truth(TRUTH4))
    assert res.accuracy == 1.0 and res.matched == 4 and res.false_positives == 0


def test_one_missed_one_flipped():
    pred = _pred(TRUTH4[:1] + [("door2", "exit", 21.0, True)] + TRUTH4[2:3])
    res = score_accuracy(pred, _truth(TRUTH4))
    assert res.accuracy == 0.5
    assert (res.correct, res.matched, res.missed) == (2, 3, 1)
    assert res.confusion.fp == 1


def test_six_second_offset():
    pred = _pred([(d, dirn, t + 6.0, w) for d, dirn, t, w in TRUTH4])
    res = score_accuracy(pred, _truth(TRUTH4))
    assert res.accuracy == 0.0 and res.matched == 0 and res.false_positives == 4


def test_boundary_is_inclusive():
    pred = _pred([(d, dirn, t + 5.0, w) for d, dirn, t, w in TRUTH4])
    assert score_accuracy(pred, _truth(TRUTH4)).accuracy == 1.0


def test_door_and_direction_must_agree():
    t = _truth([("door1", "enter", 10.0, True)])
    assert score_accuracy(_pred([("door2", "enter", 10.0, True)]), t).matched == 0
    assert score_accuracy(_pred([("door1", "exit", 10.0, True)]), t).matched == 0


def test_nearest_in_time_first():
    truth = _truth([("d", "enter", 10.0, True), ("d", "enter", 13.0, False)])
    pred = _pred([("d", "enter", 12.0, False), ("d", "enter", 9.0, True)])
    res = score_accuracy(pred, truth)
    assert set(res.pairs) == {(0, 1), (1, 0)}
    assert res.accuracy == 1.0


def test_empty_truth():
    assert score_accuracy(_pred(TRUTH4), []).accuracy is None


def _record_lists(draw_list):
    return [(f"door{d}", dirn, float(t), bool(w)) for d, dirn, t, w in draw_list]


records = st.lists(st.tuples(st.integers(1, 2), st.sampled_from(["enter", "exit"]), st.integers(0, 60), st.booleans()), max_size=8)


@settings(max_examples=100, deadline=None)
@given(records, records)
def test_matching_is_one_to_one(p, t):
    res = score_accuracy(_pred(_record_lists(p)), _truth(_record_lists(t)))
    ti = [i for i, _ in res.pairs]
    pj = [j for _, j in res.pairs]
    assert len(ti) == len(set(ti)) and len(pj) == len(set(pj))
    if res.accuracy is not None:
        assert 0 <= res.accuracy <= 1


@settings(max_examples=100, deadline=None)
@given(records, st.integers(1, 2), st.sampled_from(["enter", "exit"]), st.booleans())
def test_adding_a_correct_match_never_lowers_accuracy(t, door, dirn, washed):
    truth_specs = _record_lists(t)
    pred_specs = list(truth_specs)
    # a new truth record far from the others, plus its exact prediction
    new = (f"door{door}", dirn, 1000.0, washed)
    before = score_accuracy(_pred(pred_specs[:-1] if pred_specs else []), _truth(truth_specs + [new]))
    after = score_accuracy(_pred((pred_specs[:-1] if pred_specs else []) + [new]), _truth(truth_specs + [new]))
    assert after.accuracy >= before.accuracy


def _walk(tid, legs, rate=10.0):
    pts = []
    for (t0, *a), (t1, *b) in zip(legs, legs[1:]):
        n = int(round((t1 - t0) * rate)) + 1
        seg = np.column_stack([np.linspace(t0, t1, n), np.linspace(a[0], b[0], n), np.linspace(a[1], b[1], n)])
        pts.extend(seg if not pts else seg[1:])
    return Trajectory(tid, np.array(pts))


def test_baseline_fooled_by_passby(ward):
    # passes 0.5 m from gel1 without stopping, then enters door1
    tr = _walk(0, [(0, 5.0, 1.125), (2, 3.25, 1.125), (3, 2.0, 1.4), (4, 2.0, 2.6)])
    (c,) = proximity_baseline([tr], ward.plan)
    assert (c.direction, c.compliant) == ("enter", True)
    (c,) = proximity_baseline([tr], ward.plan, include_doors=False)
    assert c.compliant


def test_baseline_far_from_dispensers(ward):
    # walks straight up into door2 from 1.5 m below it: never within 1 m of a dispenser
    tr = _walk(0, [(0, 5.8, 0.3), (2, 5.8, 2.6)])
    (c,) = proximity_baseline([tr], ward.plan, include_doors=False)
    assert not c.compliant
    # the literal rule also counts the door itself, which every crossing passes
    (c,) = proximity_baseline([tr], ward.plan)
    assert c.compliant


def test_baseline_exit_looks_after_the_crossing(ward):
    tr = _walk(0, [(0, 6.0, 2.8), (1, 6.0, 1.4), (3, 5.0, 0.2)])
    (c,) = proximity_baseline([tr], ward.plan, include_doors=False)
    assert c.direction == "exit" and not c.compliant
    tr = _walk(0, [(0, 6.0, 2.8), (1, 6.0, 1.4), (2, 7.0, 1.6)])
    (c,) = proximity_baseline([tr], ward.plan, include_doors=False)
    assert c.compliant


def test_segment_distance():
    d = segment_distance([(0.0, 1.0), (2.0, 0.0), (-1.0, 0.0)], (0.0, 0.0), (1.0, 0.0))
    np.testing.assert_allclose(d, [1.0, 1.0, 1.0])
    assert segment_distance([(3.0, 4.0)], (0.0, 0.0), (0.0, 0.0))[0] == 5.0


def test_report():
    pred = _pred(TRUTH4)
    rep = ComplianceReport.build(pred, _truth(TRUTH4), baseline=[], orphan_events=2, matched_events=3)
    assert rep.counts == {"enter": {"crossings": 2, "compliant": 1}, "exit": {"crossings": 2, "compliant": 1}}
    recs = {r["metric"]: r["value"] for r in rep.to_records()}
    assert recs["pipeline.accuracy"] == 1.0 and recs["baseline.accuracy"] == 0.0
    assert recs["events.orphan"] == 2 and recs["events.matched"] == 3
    text = rep.summary()
    assert "pipeline accuracy 1.0000" in text and "2 orphan" in text
    assert "accuracy" not in ComplianceReport.build([], None).summary()
