import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra import numpy as hnp

from anonlab.metrics import (INDINYMITY, POSSINYMITY, SUPPRESS, TRANSMIT, AnonymityPolicy, MetricSeries,
                             PseudonymTracker, gate_round, indinymity, possinymity)

presence = hnp.arrays(np.bool_, st.tuples(st.integers(1, 10), st.integers(1, 12)))


def brute_poss(rows):
    n = len(rows[0])
    return sum(all(r[i] for r in rows) for i in range(n))


def brute_indi(rows, owner):
    n = len(rows[0])
    return sum(all(r[i] == r[owner] for r in rows) for i in range(n))


def test_possinymity_example():
    rows = [[1, 1, 1, 0], [1, 0, 1, 1], [1, 1, 1, 1]]
    assert possinymity(rows) == 2
    assert possinymity(np.zeros((0, 4))) == 4


def test_indinymity_example():
    rows = [[1, 1, 0, 1], [0, 0, 1, 0]]
    assert indinymity(rows, 0) == 3
    assert indinymity(rows, 2) == 1


@given(presence)
def test_metrics_match_brute_force(rows):
    assert possinymity(rows) == brute_poss(rows.tolist())
    for owner in range(rows.shape[1]):
        assert indinymity(rows, owner) == brute_indi(rows.tolist(), owner)


@given(presence, st.data())
def test_indinymity_bounded_by_possinymity_when_owner_always_online(rows, data):
    owner = data.draw(st.integers(0, rows.shape[1] - 1))
    rows = rows.copy()
    rows[:, owner] = True
    assert 1 <= indinymity(rows, owner) <= possinymity(rows)


@given(presence)
def test_possinymity_monotone_nonincreasing(rows):
    vals = [possinymity(rows[: k + 1]) for k in range(rows.shape[0])]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_policy_validation():
    with pytest.raises(ValueError):
        AnonymityPolicy(floor=0)
    with pytest.raises(ValueError):
        AnonymityPolicy(metric="other")


def test_gate_floor_suppresses():
    t = PseudonymTracker(6)
    pol = AnonymityPolicy(POSSINYMITY, floor=3)
    t.record(0, np.array([1, 1, 1, 1, 0, 0], bool), True, True, POSSINYMITY)
    assert gate_round(pol, t, np.array([1, 1, 1, 0, 0, 0], bool)) == TRANSMIT
    assert gate_round(pol, t, np.array([1, 1, 0, 0, 1, 1], bool)) == SUPPRESS
    assert gate_round(None, t, np.zeros(6, bool)) == TRANSMIT


def test_gate_loss_rate():
    t = PseudonymTracker(10)
    pol = AnonymityPolicy(POSSINYMITY, floor=1, max_loss_rate=2)
    assert gate_round(pol, t, np.array([1] * 8 + [0] * 2, bool), 0) == TRANSMIT
    assert gate_round(pol, t, np.array([1] * 7 + [0] * 3, bool), 0) == SUPPRESS


def test_gate_indinymity_worst_case_over_candidates():
    t = PseudonymTracker(4)
    t.record(0, np.array([1, 1, 1, 0], bool), True, True, INDINYMITY)
    pol = AnonymityPolicy(INDINYMITY, floor=2)
    # c2 would be alone among candidates in its presence pattern
    assert gate_round(pol, t, np.array([1, 1, 0, 0], bool)) == SUPPRESS
    assert gate_round(pol, t, np.array([1, 1, 1, 1], bool)) == TRANSMIT


def test_tracker_ignores_activity_without_online_candidate():
    t = PseudonymTracker(3)
    t.record(0, np.array([1, 0, 0], bool), True, True, POSSINYMITY)
    t.record(1, np.array([0, 1, 1], bool), True, True, POSSINYMITY)
    assert t.possinymity() == 1


def test_suppressed_rounds_do_not_count_for_indinymity():
    t = PseudonymTracker(3)
    t.record(0, np.array([1, 0, 1], bool), False, False, INDINYMITY)
    assert t.indinymity(0) == 3


@given(hnp.arrays(np.bool_, st.tuples(st.integers(1, 15), st.integers(2, 10))), st.integers(1, 5), st.data())
def test_gated_tracker_never_drops_below_floor(rows, floor, data):
    n = rows.shape[1]
    floor = min(floor, n)
    owner = data.draw(st.integers(0, n - 1))
    pol = AnonymityPolicy(POSSINYMITY, floor=floor)
    t = PseudonymTracker(n)
    for r, row in enumerate(rows):
        dv = gate_round(pol, t, row, r)
        active = dv == TRANSMIT and bool(row[owner])
        t.record(r, row, active, dv == TRANSMIT, POSSINYMITY)
        assert t.possinymity() >= floor


def test_metric_series_csv(tmp_path):
    s = MetricSeries()
    s.record("nym000", 0, 5, 5, TRANSMIT)
    s.record("nym000", 1, 4, None, SUPPRESS)
    p = tmp_path / "m.csv"
    s.to_csv(p)
    assert p.read_text().splitlines() == ["round,pseudonym,possinymity,indinymity,decision",
                                          "0,nym000,5,5,transmit", "1,nym000,4,,suppress"]
    assert s.minimum() == 4 and s.suppressions() == [(1, "nym000")]
