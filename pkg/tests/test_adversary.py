import numpy as np
import pytest
from hypothesis import given, strategies as st

from anonlab.adversary import (AttackReport, CongestionScenario, FlowSeries, PassiveTapError, PresenceLog,
                               congestion_probe, fingerprint_correlate, flow_series, intersect, link_owner,
                               score_pairs, simulate_intersection, stain, statistical_disclosure, tap_view,
                               throughput)
from anonlab.onion import Circuit, RelayDirectory
from anonlab.simnet import ChurnSchedule, EventRecord, Network, NetworkTopology, Tap
from oracles import dcnet_ref as ref

BURST = [5, 0, 7, 1, 0, 0, 0, 0, 0, 0, 0, 0]


def test_shifted_burst_correlates_at_lag_one():
    e = FlowSeries("in", 100, BURST)
    x = FlowSeries("out", 100, [0] + BURST[:-1])
    [m] = fingerprint_correlate([e], [x])
    assert (m.entry, m.exit, m.lag) == ("in", "out", 1)
    assert m.score == pytest.approx(ref.pearson(BURST[:-1], BURST[:-1]))


def test_lag_zero_score_matches_oracle():
    a = [3, 1, 4, 1, 5, 9, 2, 6, 5, 3]
    b = [2, 7, 1, 8, 2, 8, 1, 8, 2, 8]
    [m] = fingerprint_correlate([FlowSeries(0, 10, a)], [FlowSeries(1, 10, b)], threshold=-1, max_lag=0)
    assert m.score == pytest.approx(ref.pearson(a, b))


def test_zero_variance_never_matches():
    flat = FlowSeries("flat", 100, [3] * 12)
    other = FlowSeries("o", 100, BURST)
    assert fingerprint_correlate([flat], [other], threshold=-1) == []


def test_series_validation():
    with pytest.raises(ValueError):
        FlowSeries("x", 100, [1, -1])
    with pytest.raises(ValueError):
        fingerprint_correlate([FlowSeries(0, 100, BURST)], [FlowSeries(1, 50, BURST)])
    with pytest.raises(ValueError):
        fingerprint_correlate([FlowSeries(0, 100, [1, 2, 3])], [FlowSeries(1, 100, [3, 2, 1])])


@given(st.lists(st.lists(st.integers(0, 9), min_size=12, max_size=12), min_size=2, max_size=5),
       st.integers(0, 2**32))
def test_matching_is_permutation_equivariant(rows, seed):
    entry = [FlowSeries(i, 100, r) for i, r in enumerate(rows)]
    exit_ = [FlowSeries("x%d" % i, 100, r) for i, r in enumerate(rows)]
    base = {(m.entry, m.exit) for m in fingerprint_correlate(entry, exit_, threshold=0.99, max_lag=0)}
    perm = np.random.default_rng(seed).permutation(len(rows))
    shuffled = {(m.entry, m.exit) for m in fingerprint_correlate([entry[i] for i in perm],
                                                                [exit_[i] for i in perm], 0.99, 0)}
    assert {e for e, _ in base} == {e for e, _ in shuffled}


def test_link_owner_random_tiebreak():
    rng = np.random.default_rng(0)
    flat = {k: FlowSeries(k, 100, [1] * 10) for k in "abc"}
    picks = {link_owner(flat, FlowSeries("t", 100, BURST[:10]), rng) for _ in range(60)}
    assert picks == set("abc")
    best = dict(flat, d=FlowSeries("d", 100, BURST[:10]))
    assert link_owner(best, FlowSeries("t", 100, BURST[:10]), rng) == "d"


def test_flow_series_counts_and_tap_view():
    recs = [EventRecord(t, "deliver", "a", "b", "secret", 512) for t in (5, 15, 18, 250)]
    obs = tap_view(recs)
    assert not hasattr(obs[0], "flow_id")
    s = flow_series(obs, 10, n_epochs=4)
    assert list(s[("a", "b")].counts) == [1, 2, 0, 0]
    assert list(flow_series(obs, 10, n_epochs=2, weight="bytes")[("a", "b")].counts) == [512, 1024]


def _stain_net():
    net = Network(NetworkTopology.uniform(["a", "b"], 5))
    return net


def test_passive_tap_cannot_stain():
    net = _stain_net()
    tap = net.register_tap(Tap([("a", "b")], "eve"))
    with pytest.raises(PassiveTapError):
        stain(tap, ("a", "b"), [1, 2])


def test_empty_stain_is_identity():
    def run(pattern):
        net = _stain_net()
        if pattern is not None:
            stain(net.register_tap(Tap([("a", "b")], "eve", active=True)), ("a", "b"), pattern)
        for t in range(0, 500, 7):
            net.send("a", "b", b"x", at_ms=float(t))
        net.run()
        return net.log

    assert run([]) == run(None)
    assert run([0, 30]) != run(None)


def test_stain_imprints_on_exit_series():
    net = _stain_net()
    pattern = [0, 40, 0, 0, 80, 0, 40, 0, 0, 0, 80, 0]
    stain(net.register_tap(Tap([("a", "b")], "eve", active=True)), ("a", "b"), pattern, epoch_ms=100)
    for t in range(0, 1200, 10):
        net.send("a", "b", b"x", at_ms=float(t))
    net.run()
    s = flow_series(tap_view(net.log), 100, 12)[("a", "b")].counts
    assert s.std() > 0


def test_intersection_examples():
    log = PresenceLog.from_sets("abcd", [1, 2, 3], [{"a", "b", "c"}, {"a", "c", "d"}, {"a", "c"}])
    assert intersect(log) == {"a", "c"}
    assert intersect(log.prefix(1)) == {"a", "b", "c"}
    with pytest.raises(ValueError):
        intersect(log.prefix(0))


@given(st.integers(2, 12), st.integers(1, 20), st.integers(0, 2**32))
def test_intersection_monotone_and_sound(n, k, seed):
    rng = np.random.default_rng(seed)
    online = rng.random((k, n)) < 0.7
    online[:, 0] = True
    log = PresenceLog(tuple(range(n)), np.arange(k, dtype=float), online)
    sizes = [len(intersect(log.prefix(i + 1))) for i in range(k)]
    assert all(a >= b for a, b in zip(sizes, sizes[1:]))
    assert 0 in intersect(log)


def test_simulate_intersection_matches_set_algebra():
    rng = np.random.default_rng(7)
    sizes = simulate_intersection(30, 0.6, 10, 5, rng)
    rng = np.random.default_rng(7)
    for k in range(5):
        online = rng.random((10, 30)) < 0.6
        online[:, 0] = True
        log = PresenceLog(tuple(range(30)), np.arange(10.0), online)
        assert [len(intersect(log.prefix(i + 1))) for i in range(10)] == list(sizes[k])


def test_disclosure_ranks_owner_first():
    rng = np.random.default_rng(1)
    churn = ChurnSchedule({m: [(float(t), t + 1.0) for t in range(200) if m == "o" or rng.random() < 0.5]
                           for m in ["o", "p", "q", "r"]})
    log = PresenceLog.from_schedule(["o", "p", "q", "r"], churn, np.arange(0.5, 200, 1.0))
    ranked = statistical_disclosure(log)
    assert ranked[0][0] == "o" and ranked[0][1] > 0.99
    with pytest.raises(ValueError):
        statistical_disclosure(log.prefix(3))


def _scenario(**kw):
    ids = ["r%d" % i for i in range(6)]
    d, keys = RelayDirectory.generate(ids)
    victim = Circuit("v", ("r1", "r3", "r5"), "dst")
    return CongestionScenario(d, keys, victim, **kw)


def test_congestion_probe_verdicts():
    sc = _scenario()
    assert congestion_probe(sc, "r3") is True
    assert congestion_probe(sc, "r2") is False
    assert congestion_probe(_scenario(victim_online=False), "r3") is None


def test_throughput_window():
    assert throughput([0, 1, 2, 10], (0, 4)) == 0.75


def test_score_pairs_and_report():
    p, r = score_pairs([("a", "x"), ("b", "y")], [("a", "x"), ("c", "z")])
    assert (p, r) == (0.5, 0.5)
    assert score_pairs([], []) == (None, None)
    rep = AttackReport("fingerprint", {"t": 0.7}, [("a", "x")], [("a", "x")], 1.0, 1.0)
    assert '"precision": 1.0' in rep.to_json()
