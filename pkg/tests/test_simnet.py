import dataclasses

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anonlab.simnet import (DELIVER, DROP, SEND, ChurnSchedule, EventRecord, Network, NetworkTopology,
                            NodeOfflineError, Tap, TimeRegressionError, UnknownNodeError, read_trace)


def line_net(**kw):
    topo = NetworkTopology(["a", "b", "c"], {frozenset("ab"): 5, frozenset("bc"): 7})
    return Network(topo, **kw)


def test_single_send_arrives_after_latency():
    net = line_net()
    net.advance(10)
    arrive = net.send("a", "b", b"hi")
    assert arrive == 15
    net.run()
    kinds = [(r.kind, r.time_ms) for r in net.log]
    assert kinds == [(SEND, 10), (DELIVER, 15)]


def test_shortest_path_latency():
    net = line_net()
    assert net.topology.latency("a", "c") == 12


def test_disconnected_topology_rejected():
    with pytest.raises(ValueError):
        NetworkTopology(["a", "b", "c"], {frozenset("ab"): 1})


def test_unknown_node():
    net = line_net()
    with pytest.raises(UnknownNodeError):
        net.send("a", "zz", b"")


def test_offline_destination_drops():
    churn = ChurnSchedule({"b": [(0, 3)]})
    net = line_net(churn=churn)
    net.send("a", "b", b"x")
    net.run()
    assert [r.kind for r in net.log] == [SEND, DROP]


def test_offline_sender_raises():
    net = line_net(churn=ChurnSchedule({"a": [(5, 10)]}))
    with pytest.raises(NodeOfflineError):
        net.send("a", "b", b"x")


def test_presence_is_half_open():
    churn = ChurnSchedule({"a": [(10, 20)]})
    assert not churn.presence("a", 9.999)
    assert churn.presence("a", 10)
    assert churn.presence("a", 19.999)
    assert not churn.presence("a", 20)


def test_overlapping_intervals_rejected():
    with pytest.raises(ValueError):
        ChurnSchedule({"a": [(0, 10), (5, 12)]})


def test_advance_regression_raises():
    net = line_net()
    net.advance(50)
    with pytest.raises(TimeRegressionError):
        net.advance(49)
    with pytest.raises(TimeRegressionError):
        net.send("a", "b", b"", at_ms=1)


def test_same_time_events_keep_insertion_order():
    net = Network(NetworkTopology.uniform(["a", "b"], 1))
    for i in range(20):
        net.send("a", "b", bytes([i]), flow_id=i)
    net.run()
    delivered = [r.flow_id for r in net.log if r.kind == DELIVER]
    assert delivered == list(range(20))


def test_handler_receives_payload_and_can_reply():
    net = Network(NetworkTopology.uniform(["a", "b"], 2))
    got = []
    net.on_deliver("b", lambda n, rec, p: (got.append(p), n.send("b", "a", p[::-1])))
    net.send("a", "b", b"abc")
    net.run()
    assert got == [b"abc"]
    assert net.log[-1].dst == "a" and net.log[-1].time_ms == 4


def test_tap_sees_only_its_links():
    net = line_net()
    tap = net.register_tap(Tap([("a", "b")], owner="eve"))
    net.send("a", "b", b"1")
    net.send("b", "c", b"2")
    net.run()
    seen = net.observe(tap)
    assert seen and all({r.src, r.dst} == {"a", "b"} for r in seen)


def test_records_carry_no_payload():
    fields = {f.name for f in dataclasses.fields(EventRecord)}
    assert fields == {"time_ms", "kind", "src", "dst", "flow_id", "size_bytes"}


def test_passive_tap_does_not_change_log():
    def scenario(with_tap):
        net = line_net()
        if with_tap:
            net.register_tap(Tap([("a", "b"), ("b", "c")], owner="eve"))
        for i in range(5):
            net.send("a", "c", b"x" * i, at_ms=float(i))
        net.run()
        return net.log

    assert scenario(True) == scenario(False)


def test_passive_tap_cannot_delay():
    with pytest.raises(ValueError):
        Tap([("a", "b")], owner="eve", delay_fn=lambda r: 1.0)


def test_active_tap_delays():
    net = line_net()
    net.register_tap(Tap([("a", "b")], owner="eve", active=True, delay_fn=lambda r: 3.0))
    assert net.send("a", "b", b"") == 8


def test_trace_roundtrip(tmp_path):
    net = line_net()
    net.send("a", "c", b"xyz", flow_id="f1")
    net.run()
    p = tmp_path / "t.jsonl"
    net.export_trace(p)
    assert read_trace(p) == net.log


@given(st.lists(st.tuples(st.sampled_from("abc"), st.sampled_from("abc"), st.floats(0, 100)), max_size=40),
       st.integers(0, 2**32))
def test_conservation_and_monotone_time(sends, seed):
    rng = np.random.default_rng(seed)
    churn = ChurnSchedule.geometric(["c"], 200, 10, 3, 2, rng)
    net = Network(NetworkTopology.uniform(list("abc"), 4), churn=churn)
    for src, dst, t in sorted(sends, key=lambda s: s[2]):
        if src == "c":
            continue
        net.send(src, dst, b"p", at_ms=t)
    net.run()
    n_send = sum(r.kind == SEND for r in net.log)
    n_end = sum(r.kind in (DELIVER, DROP) for r in net.log)
    assert n_send == n_end == sum(1 for s in sends if s[0] != "c")
    times = [r.time_ms for r in net.log]
    assert times == sorted(times)


@given(st.integers(0, 2**32))
def test_geometric_churn_is_disjoint_and_in_horizon(seed):
    churn = ChurnSchedule.geometric(range(5), 1000, 10, 4, 3, np.random.default_rng(seed))
    for ivs in churn.intervals.values():
        for s, e in ivs:
            assert 0 <= s < e <= 1000
