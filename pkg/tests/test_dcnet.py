import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from anonlab.dcnet import (CLEAN, CLIENT_SERVER, CORRUPTED, CULPRIT, FULL, INCOMPLETE, INCONCLUSIVE, JAMMED,
                           Accusation, ClientBehavior, ServerBehavior, Session, SessionConfig, SetupError, Slot,
                           SlotSchedule, blame, client_submit, combine, create_group, finalize_online_set,
                           next_schedule, run_session, server_commit, setup_group, verify_accusation)
from anonlab.dcnet.rounds import RoundTranscript
from anonlab.simnet import ChurnSchedule
from oracles import dcnet_ref as ref

FIXTURE = {
    "c0": "f3ea52dccf565fe56abb5b023e7df7c53f3645bc04309ecbf9d64685a039de7167e6686797d08bcff2d490e804f961829427bf705a67f692f68ae48f4eaf5207a512ea3ae354cb8d1f4af0b09417a9d5",
    "c1": "df16c1a63649497ff42b9bd019857989ebd7d2d8651b3dbc50f8dbc79f3850d170e27689b4eb5162fb9a6c670e7a7323103e102509c3ef4205cb30bf1dcb7d322512839e2fccb30a9233f5f9c94633ff",
    "c2": "f41b46942c8624836473b6877253ff5bf546b84114172cb690ea5966c3bd315a37e2bd286fd05e73e95cfa882fd7075c6ee7b1e15b322e71d25efbdb16bf90e7b1bafc8f665470d1522fde08df9c9bc2",
    "c3": "cff984e50a079b46dba24a780be818fb28f4c23905aba26e7ffecffc1a948d21a1742b91323c63b5c66ab24f3bda0b71c94c921628ce411c2ea6f9ecd36c2a1a56a2f5c24a894e7b9ee99a45400be147",
    "c4": "183600b4a7f499c64585667facd6b7244b42f2bc164d4de68278f9fdbe4a95eb4e7e9af8368741f4b2629aa244c56d83394b482c29dbf313b08e24109938845f7b511739c666cc11ffd3d637720b830e",
    "s0": "c40fca2f42c538f2d958a0ce071461bdfb11b0a3f9fefb568e24864484719c4ce94063b51d27e8e0627b342bc9c2dd4eec038a32a70bb39624b3e302ffb7ad5362c000e650b6a48bf02f6d552badf52c",
    "s1": "e4e009abfafe3f5c677b3a41b9d49ca269dfc83cbbc7b6d1a66f2c9bff2609b1c526fc85d07b8e2ff8455ef8efb11a4769b6757f9f285f6aa0def5ad0b5b85ae3923851fe841b980e75a8b64cdb16af5",
    "s2": "4eabe253a1513737dae7c0dd4c5523d7d0df673f24e32dceec0958fa233532cd84ebe0f2e421b231772444397c38b4069f4c3bc331a069523b5ae4b8fb63396a22da8140f2bbf916a919710256d1fc78",
}
OUTPUT = ("616c70686100000000000000000000000000000000000000000000000000000067616d6d612d72617900000000000000"
          "00000000000000000000000000000000657073696c6f6e210000000000000000")
MSGS = {0: b"alpha", 2: b"gamma-ray", 4: b"epsilon!"}


def fixed_round(n, m, slot, round_id, msgs, topology=CLIENT_SERVER, online=None):
    g = create_group(n, m, topology, slot_size=slot)
    setup_group(g)
    sched = SlotSchedule(round_id, tuple(Slot(b"nym%d" % i, slot) for i in range(n)), True)
    for i, c in enumerate(g.clients.values()):
        c.slot = i
        if i in msgs:
            c.outbox.append(msgs[i])
    online = frozenset(g.clients) if online is None else frozenset(online)
    tr = RoundTranscript(round_id, sched, online)
    for c in sorted(online):
        tr.client_ciphertexts[c] = client_submit(g.clients[c], round_id, sched, g.counterparts(c, online))
    for s in g.servers:
        tr.server_ciphertexts[s] = server_commit(g.servers[s], round_id, sched.total_length, online)
    combine(tr, g)
    return g, tr


def test_seed_counts():
    for n, m, topo, want in [(3, 0, FULL, 3), (100, 5, CLIENT_SERVER, 500), (100, 0, FULL, 4950)]:
        g = create_group(n, m, topo)
        table, reg = setup_group(g)
        assert len(table) == want
        assert len(reg.seeds) == 2 * want


def test_group_validation():
    with pytest.raises(SetupError):
        create_group(1, 1)
    with pytest.raises(SetupError):
        create_group(3, 0, CLIENT_SERVER)


def test_round_matches_reference_fixture():
    g, tr = fixed_round(5, 3, 16, 7, MSGS)
    for c, ct in tr.client_ciphertexts.items():
        assert ct.data.hex() == FIXTURE[c]
    for s, sc in tr.server_ciphertexts.items():
        assert sc.data.hex() == FIXTURE[s]
    assert tr.output.hex() == OUTPUT
    assert tr.status == CLEAN
    cts, out = ref.client_server_round(5, 3, 16, 7, MSGS)
    assert out == tr.output


def test_equal_ciphertext_lengths():
    g, tr = fixed_round(6, 2, 20, 0, {1: b"x"})
    sizes = {len(ct.data) for ct in tr.client_ciphertexts.values()}
    assert sizes == {6 * 20}


def test_three_diners_shared_slot():
    g = create_group(3, 0, FULL, slot_size=1, shared_slot=True, request_flags=False)
    cfg = SessionConfig(initial_open=True)
    res = run_session(g, 2, config=cfg, workload={0: {"c1": [b"\x01"]}})
    assert res.transcripts[0].output == b"\x01"
    assert res.transcripts[1].output == b"\x00"


@given(st.integers(2, 7), st.integers(1, 4), st.sampled_from([CLIENT_SERVER, FULL]),
       st.dictionaries(st.integers(0, 6), st.binary(min_size=1, max_size=10), max_size=7),
       st.integers(0, 1000))
@settings(max_examples=40)
def test_pads_cancel_and_slots_decode(n, m, topo, msgs, round_id):
    msgs = {k: v for k, v in msgs.items() if k < n}
    slot = 12
    g, tr = fixed_round(n, m, slot, round_id, msgs, topo)
    for i in range(n):
        got = tr.output[i * slot : (i + 1) * slot]
        want = msgs.get(i, b"")
        assert got[: len(want)] == want and not any(got[len(want):])


@given(st.integers(3, 7), st.data())
@settings(max_examples=30)
def test_absent_clients_do_not_disturb_others(n, data):
    online = data.draw(st.sets(st.integers(0, n - 1), min_size=2))
    ids = ["c%d" % i for i in sorted(online)]
    msgs = {i: b"m%d" % i for i in online}
    for topo in (CLIENT_SERVER, FULL):
        _, tr = fixed_round(n, 2, 8, 3, msgs, topo, ids)
        for i in range(n):
            seg = tr.output[i * 8 : (i + 1) * 8]
            if i in online:
                assert seg.startswith(b"m%d" % i)
            else:
                assert not any(seg)


def test_online_set_is_intersection_of_views():
    views = {"s0": {"c0": 1, "c1": 2, "c2": 700}, "s1": {"c0": 3, "c3": 4}}
    assert finalize_online_set(views, 500) == frozenset({"c0", "c1", "c3"})
    partial = finalize_online_set(views, 500, received={"s0": [], "s1": ["s0"]})
    assert partial == frozenset({"c0", "c1"})


def test_stale_server_corrupts_round():
    g = create_group(4, 3, slot_size=8)
    s = Session(g, config=SessionConfig(seed=1), workload={0: {"c0": [b"hi"]}})
    g.servers["s1"].behavior = ServerBehavior(stale_online=frozenset({"c0", "c1"}))
    tr = s.run_round()
    assert tr.status == CORRUPTED
    assert not s.result.public_outputs
    assert not s.result.delivered


def test_session_delivers_in_both_topologies():
    for topo, m in ((CLIENT_SERVER, 3), (FULL, 0)):
        g = create_group(5, m, topo, slot_size=24)
        wl = {0: {"c0": [b"first", b"second"]}, 1: {"c3": [b"third"]}}
        res = run_session(g, 4, config=SessionConfig(seed=2), workload=wl)
        got = {c: [m for _, m in v] for c, v in res.delivered.items()}
        assert got == {"c0": [b"first", b"second"], "c3": [b"third"]}
        assert set(res.statuses()) == {CLEAN}


def test_closed_slot_opens_after_request():
    sched = SlotSchedule(0, (Slot(b"a", 8), Slot(b"b", 8)), True)
    out = bytearray(16)
    out[7] = 1
    nxt = next_schedule(sched, bytes(out), 8)
    assert [s.length for s in nxt.slots] == [8, 1]
    held = next_schedule(sched, bytes(out), 8, hold=frozenset({1}))
    assert [s.length for s in held.slots] == [8, 8]


def test_late_client_full_pairwise_is_incomplete():
    g = create_group(4, 0, FULL, slot_size=8)
    res = run_session(g, 6, config=SessionConfig(seed=4, late_prob=0.5))
    assert INCOMPLETE in res.statuses()
    for tr in res.transcripts:
        if tr.status == INCOMPLETE:
            assert tr.output is None


def test_late_client_client_server_is_excluded():
    g = create_group(6, 2, slot_size=8)
    res = run_session(g, 10, config=SessionConfig(seed=4, late_prob=0.3))
    assert set(res.statuses()) == {CLEAN}
    assert any(tr.online != tr.participants for tr in res.transcripts)


def jam_session(topo, bits, refuse=None, server_jam=False, seed=0):
    m = 3 if topo == CLIENT_SERVER else 0
    g = create_group(5, m, topo, slot_size=16)
    s = Session(g, config=SessionConfig(seed=seed), workload={0: {"c1": [b"hi there"]}})
    victim = g.clients["c1"].slot
    if server_jam:
        g.servers["s2"].behavior = ServerBehavior(disrupt=True)
    else:
        g.clients["c0"].behavior = ClientBehavior(disrupt_slot=victim, disrupt_bits=bits,
                                                  disrupt_rounds=frozenset({0}))
    if refuse:
        g.clients[refuse].behavior = ClientBehavior(refuse_reveal=True)
    s.run(3)
    return g, s.result


@pytest.mark.parametrize("topo", [CLIENT_SERVER, FULL])
@pytest.mark.parametrize("bits", [None, (0, 2, 8)])
def test_disruptor_is_blamed_and_expelled(topo, bits):
    g, res = jam_session(topo, bits)
    assert res.transcripts[0].status == JAMMED
    assert res.blames and res.blames[0][1].verdict == CULPRIT
    assert res.blames[0][1].culprits == ("c0",)
    assert res.expelled == [(0, "c0")]
    # the jammed round is retried once the owner re-requests its slot
    assert [m for _, m in res.delivered["c1"]] == [b"hi there"]


def test_server_disruptor_is_blamed():
    g, res = jam_session(CLIENT_SERVER, None, server_jam=True)
    assert res.blames[0][1].culprits == ("s2",)


def test_refusal_to_reveal_is_blamed():
    g, res = jam_session(CLIENT_SERVER, (0, 2, 8), refuse="c3")
    assert set(res.blames[0][1].culprits) == {"c0", "c3"}


def test_one_to_zero_flips_cannot_be_cited():
    # 'h' = 0x68: bits 1, 2 and 4 are set; flipping only those leaves no 0 -> 1 bit to cite
    g, res = jam_session(CLIENT_SERVER, (1, 2, 4))
    assert not res.blames and not res.expelled


def test_spurious_accusation_is_inconclusive():
    g = create_group(4, 2, slot_size=8)
    s = Session(g, config=SessionConfig(seed=3), workload={0: {"c2": [b"ok"]}})
    tr = s.run_round()
    owner = g.clients["c2"]
    a, _ = tr.schedule.span(owner.slot)
    body = Accusation(0, owner.slot, (a * 8 + 16,), 1).body()
    acc = Accusation(0, owner.slot, (a * 8 + 16,), 1, g.suite.sign(owner.pseudonym.private_part, body))
    assert verify_accusation(g, tr, acc)
    assert blame(g, tr, acc).verdict == INCONCLUSIVE
    forged = Accusation(0, owner.slot, (a * 8 + 16,), 1, b"\x00" * 32)
    assert not verify_accusation(g, tr, forged)


def test_churned_session_runs_clean():
    g = create_group(8, 2, slot_size=8)
    rng = np.random.default_rng(0)
    churn = ChurnSchedule.geometric(list(g.clients), 20_000, 1000, 4, 2, rng)
    res = run_session(g, 20, churn=churn, config=SessionConfig(seed=5))
    assert set(res.statuses()) == {CLEAN}
    assert any(len(tr.online) < 8 for tr in res.transcripts)
