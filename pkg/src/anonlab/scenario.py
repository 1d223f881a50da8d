"""Scenario files: validation and execution into a JSON-lines trace.

A scenario plus its seed fixes every byte written.  The trace carries the
simnet event log, public round records, metric rows and a ground-truth
record; reports and attacks are recomputed from it alone.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass

import numpy as np

from .metrics import AnonymityPolicy
from .simnet import ChurnSchedule, EventRecord, Network, NetworkTopology, Tap

OR = "onion-routing"
DC_FULL = "dcnet-full"
DC_CS = "dcnet-client-server"
PROTOCOLS = (OR, DC_FULL, DC_CS)
ATTACKS = ("fingerprint", "stain", "congestion", "intersection", "disclosure")
DC_ONLY = ("intersection", "disclosure")

TOP_FIELDS = {"protocol", "seed", "rounds", "topology", "churn", "group", "attacks", "policy", "faults"}
TOPOLOGY_FIELDS = {"latency_ms", "service_ms", "jitter_ms", "round_period_ms", "deadline_ms"}
CHURN_FIELDS = {"model", "seed", "p_online", "step_ms", "mean_online_steps", "mean_offline_steps",
                "late_prob", "always_online"}
GROUP_FIELDS = {"N", "M", "slot_size", "suite", "shared_slot", "request_flags", "relays",
                "circuit_length", "rate", "constant_rate", "messages", "traffic_prob"}
POLICY_FIELDS = {"metric", "floor", "max_loss_rate", "window", "delay_rounds"}
FAULT_FIELDS = {"disruptor", "victim", "disrupt_rounds", "disrupt_bits", "stale_server"}


class ScenarioError(ValueError):
    """Malformed scenario; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__("%s: %s" % (field, message))
        self.field = field


def _int(d, key, path, default=None, lo=None, hi=None):
    v = d.get(key, default)
    if v is None and default is None and key not in d:
        raise ScenarioError(path + key, "required")
    if isinstance(v, bool) or not isinstance(v, int):
        raise ScenarioError(path + key, "must be an integer")
    if lo is not None and v < lo:
        raise ScenarioError(path + key, "must be >= %d" % lo)
    if hi is not None and v > hi:
        raise ScenarioError(path + key, "must be <= %d" % hi)
    return v


def _num(d, key, path, default, lo=None, hi=None):
    v = d.get(key, default)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioError(path + key, "must be a number")
    if lo is not None and v < lo:
        raise ScenarioError(path + key, "must be >= %g" % lo)
    if hi is not None and v > hi:
        raise ScenarioError(path + key, "must be <= %g" % hi)
    return float(v)


def _bool(d, key, path, default):
    v = d.get(key, default)
    if not isinstance(v, bool):
        raise ScenarioError(path + key, "must be true or false")
    return v


def _obj(d, key, allowed):
    v = d.get(key) or {}
    if not isinstance(v, dict):
        raise ScenarioError(key, "must be an object")
    extra = sorted(set(v) - allowed)
    if extra:
        raise ScenarioError("%s.%s" % (key, extra[0]), "unknown field")
    return v


def validate(raw: dict) -> dict:
    """Return a normalized copy of ``raw`` with defaults filled in."""
    if not isinstance(raw, dict):
        raise ScenarioError("<root>", "scenario must be a JSON object")
    extra = sorted(set(raw) - TOP_FIELDS)
    if extra:
        raise ScenarioError(extra[0], "unknown field")
    if "protocol" not in raw:
        raise ScenarioError("protocol", "required")
    proto = raw["protocol"]
    if proto not in PROTOCOLS:
        raise ScenarioError("protocol", "must be one of %s" % ", ".join(PROTOCOLS))
    sc = {"protocol": proto}
    sc["seed"] = _int(raw, "seed", "", 0, lo=0, hi=2**64 - 1)
    sc["rounds"] = _int(raw, "rounds", "", None, lo=1)

    t = _obj(raw, "topology", TOPOLOGY_FIELDS)
    topo = {
        "latency_ms": _num(t, "latency_ms", "topology.", 10.0, lo=0),
        "service_ms": _num(t, "service_ms", "topology.", 0.1, lo=0),
        "jitter_ms": _num(t, "jitter_ms", "topology.", 0.0, lo=0),
        "round_period_ms": _num(t, "round_period_ms", "topology.", 1000.0, lo=1),
        "deadline_ms": _num(t, "deadline_ms", "topology.", 500.0, lo=0),
    }
    if topo["deadline_ms"] >= topo["round_period_ms"]:
        raise ScenarioError("topology.deadline_ms", "must be below round_period_ms")
    sc["topology"] = topo

    c = _obj(raw, "churn", CHURN_FIELDS)
    model = c.get("model", "none")
    if model not in ("none", "geometric", "bernoulli"):
        raise ScenarioError("churn.model", "must be none, geometric or bernoulli")
    always = c.get("always_online", [])
    if not isinstance(always, list) or any(isinstance(i, bool) or not isinstance(i, int) for i in always):
        raise ScenarioError("churn.always_online", "must be a list of client indices")
    sc["churn"] = {
        "model": model,
        "seed": _int(c, "seed", "churn.", sc["seed"], lo=0),
        "p_online": _num(c, "p_online", "churn.", 0.8, lo=0, hi=1),
        "step_ms": _num(c, "step_ms", "churn.", topo["round_period_ms"], lo=1),
        "mean_online_steps": _num(c, "mean_online_steps", "churn.", 5.0, lo=1),
        "mean_offline_steps": _num(c, "mean_offline_steps", "churn.", 1.0, lo=1),
        "late_prob": _num(c, "late_prob", "churn.", 0.0, lo=0, hi=1),
        "always_online": always,
    }

    gr = _obj(raw, "group", GROUP_FIELDS)
    g = {"N": _int(gr, "N", "group.", None, lo=2)}
    if proto == DC_CS:
        g["M"] = _int(gr, "M", "group.", 3, lo=1)
    g["suite"] = gr.get("suite", "test")
    if g["suite"] not in ("test", "real"):
        raise ScenarioError("group.suite", "must be test or real")
    if proto == OR:
        g["relays"] = _int(gr, "relays", "group.", 10, lo=2)
        g["circuit_length"] = _int(gr, "circuit_length", "group.", 3, lo=1)
        if g["circuit_length"] > g["relays"]:
            raise ScenarioError("group.circuit_length", "exceeds group.relays")
        g["rate"] = _num(gr, "rate", "group.", 4.0, lo=0)
        g["constant_rate"] = _bool(gr, "constant_rate", "group.", False)
    else:
        g["shared_slot"] = _bool(gr, "shared_slot", "group.", False)
        g["request_flags"] = _bool(gr, "request_flags", "group.", not g["shared_slot"])
        g["slot_size"] = _int(gr, "slot_size", "group.", 64, lo=2 if g["request_flags"] else 1)
        g["traffic_prob"] = _num(gr, "traffic_prob", "group.", 0.0, lo=0, hi=1)
        msgs = gr.get("messages", [])
        if not isinstance(msgs, list):
            raise ScenarioError("group.messages", "must be a list")
        norm = []
        for i, m in enumerate(msgs):
            p = "group.messages[%d]." % i
            if not isinstance(m, dict):
                raise ScenarioError(p[:-1], "must be an object")
            r = _int(m, "round", p, None, lo=0)
            cl = _int(m, "client", p, None, lo=0, hi=g["N"] - 1)
            if ("text" in m) == ("hex" in m):
                raise ScenarioError(p + "text", "give exactly one of text or hex")
            try:
                body = m["text"].encode() if "text" in m else bytes.fromhex(m["hex"])
            except (AttributeError, ValueError):
                raise ScenarioError(p + ("text" if "text" in m else "hex"), "not a valid payload") from None
            cap = g["slot_size"] - (1 if g["request_flags"] else 0)
            if len(body) > cap:
                raise ScenarioError(p + ("text" if "text" in m else "hex"), "longer than the slot body (%d bytes)" % cap)
            norm.append({"round": r, "client": cl, "hex": body.hex()})
        g["messages"] = norm
    for i in always:
        if not 0 <= i < g["N"]:
            raise ScenarioError("churn.always_online", "index %d out of range" % i)
    sc["group"] = g

    atk = raw.get("attacks", [])
    if not isinstance(atk, list):
        raise ScenarioError("attacks", "must be a list")
    sc["attacks"] = []
    seen = set()
    for i, a in enumerate(atk):
        p = "attacks[%d]" % i
        if not isinstance(a, dict) or "kind" not in a:
            raise ScenarioError(p + ".kind", "required")
        if a["kind"] not in ATTACKS:
            raise ScenarioError(p + ".kind", "must be one of %s" % ", ".join(ATTACKS))
        if a["kind"] in seen:
            raise ScenarioError(p + ".kind", "duplicate attack kind")
        seen.add(a["kind"])
        if a["kind"] in DC_ONLY and proto == OR:
            raise ScenarioError(p + ".kind", "%s needs a dcnet protocol" % a["kind"])
        if a["kind"] == "congestion" and proto != OR:
            raise ScenarioError(p + ".kind", "congestion probing needs onion-routing")
        sc["attacks"].append(_attack_params(a, p, g["N"]))

    pol = raw.get("policy")
    if pol is not None:
        if proto == OR:
            raise ScenarioError("policy", "policies apply to dcnet protocols only")
        if not isinstance(pol, dict):
            raise ScenarioError("policy", "must be an object or null")
        extra = sorted(set(pol) - POLICY_FIELDS)
        if extra:
            raise ScenarioError("policy." + extra[0], "unknown field")
        metric = pol.get("metric", "possinymity")
        if metric not in ("possinymity", "indinymity"):
            raise ScenarioError("policy.metric", "must be possinymity or indinymity")
        mlr = pol.get("max_loss_rate")
        if mlr is not None:
            mlr = _int(pol, "max_loss_rate", "policy.", None, lo=0)
        pol = {"metric": metric, "floor": _int(pol, "floor", "policy.", 1, lo=1), "max_loss_rate": mlr,
               "window": _int(pol, "window", "policy.", 1, lo=1),
               "delay_rounds": _bool(pol, "delay_rounds", "policy.", False)}
    sc["policy"] = pol
    sc["faults"] = _faults(raw, proto, g)
    return sc


def _faults(raw: dict, proto: str, g: dict) -> dict:
    """Injected misbehaviour: a jamming client and/or a server with a stale online set."""
    f = _obj(raw, "faults", FAULT_FIELDS)
    if f and proto == OR:
        raise ScenarioError("faults", "faults apply to dcnet protocols only")
    out = {}
    if "disruptor" in f:
        out["disruptor"] = _int(f, "disruptor", "faults.", None, lo=0, hi=g["N"] - 1)
        out["victim"] = _int(f, "victim", "faults.", None, lo=0, hi=g["N"] - 1)
        if out["victim"] == out["disruptor"]:
            raise ScenarioError("faults.victim", "must differ from faults.disruptor")
        rounds = f.get("disrupt_rounds")
        if rounds is not None and (not isinstance(rounds, list) or any(
                isinstance(x, bool) or not isinstance(x, int) or x < 0 for x in rounds)):
            raise ScenarioError("faults.disrupt_rounds", "must be a list of round numbers")
        out["disrupt_rounds"] = rounds
        bits = f.get("disrupt_bits")
        if bits is not None and (not isinstance(bits, list) or any(
                isinstance(x, bool) or not isinstance(x, int) or not 0 <= x < 8 * g["slot_size"] for x in bits)):
            raise ScenarioError("faults.disrupt_bits", "must be a list of bit offsets inside one slot")
        out["disrupt_bits"] = bits
    elif "victim" in f or "disrupt_rounds" in f or "disrupt_bits" in f:
        raise ScenarioError("faults.disruptor", "required when victim or disrupt settings are given")
    if "stale_server" in f:
        if proto != DC_CS:
            raise ScenarioError("faults.stale_server", "needs dcnet-client-server")
        out["stale_server"] = _int(f, "stale_server", "faults.", None, lo=0, hi=g.get("M", 1) - 1)
    return out


def _attack_params(a: dict, p: str, n: int) -> dict:
    kind = a["kind"]
    out = {"kind": kind}
    allowed = {"kind", "epoch_ms", "threshold", "max_lag"}
    out["epoch_ms"] = _num(a, "epoch_ms", p + ".", 100.0, lo=1e-3)
    out["threshold"] = _num(a, "threshold", p + ".", 0.7, lo=-1, hi=1)
    out["max_lag"] = _int(a, "max_lag", p + ".", 5, lo=0)
    if kind in ("stain", "intersection", "disclosure", "congestion"):
        allowed.add("target")
        dflt = 0
        out["target"] = _int(a, "target", p + ".", dflt, lo=0, hi=n - 1 if kind == "stain" else None)
    if kind == "stain":
        allowed.add("pattern")
        pat = a.get("pattern", [0, 0, 60, 0, 60, 60, 0, 0, 0, 60, 0, 60])
        if not isinstance(pat, list) or any(isinstance(x, bool) or not isinstance(x, (int, float)) or x < 0 for x in pat):
            raise ScenarioError(p + ".pattern", "must be a list of non-negative delays in ms")
        out["pattern"] = [float(x) for x in pat]
    if kind == "congestion":
        allowed |= {"delta", "visits", "load_per_visit"}
        out["delta"] = _num(a, "delta", p + ".", 0.2, lo=0, hi=1)
        out["visits"] = _int(a, "visits", p + ".", 8, lo=1)
        out["load_per_visit"] = _num(a, "load_per_visit", p + ".", 0.5, lo=0)
    extra = sorted(set(a) - allowed)
    if extra:
        raise ScenarioError("%s.%s" % (p, extra[0]), "unknown field")
    return out


def load(path) -> dict:
    try:
        with open(path) as fh:
            raw = json.load(fh)
    except FileNotFoundError:
        raise ScenarioError("<file>", "no such scenario file: %s" % path) from None
    except json.JSONDecodeError as exc:
        raise ScenarioError("<file>", "invalid JSON at line %d column %d" % (exc.lineno, exc.colno)) from None
    return validate(raw)


# --------------------------------------------------------------------------
# execution
# --------------------------------------------------------------------------

@dataclass
class RunOutput:
    trace: list  # dict records
    metrics: object | None  # MetricSeries for dcnet runs
    aborted: str | None = None


def _event(rec: EventRecord) -> dict:
    d = json.loads(rec.to_json())
    d["type"] = "event"
    return d


def _churn(sc: dict, clients: list, horizon_ms: float) -> ChurnSchedule | None:
    c = sc["churn"]
    if c["model"] == "none":
        return None
    rng = np.random.default_rng(c["seed"])
    keep = {clients[i] for i in c["always_online"]}
    movers = [x for x in clients if x not in keep]
    if c["model"] == "geometric":
        ch = ChurnSchedule.geometric(movers, horizon_ms, c["step_ms"], c["mean_online_steps"],
                                     c["mean_offline_steps"], rng)
        return ChurnSchedule({**ch.intervals, **{x: [(0.0, horizon_ms)] for x in keep}})
    steps = int(np.ceil(horizon_ms / c["step_ms"]))
    on = rng.random((steps, len(movers))) < c["p_online"]
    ivs = {x: [(0.0, horizon_ms)] for x in keep}
    for j, x in enumerate(movers):
        spans, start = [], None
        for s in range(steps + 1):
            up = s < steps and on[s, j]
            if up and start is None:
                start = s
            elif not up and start is not None:
                spans.append((start * c["step_ms"], s * c["step_ms"]))
                start = None
        ivs[x] = spans
    return ChurnSchedule(ivs)


def run(sc: dict, seed: int | None = None) -> RunOutput:
    sc = copy.deepcopy(sc)
    if seed is not None:
        sc["seed"] = int(seed)
    head = {"type": "scenario", "scenario": sc}
    if sc["protocol"] == OR:
        out = _run_onion(sc)
    else:
        out = _run_dcnet(sc)
    out.trace.insert(0, head)
    return out


def _dc_workload(sc: dict, clients: list, rng: np.random.Generator) -> dict:
    g = sc["group"]
    wl: dict = {}
    for m in g["messages"]:
        wl.setdefault(m["round"], {}).setdefault(clients[m["client"]], []).append(bytes.fromhex(m["hex"]))
    if g["traffic_prob"] > 0:
        body = g["slot_size"] - (1 if g["request_flags"] else 0)
        for r in range(sc["rounds"]):
            for i, c in enumerate(clients):
                if rng.random() < g["traffic_prob"]:
                    msg = ("r%d:%d" % (r, i)).encode()[: max(body, 1)] or b"\x01"
                    wl.setdefault(r, {}).setdefault(c, []).append(msg)
    return wl


def _run_dcnet(sc: dict, stain: bool = True) -> RunOutput:
    from .dcnet import (CLIENT_SERVER, FULL, ScheduleAbortedError, Session, SessionConfig,
                        create_group)
    from .dcnet.session import BULLETIN, pseudonym_label

    g, t = sc["group"], sc["topology"]
    topo = CLIENT_SERVER if sc["protocol"] == DC_CS else FULL
    ss = np.random.SeedSequence(sc["seed"])
    s_session, s_work = (int(x.generate_state(1)[0]) for x in ss.spawn(2))
    policy = AnonymityPolicy(**sc["policy"]) if sc["policy"] else None
    group = create_group(g["N"], g.get("M", 0), topo, g["slot_size"], g["suite"], g["request_flags"],
                         g["shared_slot"], policy)
    clients = list(group.descriptor.clients)
    horizon = (sc["rounds"] + 1) * t["round_period_ms"]
    churn = _churn(sc, clients, horizon)
    cfg = SessionConfig(round_period_ms=t["round_period_ms"], deadline_ms=t["deadline_ms"],
                        latency_ms=t["latency_ms"], late_prob=sc["churn"]["late_prob"], seed=s_session)
    wl = _dc_workload(sc, clients, np.random.default_rng(s_work))
    try:
        session = Session(group, churn, policy, cfg, wl)
    except ScheduleAbortedError as exc:
        return RunOutput([{"type": "abort", "reason": str(exc)}], None, str(exc))
    _inject_faults(sc["faults"], group, clients, session)
    stain_cfg = next((a for a in sc["attacks"] if a["kind"] == "stain"), None)
    tap_links = {(c, session.upstream(c)) for c in clients}
    observer = session.net.register_tap(Tap(tap_links | {(session.publisher(), BULLETIN)}, "isp"))
    if stain and stain_cfg is not None:
        target = clients[stain_cfg["target"]]
        from .adversary import stain as apply_stain
        tap = session.net.register_tap(Tap({(target, session.upstream(target))}, "stainer", active=True))
        apply_stain(tap, (target, session.upstream(target)), stain_cfg["pattern"], stain_cfg["epoch_ms"])
    res = session.run(sc["rounds"])
    session.net.run()

    trace = [_event(r) for r in session.net.observe(observer)]
    first = res.transcripts[0].schedule if res.transcripts else session.schedule
    labels = [pseudonym_label(first, k) for k in range(len(first.slots))]
    pub = {r: (t_ms, spans, out) for r, t_ms, spans, out in res.public_outputs}
    for tr in res.transcripts:
        rec = {"type": "round", "round": tr.round_id, "status": tr.status,
               "online": sorted(tr.online), "participants": sorted(tr.participants),
               "output_digest": tr.output_digest(), "culprits": list(tr.culprits),
               "suppressed": sorted(k for k, v in tr.decisions.items() if v == "suppress")}
        if tr.round_id in pub:
            t_ms, spans, out = pub[tr.round_id]
            rec["published_ms"] = t_ms
            rec["active"] = [labels[k] for k, (a, b) in enumerate(spans) if any(out[a:b])]
            if len(out) <= 64:
                rec["output_hex"] = out.hex()
        trace.append(rec)
    for r, nym, poss, indi, dec in sorted(res.metrics.rows()):
        trace.append({"type": "metric", "round": r, "pseudonym": nym, "possinymity": poss,
                      "indinymity": indi, "decision": dec})
    for r, b in res.blames:
        trace.append({"type": "blame", "round": r, "verdict": b.verdict, "culprits": list(b.culprits)})
    owners = {labels[c.slot]: c.id for c in group.clients.values() if c.slot is not None and c.slot < len(labels)}
    truth = {"type": "truth", "owners": owners, "clients": clients,
             "uplinks": {c: session.upstream(c) for c in clients}, "exit": [session.publisher(), BULLETIN]}
    if stain_cfg is not None and stain:
        base = _run_dcnet(sc, stain=False)
        truth["unstained_exit"] = [[e["time_ms"], e["size_bytes"]] for e in base.trace
                                   if e.get("type") == "event" and e["kind"] == "deliver" and e["dst"] == BULLETIN]
        truth["unstained_outputs"] = [e["output_digest"] for e in base.trace if e.get("type") == "round"]
    trace.append(truth)
    aborted = None
    if any(tr.status == "corrupted" for tr in res.transcripts):
        aborted = "round(s) corrupted by server online-set disagreement"
    return RunOutput(trace, res.metrics, aborted)


def _inject_faults(faults: dict, group, clients, session) -> None:
    from .dcnet import ClientBehavior, ServerBehavior

    if "disruptor" in faults:
        victim = group.clients[clients[faults["victim"]]]
        rounds = faults["disrupt_rounds"]
        bits = faults["disrupt_bits"]
        group.clients[clients[faults["disruptor"]]].behavior = ClientBehavior(
            disrupt_slot=victim.slot, disrupt_bits=None if bits is None else tuple(bits),
            disrupt_rounds=None if rounds is None else frozenset(rounds))
    if "stale_server" in faults:
        sid = list(group.servers)[faults["stale_server"]]
        # the stale server keeps combining over just the first two clients
        group.servers[sid].behavior = ServerBehavior(stale_online=frozenset(clients[:2]))


def or_patterns(n_users: int, epochs: int, epoch_ms: float, rate: float, constant: bool,
                rng: np.random.Generator) -> list:
    """Per-user [(time_ms, 1), ...] cell schedules with distinct bursty shapes."""
    out = []
    for _ in range(n_users):
        cells = []
        if constant:
            k = max(int(round(rate)), 1)
            for e in range(epochs):
                cells += [(e * epoch_ms + (j + 0.5) * epoch_ms / k, 1) for j in range(k)]
        else:
            on = rng.random(epochs) < 0.5
            counts = rng.poisson(rate * 2, epochs) * on
            for e in range(epochs):
                for tt in np.sort(rng.uniform(0, epoch_ms, counts[e])):
                    cells.append((e * epoch_ms + float(tt), 1))
        out.append(cells)
    return out


def _run_onion(sc: dict, stain: bool = True) -> RunOutput:
    from .adversary import CongestionScenario, stain as apply_stain
    from .onion import OnionNetwork, RelayDirectory, build_circuit
    from .primitives import get_suite

    g, t = sc["group"], sc["topology"]
    ss = np.random.SeedSequence(sc["seed"])
    s_circ, s_traffic, s_net = (int(x.generate_state(1)[0]) for x in ss.spawn(3))
    suite = get_suite(g["suite"])
    relays = ["r%d" % i for i in range(g["relays"])]
    directory, keys = RelayDirectory.generate(relays, suite)
    users = ["u%d" % i for i in range(g["N"])]
    dests = ["d%d" % i for i in range(g["N"])]
    crng = np.random.default_rng(s_circ)
    circuits = [build_circuit(directory, g["circuit_length"], crng, u, d) for u, d in zip(users, dests)]
    epoch_ms = next((a["epoch_ms"] for a in sc["attacks"]), 100.0)
    patterns = or_patterns(g["N"], sc["rounds"], epoch_ms, g["rate"], g["constant_rate"],
                           np.random.default_rng(s_traffic))
    stain_cfg = next((a for a in sc["attacks"] if a["kind"] == "stain"), None)

    def simulate(with_stain: bool):
        net = Network(NetworkTopology.uniform(relays + users + dests, t["latency_ms"]), seed=s_net)
        onet = OnionNetwork(net, directory, keys, t["service_ms"], t["jitter_ms"], s_net)
        entry = {(c.source, c.relays[0]) for c in circuits}
        exit_ = {(c.relays[-1], c.destination) for c in circuits}
        observer = net.register_tap(Tap(entry | exit_, "isp"))
        if with_stain:
            c = circuits[stain_cfg["target"]]
            tap = net.register_tap(Tap({(c.source, c.relays[0])}, "stainer", active=True))
            apply_stain(tap, (c.source, c.relays[0]), stain_cfg["pattern"], stain_cfg["epoch_ms"])
        for i, (c, pat) in enumerate(zip(circuits, patterns)):
            onet.run_flow(c, pat, flow_id="f%d" % i)
        net.run()
        return net, observer

    net, observer = simulate(stain and stain_cfg is not None)
    trace = [_event(r) for r in net.observe(observer)]
    truth = {"type": "truth", "circuits": {c.source: [*c.relays, c.destination] for c in circuits},
             "pairs": [[c.source, c.destination] for c in circuits]}
    if stain_cfg is not None:
        base_net, base_obs = simulate(False)
        dest = circuits[stain_cfg["target"]].destination
        truth["unstained_exit"] = [[r.time_ms, r.size_bytes] for r in base_net.observe(base_obs)
                                   if r.kind == "deliver" and r.dst == dest]
    cong = next((a for a in sc["attacks"] if a["kind"] == "congestion"), None)
    if cong is not None:
        victim = circuits[cong["target"]]
        scen = CongestionScenario(directory, keys, victim, latency_ms=t["latency_ms"],
                                  petal_visits=cong["visits"], load_per_visit=cong["load_per_visit"],
                                  seed=s_net)
        for r in [None] + relays:
            trace.append({"type": "probe", "target": r, "times": scen.run(r),
                          "baseline_ms": list(scen.baseline_ms),
                          "probe_ms": [scen.probe_ms[0] + scen.settle_ms, scen.probe_ms[1]]})
    trace.append(truth)
    return RunOutput(trace, None, None)


def write_trace(records, path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True, separators=(",", ":")) + "\n")


def read_trace(path) -> list:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]
