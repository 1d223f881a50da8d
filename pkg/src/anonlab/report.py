"""Reports and attacks recomputed from a persisted trace."""

from __future__ import annotations

import hashlib
import json
from collections import Counter

import numpy as np

from . import adversary as adv
from .scenario import OR

REPORT_VERSION = 1


def _events(trace):
    return [adv.ObservedRecord(e["time_ms"], e["kind"], e["src"], e["dst"], e["size_bytes"])
            for e in trace if e.get("type") == "event"]


def _one(trace, kind):
    return next((e for e in trace if e.get("type") == kind), None)


def _rounds(trace):
    return [e for e in trace if e.get("type") == "round"]


def _digest(pairs) -> str:
    return hashlib.sha256(json.dumps(pairs, separators=(",", ":")).encode()).hexdigest()


def _n_epochs(trace, epoch_ms: float) -> int:
    """Epochs covering the scenario's traffic window (idle tails would fake variance)."""
    sc = _one(trace, "scenario")["scenario"]
    if sc["protocol"] == OR:
        traffic_epoch = next((a["epoch_ms"] for a in sc["attacks"]), 100.0)
        horizon = sc["rounds"] * traffic_epoch
    else:
        horizon = sc["rounds"] * sc["topology"]["round_period_ms"]
    return max(int(np.ceil(horizon / epoch_ms)), 1)


def _dc_exit_series(trace, epoch_ms, n):
    """Per-pseudonym activity series built from public round outputs."""
    series: dict = {}
    labels = sorted({nym for r in _rounds(trace) for nym in r.get("active", [])} |
                    set(_one(trace, "truth")["owners"]))
    for nym in labels:
        counts = np.zeros(n)
        for r in _rounds(trace):
            if nym in r.get("active", []):
                e = int(r["published_ms"] // epoch_ms)
                if e < n:
                    counts[e] += 1
        series[nym] = adv.FlowSeries(nym, epoch_ms, counts)
    return series


def attack(trace, kind: str, params: dict | None = None) -> adv.AttackReport:
    sc = _one(trace, "scenario")["scenario"]
    truth = _one(trace, "truth")
    p = dict(next((a for a in sc["attacks"] if a["kind"] == kind), {"kind": kind}))
    p.update(params or {})
    p.setdefault("epoch_ms", 100.0)
    p.setdefault("threshold", 0.7)
    p.setdefault("max_lag", 5)
    fn = {"fingerprint": _fingerprint, "stain": _stain, "congestion": _congestion,
          "intersection": _intersection, "disclosure": _disclosure}.get(kind)
    if fn is None:
        raise KeyError(kind)
    return fn(trace, sc, truth, p)


def _fingerprint(trace, sc, truth, p):
    epoch, n = p["epoch_ms"], _n_epochs(trace, p["epoch_ms"])
    obs = _events(trace)
    links = adv.flow_series(obs, epoch, n)
    if sc["protocol"] == OR:
        users = set(truth["circuits"])
        dests = {d for _, d in truth["pairs"]}
        entry = [adv.FlowSeries(s, epoch, f.counts) for (s, d), f in sorted(links.items()) if s in users]
        exit_ = [adv.FlowSeries(d, epoch, f.counts) for (s, d), f in sorted(links.items()) if d in dests]
        matches = adv.fingerprint_correlate(entry, exit_, p["threshold"], p["max_lag"])
        claimed = [[m.entry, m.exit] for m in matches]
        prec, rec = adv.score_pairs(claimed, truth["pairs"])
        return adv.AttackReport("fingerprint", p, claimed, truth["pairs"], prec, rec,
                                {"scores": [round(m.score, 6) for m in matches]})
    clients = truth["clients"]
    up = {c: links.get((c, truth["uplinks"][c])) for c in clients}
    cands = {c: s if s is not None else adv.FlowSeries(c, epoch, np.zeros(n)) for c, s in up.items()}
    rng = np.random.default_rng(sc["seed"])
    claimed = []
    for nym, series in _dc_exit_series(trace, epoch, n).items():
        if series.counts.any():
            claimed.append([adv.link_owner(cands, series, rng, p["max_lag"]), nym])
    truth_pairs = [[truth["owners"][nym], nym] for _, nym in claimed]
    prec, rec = adv.score_pairs(claimed, truth_pairs)
    return adv.AttackReport("fingerprint", p, claimed, truth_pairs, prec, rec)


def _stain(trace, sc, truth, p):
    epoch, n = p["epoch_ms"], _n_epochs(trace, p["epoch_ms"])
    obs = _events(trace)
    links = adv.flow_series(obs, epoch, n)
    if sc["protocol"] == OR:
        src = "u%d" % p["target"]
        first = truth["circuits"][src][0]
        ref = links.get((src, first))
        dests = {d for _, d in truth["pairs"]}
        exits = [adv.FlowSeries(d, epoch, f.counts) for (s, d), f in sorted(links.items()) if d in dests]
        truth_pair = [[src, truth["circuits"][src][-1]]]
        exit_now = [[e.time_ms, e.size_bytes] for e in obs if e.kind == "deliver" and e.dst == truth_pair[0][1]]
    else:
        src = truth["clients"][p["target"]]
        ref = links.get((src, truth["uplinks"][src]))
        exits = list(_dc_exit_series(trace, epoch, n).values())
        mine = [nym for nym, o in truth["owners"].items() if o == src]
        truth_pair = [[src, m] for m in mine]
        exit_now = [[e.time_ms, e.size_bytes] for e in obs if e.kind == "deliver" and e.dst == truth["exit"][1]]
    claimed, score = [], None
    if ref is not None:
        ref = adv.FlowSeries(src, epoch, ref.counts)
        m = adv.fingerprint_correlate([ref], exits, p["threshold"], p["max_lag"])
        if m:
            claimed, score = [[m[0].entry, m[0].exit]], round(m[0].score, 6)
    prec, rec = adv.score_pairs(claimed, truth_pair)
    extra = {"score": score}
    if truth.get("unstained_exit") is not None:
        extra["exit_unchanged"] = exit_now == truth["unstained_exit"]
        extra["exit_digest"] = _digest(exit_now)
    return adv.AttackReport("stain", p, claimed, truth_pair, prec, rec, extra)


def _congestion(trace, sc, truth, p):
    probes = {e["target"]: e for e in trace if e.get("type") == "probe"}
    verdicts = {}
    for r, e in sorted((k, v) for k, v in probes.items() if k is not None):
        base = adv.throughput(e["times"], e["baseline_ms"])
        verdicts[r] = None if base == 0 else adv.throughput(e["times"], e["probe_ms"]) < (1 - p["delta"]) * base
    claimed = sorted(r for r, v in verdicts.items() if v)
    victim = "u%d" % p["target"]
    members = sorted(truth["circuits"][victim][:-1])
    prec, rec = adv.score_pairs([[r] for r in claimed], [[r] for r in members])
    return adv.AttackReport("congestion", p, claimed, members, prec, rec,
                            {"verdicts": {k: v for k, v in verdicts.items()}})


def presence_log(trace, nym: str) -> adv.PresenceLog:
    """Activity times of ``nym`` with the published online set at each."""
    clients = _one(trace, "truth")["clients"]
    rows = [r for r in _rounds(trace) if nym in r.get("active", [])]
    return adv.PresenceLog.from_sets(clients, [r["published_ms"] for r in rows], [r["online"] for r in rows])


def _target_nym(truth, p):
    client = truth["clients"][p["target"]]
    mine = sorted(n for n, o in truth["owners"].items() if o == client)
    return client, (mine[0] if mine else None)


def _intersection(trace, sc, truth, p):
    client, nym = _target_nym(truth, p)
    if nym is None:
        return adv.AttackReport("intersection", p, [], [client], None, None, {"note": "target owns no slot"})
    log = presence_log(trace, nym)
    if len(log.activity_times) == 0:
        return adv.AttackReport("intersection", p, [], [client], None, None, {"note": "pseudonym never active"})
    cands = sorted(adv.intersect(log))
    prec = (1.0 / len(cands)) if client in cands else 0.0
    return adv.AttackReport("intersection", p, cands, [client], prec, 1.0 if client in cands else 0.0,
                            {"pseudonym": nym, "activities": len(log.activity_times)})


def _disclosure(trace, sc, truth, p):
    client, nym = _target_nym(truth, p)
    log = presence_log(trace, nym) if nym else None
    if log is None or len(log.activity_times) < adv.MIN_EPOCHS:
        return adv.AttackReport("disclosure", p, [], [client], None, None,
                                {"note": "fewer than %d activity times" % adv.MIN_EPOCHS})
    ranked = adv.statistical_disclosure(log)
    top = ranked[0][1]
    tied = [m for m, s in ranked if s == top]
    hit = client in tied
    return adv.AttackReport("disclosure", p, tied, [client], (1.0 / len(tied)) if hit else 0.0,
                            1.0 if hit else 0.0,
                            {"pseudonym": nym, "scores": {m: round(s, 6) for m, s in ranked[:10]}})


def build_report(trace) -> dict:
    sc = _one(trace, "scenario")["scenario"]
    events = [e for e in trace if e.get("type") == "event"]
    rep = {"version": REPORT_VERSION, "protocol": sc["protocol"], "seed": sc["seed"],
           "rounds": sc["rounds"],
           "simulated_ms": max((e["time_ms"] for e in events), default=0.0),
           "events": len(events)}
    ab = _one(trace, "abort")
    if ab is not None:
        rep["abort"] = ab["reason"]
    rounds = _rounds(trace)
    if rounds:
        rep["round_statuses"] = dict(sorted(Counter(r["status"] for r in rounds).items()))
        rep["round_log"] = [{k: r[k] for k in ("round", "status", "output_digest") if k in r} |
                            ({"output_hex": r["output_hex"]} if "output_hex" in r else {})
                            for r in rounds]
        rep["expelled"] = sorted({c for r in rounds for c in r["culprits"]})
    metrics = [e for e in trace if e.get("type") == "metric"]
    if metrics:
        indi = [m["indinymity"] for m in metrics if m["indinymity"] is not None]
        rep["metrics"] = {
            "min_possinymity": min(m["possinymity"] for m in metrics),
            "min_indinymity": min(indi) if indi else None,
            "suppressions": sum(1 for m in metrics if m["decision"] == "suppress"),
            "pseudonyms": len({m["pseudonym"] for m in metrics}),
        }
    rep["attacks"] = {a["kind"]: json.loads(attack(trace, a["kind"]).to_json()) for a in sc["attacks"]}
    return rep


def write_report(rep: dict, path) -> None:
    with open(path, "w") as fh:
        json.dump(rep, fh, sort_keys=True, indent=2)
        fh.write("\n")


def compare(a: dict, b: dict) -> dict:
    ka, kb = set(a["attacks"]), set(b["attacks"])
    if ka != kb:
        raise ValueError("attack sets differ: %s vs %s" % (sorted(ka), sorted(kb)))
    cols = []
    for rep in (a, b):
        col = {"protocol": rep["protocol"], "seed": rep["seed"]}
        for k in sorted(rep["attacks"]):
            r = rep["attacks"][k]
            col[k + ".precision"] = r["precision"]
            col[k + ".recall"] = r["recall"]
            if "exit_unchanged" in r.get("extra", {}):
                col[k + ".exit_unchanged"] = r["extra"]["exit_unchanged"]
        m = rep.get("metrics", {})
        col["min_possinymity"] = m.get("min_possinymity")
        col["min_indinymity"] = m.get("min_indinymity")
        cols.append(col)
    return {"columns": cols}
