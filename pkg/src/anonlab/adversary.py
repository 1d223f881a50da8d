"""Attack suite: traffic confirmation, staining, congestion probing,
intersection and statistical disclosure.

Attack code works on ``ObservedRecord`` rows (times, endpoints, sizes) and
public round outputs only.  Ground truth is used solely when scoring an
``AttackReport``.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Hashable, Iterable

import numpy as np

from . import _kernels
from .onion import Circuit, OnionNetwork, RelayDirectory, flower_petal
from .simnet import DELIVER, EventRecord, Network, NetworkTopology, Tap, link

DEFAULT_THRESHOLD = 0.7
DEFAULT_EPOCH_MS = 100.0
DEFAULT_MAX_LAG = 5
MIN_EPOCHS = 8


class PassiveTapError(ValueError):
    pass


@dataclass(frozen=True)
class ObservedRecord:
    time_ms: float
    kind: str
    src: Hashable
    dst: Hashable
    size_bytes: int


def tap_view(records: Iterable[EventRecord]) -> list[ObservedRecord]:
    """What a wiretap sees: no flow lineage, no payload."""
    return [ObservedRecord(r.time_ms, r.kind, r.src, r.dst, r.size_bytes) for r in records]


@dataclass
class FlowSeries:
    flow_id: Hashable
    epoch_ms: float
    counts: np.ndarray

    def __post_init__(self):
        self.counts = np.asarray(self.counts, dtype=np.float64)
        if (self.counts < 0).any():
            raise ValueError("counts must be non-negative")


def flow_series(observed: Iterable[ObservedRecord], epoch_ms: float = DEFAULT_EPOCH_MS,
                n_epochs: int | None = None, start_ms: float = 0.0, kind: str = DELIVER,
                weight: str = "cells") -> dict:
    """Per-link epoch counts keyed by (src, dst)."""
    buckets: dict = {}
    last = 0
    for r in observed:
        if r.kind != kind or r.time_ms < start_ms:
            continue
        e = int((r.time_ms - start_ms) // epoch_ms)
        if n_epochs is not None and e >= n_epochs:
            continue
        last = max(last, e + 1)
        buckets.setdefault((r.src, r.dst), []).append((e, r.size_bytes if weight == "bytes" else 1))
    n = n_epochs if n_epochs is not None else last
    out = {}
    for key, items in buckets.items():
        counts = np.zeros(n)
        for e, w in items:
            counts[e] += w
        out[key] = FlowSeries(key, epoch_ms, counts)
    return out


@dataclass(frozen=True)
class Match:
    entry: Hashable
    exit: Hashable
    score: float
    lag: int


def fingerprint_correlate(entry: list, exit_: list, threshold: float = DEFAULT_THRESHOLD,
                          max_lag: int = DEFAULT_MAX_LAG, min_epochs: int = MIN_EPOCHS) -> list[Match]:
    """Greedy maximum-correlation matching of entry to exit series.

    Scores are the best Pearson correlation over lags in [-max_lag, max_lag]
    (positive lag: exit trails entry).  Zero-variance series have no
    defined correlation and never match.
    """
    if not entry or not exit_:
        return []
    widths = {s.epoch_ms for s in entry} | {s.epoch_ms for s in exit_}
    if len(widths) != 1:
        raise ValueError("series must share one epoch width")
    n = max(len(s.counts) for s in list(entry) + list(exit_))
    if n < min_epochs:
        raise ValueError("need at least %d epochs" % min_epochs)

    def stack(series):
        m = np.zeros((len(series), n))
        for i, s in enumerate(series):
            m[i, : len(s.counts)] = s.counts
        return m

    scores, lags = _kernels.lagged_pearson(stack(entry), stack(exit_), max_lag, min_epochs)
    cand = [(scores[i, j], i, j) for i in range(len(entry)) for j in range(len(exit_))
            if not np.isnan(scores[i, j]) and scores[i, j] >= threshold]
    cand.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_e, used_x, out = set(), set(), []
    for s, i, j in cand:
        if i in used_e or j in used_x:
            continue
        used_e.add(i)
        used_x.add(j)
        out.append(Match(entry[i].flow_id, exit_[j].flow_id, float(s), int(lags[i, j])))
    return out


def link_owner(candidates: dict, target: FlowSeries, rng: np.random.Generator,
               max_lag: int = DEFAULT_MAX_LAG, min_epochs: int = MIN_EPOCHS, tol: float = 1e-9):
    """Best guess at which candidate's series drives ``target``.

    Ties (and the all-undefined case) are broken uniformly at random.
    """
    names = list(candidates)
    if not names:
        return None
    n = max(len(target.counts), *(len(candidates[k].counts) for k in names))
    ent = np.zeros((len(names), n))
    for i, k in enumerate(names):
        ent[i, : len(candidates[k].counts)] = candidates[k].counts
    tgt = np.zeros((1, n))
    tgt[0, : len(target.counts)] = target.counts
    scores, _ = _kernels.lagged_pearson(ent, tgt, max_lag, min(min_epochs, n))
    col = scores[:, 0]
    if np.isnan(col).all():
        pool = names
    else:
        best = np.nanmax(col)
        pool = [names[i] for i in range(len(names)) if not np.isnan(col[i]) and col[i] >= best - tol]
    return pool[int(rng.integers(len(pool)))]


# --------------------------------------------------------------------------
# active staining
# --------------------------------------------------------------------------

def stain(tap: Tap, flow, delay_pattern, epoch_ms: float = DEFAULT_EPOCH_MS, start_ms: float = 0.0) -> Tap:
    """Delay cells on ``flow`` = (src, dst) by ``delay_pattern[epoch]`` ms.

    Requires an active tap.  An empty pattern leaves traffic untouched.
    """
    if not tap.active:
        raise PassiveTapError("staining needs an active-capable tap")
    pattern = [float(d) for d in delay_pattern]
    target = link(*flow) if flow is not None else None
    if target is not None and target not in tap.links:
        raise ValueError("flow is not on a tapped link")

    def delay(rec: EventRecord) -> float:
        if not pattern or (target is not None and link(rec.src, rec.dst) != target):
            return 0.0
        e = int((rec.time_ms - start_ms) // epoch_ms)
        return pattern[e] if 0 <= e < len(pattern) else 0.0

    tap.delay_fn = delay
    return tap


def stain_reference(pattern, epoch_ms: float = DEFAULT_EPOCH_MS) -> np.ndarray:
    return np.asarray(pattern, dtype=np.float64)


# --------------------------------------------------------------------------
# congestion probing
# --------------------------------------------------------------------------

@dataclass
class CongestionScenario:
    """A long-lived victim circuit plus the attacker's probing budget.

    Relay service time is ``service_ms`` per cell; a relay visited v times
    by flower-petal circuits serves at ``1 / (1 + load_per_visit * v)`` of
    its normal rate during the probe window.
    """

    directory: RelayDirectory
    keypairs: dict
    victim: Circuit
    latency_ms: float = 10.0
    service_ms: float = 1.0
    cell_interval_ms: float = 3.0
    baseline_ms: tuple = (200.0, 1000.0)
    probe_ms: tuple = (1000.0, 2000.0)
    settle_ms: float = 200.0
    petal_visits: int = 8
    load_per_visit: float = 0.5
    jitter_ms: float = 0.2
    seed: int = 0
    victim_online: bool = True

    def run(self, target: str | None) -> list[float]:
        """Exit-side delivery times of victim cells (the attacker's measurement point)."""
        relays = sorted(self.directory.relays)
        nodes = relays + [self.victim.source, self.victim.destination]
        topo = NetworkTopology.uniform(nodes, self.latency_ms)
        net = Network(topo, seed=self.seed)
        onet = OnionNetwork(net, self.directory, self.keypairs, self.service_ms, self.jitter_ms, self.seed)
        if target is not None:
            others = [r for r in relays if r != target]
            rng = np.random.default_rng(self.seed + 7919)
            petal = flower_petal(target, list(rng.permutation(others)), self.petal_visits)
            visits: dict = {}
            for r in petal.relays:
                visits[r] = visits.get(r, 0) + 1
            for r, v in visits.items():
                onet.congest(r, 1.0 + self.load_per_visit * v, *self.probe_ms)
        end = self.probe_ms[1]
        if self.victim_online:
            times = np.arange(0.0, end, self.cell_interval_ms)
            onet.run_flow(self.victim, [(t, 1) for t in times], flow_id="victim")
        tap = net.register_tap(Tap({(self.victim.relays[-1], self.victim.destination)}, "attacker"))
        net.advance(end + 5000.0)
        return [r.time_ms for r in tap_view(net.observe(tap)) if r.kind == DELIVER]


def throughput(times, window) -> float:
    a, b = window
    t = np.asarray(times)
    return float(((t >= a) & (t < b)).sum()) / (b - a)


def congestion_probe(scenario: CongestionScenario, target: str, delta: float = 0.2):
    """True iff victim throughput during the probe falls below (1 - delta) x baseline.

    Returns None (inconclusive) when the victim shows no baseline traffic.
    """
    times = scenario.run(target)
    base = throughput(times, scenario.baseline_ms)
    if base == 0:
        return None
    probe = throughput(times, (scenario.probe_ms[0] + scenario.settle_ms, scenario.probe_ms[1]))
    return probe < (1.0 - delta) * base


# --------------------------------------------------------------------------
# intersection / statistical disclosure
# --------------------------------------------------------------------------

@dataclass
class PresenceLog:
    members: tuple
    activity_times: np.ndarray
    online: np.ndarray  # (len(activity_times), len(members)) bool

    def __post_init__(self):
        self.members = tuple(self.members)
        self.activity_times = np.asarray(self.activity_times, dtype=np.float64)
        self.online = np.asarray(self.online, dtype=bool).reshape(len(self.activity_times), len(self.members))
        if np.any(np.diff(self.activity_times) <= 0):
            raise ValueError("activity times must be strictly increasing")

    @classmethod
    def from_sets(cls, members, times, online_sets) -> "PresenceLog":
        members = tuple(members)
        idx = {m: i for i, m in enumerate(members)}
        mat = np.zeros((len(times), len(members)), dtype=bool)
        for t, s in enumerate(online_sets):
            for m in s:
                mat[t, idx[m]] = True
        return cls(members, times, mat)

    @classmethod
    def from_schedule(cls, members, churn, times) -> "PresenceLog":
        members = tuple(members)
        mat = np.array([[churn.presence(m, t) for m in members] for t in times], dtype=bool)
        return cls(members, times, mat.reshape(len(times), len(members)))

    def online_set(self, t_index: int) -> set:
        return {m for m, on in zip(self.members, self.online[t_index]) if on}

    def prefix(self, k: int) -> "PresenceLog":
        return PresenceLog(self.members, self.activity_times[:k], self.online[:k])


def intersect(log: PresenceLog) -> set:
    """Members online at every activity time (plain set algebra)."""
    if len(log.activity_times) == 0:
        raise ValueError("need at least one activity time")
    cands = log.online_set(0)
    for t in range(1, len(log.activity_times)):
        cands &= log.online_set(t)
    return cands


def statistical_disclosure(log: PresenceLog, round_outputs=None) -> list[tuple]:
    """Members ranked by the fraction of activity times they were online."""
    if len(log.activity_times) < MIN_EPOCHS:
        raise ValueError("need at least %d activity times" % MIN_EPOCHS)
    scores = log.online.mean(axis=0)
    order = sorted(range(len(log.members)), key=lambda i: (-scores[i], i))
    return [(log.members[i], float(scores[i])) for i in order]


def simulate_intersection(n: int, p: float, activities: int, runs: int, rng: np.random.Generator,
                          owner: int = 0) -> np.ndarray:
    """(runs, activities) candidate-set sizes; owner always online, others i.i.d. Bernoulli(p)."""
    out = np.empty((runs, activities), dtype=np.int64)
    for k in range(runs):
        online = rng.random((activities, n)) < p
        online[:, owner] = True
        out[k] = _kernels.cumulative_candidates(online)
    return out


# --------------------------------------------------------------------------
# reports
# --------------------------------------------------------------------------

@dataclass
class AttackReport:
    kind: str
    parameters: dict
    claimed: list
    truth: list
    precision: float | None
    recall: float | None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = asdict(self)
        if not d["extra"]:
            d.pop("extra")
        return json.dumps(d, sort_keys=True, default=_jsonable)


def _jsonable(x):
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.floating,)):
        return float(x)
    if isinstance(x, (set, frozenset, tuple)):
        return sorted(x) if isinstance(x, (set, frozenset)) else list(x)
    raise TypeError(type(x))


def score_pairs(claimed, truth) -> tuple[float | None, float | None]:
    claimed = {tuple(c) for c in claimed}
    truth = {tuple(t) for t in truth}
    hit = len(claimed & truth)
    precision = hit / len(claimed) if claimed else None
    recall = hit / len(truth) if truth else None
    return precision, recall
