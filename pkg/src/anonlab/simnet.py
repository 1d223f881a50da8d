"""Deterministic discrete-event network.

Nodes exchange payloads over per-pair latencies; a heap keyed on
(time, sequence number) orders everything, so a scenario plus its seed
reproduces the event log exactly.  Taps expose ``EventRecord`` rows
(never payloads) for the links they cover.
"""

from __future__ import annotations

import bisect
import heapq
import itertools
import json
from dataclasses import asdict, dataclass, field
from typing import Callable, Hashable, Iterable

import numpy as np

Node = Hashable

SEND, DELIVER, DROP = "send", "deliver", "drop"


class UnknownNodeError(KeyError):
    pass


class NodeOfflineError(RuntimeError):
    pass


class TimeRegressionError(ValueError):
    pass


@dataclass(frozen=True)
class EventRecord:
    time_ms: float
    kind: str
    src: Node
    dst: Node
    flow_id: Hashable
    size_bytes: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), separators=(",", ":"))

    @classmethod
    def from_json(cls, line: str) -> "EventRecord":
        return cls(**json.loads(line))


def link(a: Node, b: Node) -> frozenset:
    return frozenset((a, b))


class NetworkTopology:
    """Nodes V and undirected latency-weighted links E.

    With ``default_latency_ms`` set, every unlisted pair is treated as a
    direct link of that latency (implicit complete graph).  Otherwise the
    latency between two nodes is the shortest-path sum over E, and E must
    connect V.
    """

    def __init__(self, nodes: Iterable[Node], links: dict | None = None,
                 default_latency_ms: float | None = None):
        self.nodes = list(dict.fromkeys(nodes))
        self._node_set = set(self.nodes)
        self.links: dict[frozenset, float] = {}
        for pair, lat in (links or {}).items():
            a, b = tuple(pair)
            if a not in self._node_set or b not in self._node_set:
                raise UnknownNodeError(pair)
            if lat <= 0:
                raise ValueError("latency must be positive: %r" % (pair,))
            self.links[link(a, b)] = float(lat)
        if default_latency_ms is not None and default_latency_ms <= 0:
            raise ValueError("latency must be positive")
        self.default_latency_ms = default_latency_ms
        self._adj: dict[Node, list] = {n: [] for n in self.nodes}
        for pair, lat in self.links.items():
            a, b = tuple(pair)
            self._adj[a].append((b, lat))
            self._adj[b].append((a, lat))
        self._dist_cache: dict[Node, dict] = {}
        if default_latency_ms is None and len(self.nodes) > 1:
            reach = self._dijkstra(self.nodes[0])
            if len(reach) != len(self.nodes):
                raise ValueError("topology is not connected")

    @classmethod
    def uniform(cls, nodes: Iterable[Node], latency_ms: float) -> "NetworkTopology":
        return cls(nodes, default_latency_ms=latency_ms)

    def __contains__(self, node) -> bool:
        return node in self._node_set

    def add_node(self, node: Node) -> None:
        if node not in self._node_set:
            if self.default_latency_ms is None:
                raise ValueError("cannot add an unlinked node to an explicit topology")
            self.nodes.append(node)
            self._node_set.add(node)
            self._adj[node] = []

    def _dijkstra(self, src: Node) -> dict:
        dist = {src: 0.0}
        heap = [(0.0, 0, src)]
        tie = itertools.count(1)
        while heap:
            d, _, u = heapq.heappop(heap)
            if d > dist.get(u, float("inf")):
                continue
            for v, w in self._adj[u]:
                nd = d + w
                if nd < dist.get(v, float("inf")):
                    dist[v] = nd
                    heapq.heappush(heap, (nd, next(tie), v))
        return dist

    def latency(self, a: Node, b: Node) -> float:
        for n in (a, b):
            if n not in self._node_set:
                raise UnknownNodeError(n)
        direct = self.links.get(link(a, b))
        if direct is not None:
            return direct
        if self.default_latency_ms is not None:
            return self.default_latency_ms
        if a not in self._dist_cache:
            self._dist_cache[a] = self._dijkstra(a)
        return self._dist_cache[a][b]


@dataclass
class ChurnSchedule:
    """Per-node sorted, disjoint, half-open online intervals [start, end)."""

    intervals: dict = field(default_factory=dict)

    def __post_init__(self):
        clean = {}
        for node, ivs in self.intervals.items():
            ivs = sorted((float(s), float(e)) for s, e in ivs)
            for (s0, e0), (s1, _) in zip(ivs, ivs[1:]):
                if s1 < e0:
                    raise ValueError("overlapping intervals for %r" % (node,))
            for s, e in ivs:
                if e <= s:
                    raise ValueError("empty interval for %r" % (node,))
            clean[node] = ivs
        self.intervals = clean
        self._starts = {n: [s for s, _ in ivs] for n, ivs in clean.items()}

    def covers(self, node: Node) -> bool:
        return node in self.intervals

    def presence(self, node: Node, t_ms: float) -> bool:
        ivs = self.intervals.get(node)
        if not ivs:
            return False
        i = bisect.bisect_right(self._starts[node], t_ms) - 1
        return i >= 0 and ivs[i][0] <= t_ms < ivs[i][1]

    def boundaries(self) -> list[float]:
        pts = set()
        for ivs in self.intervals.values():
            for s, e in ivs:
                pts.update((s, e))
        return sorted(pts)

    @classmethod
    def geometric(cls, nodes: Iterable[Node], horizon_ms: float, step_ms: float,
                  mean_online_steps: float, mean_offline_steps: float,
                  rng: np.random.Generator, p_start_online: float | None = None) -> "ChurnSchedule":
        """Alternating online/offline spells with geometric lengths (in steps)."""
        if mean_online_steps < 1 or mean_offline_steps < 1:
            raise ValueError("mean spell lengths must be >= 1 step")
        if p_start_online is None:
            p_start_online = mean_online_steps / (mean_online_steps + mean_offline_steps)
        out = {}
        for node in nodes:
            t = 0.0
            online = rng.random() < p_start_online
            ivs = []
            while t < horizon_ms:
                mean = mean_online_steps if online else mean_offline_steps
                dur = rng.geometric(1.0 / mean) * step_ms
                if online:
                    ivs.append((t, min(t + dur, horizon_ms)))
                t += dur
                online = not online
            out[node] = ivs
        return cls(out)

    def to_json(self) -> dict:
        return {str(k): [list(iv) for iv in v] for k, v in self.intervals.items()}


@dataclass
class Tap:
    links: frozenset
    owner: str
    active: bool = False
    delay_fn: Callable | None = None

    def __post_init__(self):
        self.links = frozenset(link(*l) if not isinstance(l, frozenset) else l for l in self.links)
        if self.delay_fn is not None and not self.active:
            raise ValueError("a passive tap cannot delay traffic")

    def sees(self, rec: EventRecord) -> bool:
        return link(rec.src, rec.dst) in self.links


Handler = Callable[["Network", EventRecord, bytes], None]


class Network:
    def __init__(self, topology: NetworkTopology, churn: ChurnSchedule | None = None, seed: int = 0):
        self.topology = topology
        self.churn = churn or ChurnSchedule()
        self.rng = np.random.default_rng(seed)
        self.now = 0.0
        self.log: list[EventRecord] = []
        self._queue: list = []
        self._seq = itertools.count()
        self._handlers: dict[Node, Handler] = {}
        self._taps: list[Tap] = []
        self._forced_offline: dict[Node, float] = {}

    # -- configuration ------------------------------------------------------
    def on_deliver(self, node: Node, handler: Handler) -> None:
        self._check(node)
        self._handlers[node] = handler

    def register_tap(self, tap: Tap) -> Tap:
        self._taps.append(tap)
        return tap

    def _check(self, node: Node) -> None:
        if node not in self.topology:
            raise UnknownNodeError(node)

    def presence(self, node: Node, t_ms: float | None = None) -> bool:
        self._check(node)
        t = self.now if t_ms is None else t_ms
        if self.churn.covers(node):
            return self.churn.presence(node, t)
        return True

    # -- events -------------------------------------------------------------
    def schedule(self, at_ms: float, callback: Callable[["Network"], None]) -> None:
        if at_ms < self.now:
            raise TimeRegressionError("cannot schedule in the past")
        heapq.heappush(self._queue, (at_ms, next(self._seq), "call", callback))

    def send(self, src: Node, dst: Node, payload: bytes = b"", flow_id=None,
             size_bytes: int | None = None, at_ms: float | None = None) -> float | None:
        """Send now (or at ``at_ms``); returns the scheduled arrival time."""
        self._check(src)
        self._check(dst)
        t = self.now if at_ms is None else at_ms
        if t < self.now:
            raise TimeRegressionError("cannot send in the past")
        size = len(payload) if size_bytes is None else size_bytes
        if t > self.now:
            heapq.heappush(self._queue, (t, next(self._seq), "send", (src, dst, payload, flow_id, size)))
            return None
        return self._do_send(src, dst, payload, flow_id, size)

    def _do_send(self, src, dst, payload, flow_id, size) -> float:
        if not self.presence(src, self.now):
            raise NodeOfflineError("%r is offline at t=%s" % (src, self.now))
        rec = EventRecord(self.now, SEND, src, dst, flow_id, size)
        self.log.append(rec)
        arrive = self.now + self.topology.latency(src, dst)
        for tap in self._taps:
            if tap.delay_fn is not None and tap.sees(rec):
                arrive += max(0.0, float(tap.delay_fn(rec)))
        heapq.heappush(self._queue, (arrive, next(self._seq), "deliver", (src, dst, payload, flow_id, size)))
        return arrive

    def _process(self, t, kind, item) -> None:
        self.now = t
        if kind == "call":
            item(self)
        elif kind == "send":
            self._do_send(*item)
        else:
            src, dst, payload, flow_id, size = item
            if self.presence(dst, t):
                rec = EventRecord(t, DELIVER, src, dst, flow_id, size)
                self.log.append(rec)
                handler = self._handlers.get(dst)
                if handler is not None:
                    handler(self, rec, payload)
            else:
                self.log.append(EventRecord(t, DROP, src, dst, flow_id, size))

    def advance(self, until_ms: float) -> list[EventRecord]:
        if until_ms < self.now:
            raise TimeRegressionError("advance(%s) before now=%s" % (until_ms, self.now))
        start = len(self.log)
        while self._queue and self._queue[0][0] <= until_ms:
            t, _, kind, item = heapq.heappop(self._queue)
            self._process(t, kind, item)
        self.now = until_ms
        return self.log[start:]

    def run(self) -> list[EventRecord]:
        """Drain the queue completely."""
        start = len(self.log)
        while self._queue:
            t, _, kind, item = heapq.heappop(self._queue)
            self._process(t, kind, item)
        return self.log[start:]

    @property
    def pending(self) -> int:
        return len(self._queue)

    # -- observation --------------------------------------------------------
    def observe(self, tap: Tap) -> list[EventRecord]:
        if tap not in self._taps:
            raise ValueError("tap not registered")
        return [r for r in self.log if tap.sees(r)]

    def export_trace(self, path) -> None:
        write_trace(self.log, path)


def write_trace(records: Iterable[EventRecord], path) -> None:
    with open(path, "w") as fh:
        for r in records:
            fh.write(r.to_json())
            fh.write("\n")


def read_trace(path) -> list[EventRecord]:
    with open(path) as fh:
        return [EventRecord.from_json(line) for line in fh if line.strip()]
