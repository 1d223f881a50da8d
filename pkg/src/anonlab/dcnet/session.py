"""Multi-round DC-net sessions driven by the simnet clock.

Per round: snapshot who is online, gate each pseudonym, collect one
equal-size ciphertext from every online client, agree on the on-time set,
combine, publish to the bulletin node, then let owners check their slots
and run accusation shuffles and blame when a slot was jammed.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..metrics import (INDINYMITY, POSSINYMITY, SUPPRESS, TRANSMIT, AnonymityPolicy, MetricSeries,
                       PseudonymTracker, gate_round)
from ..shuffle import ShuffleConfig, run_cascade, submit
from ..simnet import ChurnSchedule, Network, NetworkTopology
from .blame import CULPRIT, BlameResult, blame, verify_accusation
from .group import CLIENT_SERVER, Group, SlotSchedule, assign_slots, next_schedule, setup_group
from .rounds import (CLEAN, CORRUPTED, INCOMPLETE, JAMMED, SUPPRESSED, Accusation, RoundAbortedError,
                     RoundTranscript, client_submit, combine, detect_disruption, finalize_online_set,
                     server_commit)

HUB = "hub"
BULLETIN = "bulletin"


@dataclass
class SessionConfig:
    round_period_ms: float = 1000.0
    deadline_ms: float = 500.0
    exchange_ms: float = 100.0  # server list / ciphertext exchange window
    latency_ms: float = 10.0
    late_prob: float = 0.0
    late_by_ms: float = 50.0  # how far past the deadline a late client sends
    initial_open: bool = True
    max_spurious: int = 2
    commitments: bool = True
    track_metrics: bool = True
    seed: int = 0


@dataclass
class SessionResult:
    transcripts: list = field(default_factory=list)
    metrics: MetricSeries = field(default_factory=MetricSeries)
    suppressions: list = field(default_factory=list)  # (round, slot)
    blames: list = field(default_factory=list)  # (round, BlameResult)
    expelled: list = field(default_factory=list)  # (round, party)
    delivered: dict = field(default_factory=dict)  # client -> [(round, message)]
    flagged: dict = field(default_factory=dict)  # slot -> inconclusive accusation count
    public_outputs: list = field(default_factory=list)  # (round, publish_ms, spans, output)
    net: Network | None = None

    def statuses(self) -> list[str]:
        return [t.status for t in self.transcripts]

    def write_transcripts(self, path) -> None:
        with open(path, "w") as fh:
            for t in self.transcripts:
                fh.write(t.to_json() + "\n")


def pseudonym_label(schedule: SlotSchedule, k: int) -> str:
    return "nym%03d-%s" % (k, schedule.slots[k].pseudonym[:4].hex())


class Session:
    def __init__(self, group: Group, churn: ChurnSchedule | None = None,
                 policy: AnonymityPolicy | None = None, config: SessionConfig | None = None,
                 workload: dict | None = None, net: Network | None = None,
                 schedule: SlotSchedule | None = None):
        self.group = group
        self.config = config or SessionConfig()
        self.policy = policy if policy is not None else group.descriptor.policy
        self.workload = workload or {}
        self.rng = np.random.default_rng(self.config.seed)
        if group.seed_table is None:
            setup_group(group)
        self.schedule = schedule or assign_slots(group, self.rng, 0, self.config.initial_open)
        self.members = list(group.descriptor.clients)
        self.index = {c: i for i, c in enumerate(self.members)}
        self.trackers = [PseudonymTracker(len(self.members)) for _ in self.schedule.slots]
        if net is None:
            nodes = self.members + list(group.servers) + [HUB, BULLETIN]
            net = Network(NetworkTopology.uniform(nodes, self.config.latency_ms), churn, self.config.seed)
        self.net = net
        self.arrivals: dict = {}  # (round, receiver) -> {client: arrival_ms}
        self.pending: dict = {}  # round -> {client: ClientCiphertext}
        receivers = list(group.servers) if group.topology == CLIENT_SERVER else [HUB]
        for r in receivers:
            net.on_deliver(r, self._on_ciphertext)
        self.result = SessionResult(net=net)
        self.round_id = 0

    # ------------------------------------------------------------------
    def _on_ciphertext(self, net, rec, payload) -> None:
        if not (isinstance(rec.flow_id, str) and rec.flow_id.startswith("ct:")):
            return
        _, r, c = rec.flow_id.split(":", 2)
        self.arrivals.setdefault((int(r), rec.dst), {})[c] = rec.time_ms

    def upstream(self, client_id: str) -> str:
        if self.group.topology != CLIENT_SERVER:
            return HUB
        servers = list(self.group.servers)
        return servers[self.index[client_id] % len(servers)]

    def _mask(self, ids) -> np.ndarray:
        m = np.zeros(len(self.members), dtype=bool)
        for c in ids:
            m[self.index[c]] = True
        return m

    def _owner_of(self, k: int) -> str | None:
        for c in self.group.admitted:
            if self.group.clients[c].slot == k:
                return c
        return None

    def _gate(self, online_ids, r: int) -> dict:
        d = self.group.descriptor
        if d.shared_slot:
            return {k: TRANSMIT for k in range(len(self.schedule.slots))}
        mask = self._mask(online_ids)
        dec = {k: gate_round(self.policy, self.trackers[k], mask, r) for k in range(len(self.schedule.slots))}
        if self.policy is not None and self.policy.delay_rounds and SUPPRESS in dec.values():
            dec = {k: SUPPRESS for k in dec}
        return dec

    # ------------------------------------------------------------------
    def run_round(self) -> RoundTranscript:
        g, cfg, net = self.group, self.config, self.net
        r = self.round_id
        sched = self.schedule.with_round(r)
        t0 = r * cfg.round_period_ms
        deadline = t0 + cfg.deadline_ms
        net.advance(t0)

        for c, msgs in self.workload.get(r, {}).items():
            if c in g.clients:
                g.clients[c].outbox.extend(msgs)

        participants = frozenset(c for c in g.admitted if net.presence(c, t0))
        decisions = self._gate(participants, r)
        length = sched.total_length

        # clients: one ciphertext of identical length each
        cts = {}
        for c in sorted(participants, key=self.index.get):
            client = g.clients[c]
            allow = decisions.get(client.slot, TRANSMIT) == TRANSMIT
            ct = client_submit(client, r, sched, g.counterparts(c, participants), allow, cfg.commitments)
            if ct.commitments:
                g.registry.register_round(r, c, ct.commitments)
            cts[c] = ct
            late = cfg.late_prob > 0 and self.rng.random() < cfg.late_prob
            at = deadline + cfg.late_by_ms if late else t0
            if net.presence(c, at):
                net.send(c, self.upstream(c), b"", flow_id="ct:%d:%s" % (r, c), size_bytes=length, at_ms=at)
        net.advance(deadline)

        tr = RoundTranscript(r, sched, frozenset(), participants=participants, decisions=decisions)
        publish_at = deadline + 2 * cfg.exchange_ms
        released = False
        if g.topology == CLIENT_SERVER:
            released = self._server_phase(tr, cts, deadline, length)
        else:
            agreed = frozenset(self.arrivals.get((r, HUB), {}))
            tr.online = agreed
            tr.client_ciphertexts = {c: cts[c] for c in agreed}
            if agreed != participants:
                tr.status = INCOMPLETE
            else:
                combine(tr, g)
                released = True
        if released:
            net.send(HUB if g.topology != CLIENT_SERVER else self._combiner(), BULLETIN, b"",
                     flow_id="out:%d" % r, size_bytes=length, at_ms=publish_at)
            self.result.public_outputs.append(
                (r, publish_at + net.topology.latency(self.publisher(), BULLETIN),
                 [sched.span(k) for k in range(len(sched.slots))], tr.output))
            self._accountability(tr)
            self._confirm(tr)
        else:
            tr.output = tr.output if tr.status == CORRUPTED else None
        net.advance(t0 + cfg.round_period_ms - 1e-6 if cfg.round_period_ms > 0 else t0)

        self._record_metrics(tr, released)
        for k, dv in decisions.items():
            if dv == SUPPRESS or tr.status == SUPPRESSED:
                self.result.suppressions.append((r, k))
        hold = frozenset(k for k, dv in decisions.items() if dv == SUPPRESS)
        out = tr.output if released else None
        self.schedule = next_schedule(sched, out, g.descriptor.slot_size, hold)
        self.arrivals = {k: v for k, v in self.arrivals.items() if k[0] > r}
        self.result.transcripts.append(tr)
        self.round_id += 1
        return tr

    def _combiner(self) -> str:
        return next(iter(self.group.servers))

    def publisher(self) -> str:
        return self._combiner() if self.group.topology == CLIENT_SERVER else HUB

    def _server_phase(self, tr: RoundTranscript, cts: dict, deadline: float, length: int) -> bool:
        g, cfg, net, r = self.group, self.config, self.net, tr.round_id
        servers = list(g.servers)
        crashed = [s for s in servers if not net.presence(s, deadline)]
        views = {s: self.arrivals.get((r, s), {}) for s in servers if s not in crashed}
        # each server broadcasts its on-time list to the others
        for s in views:
            for o in servers:
                if o != s:
                    net.send(s, o, b"", flow_id="list:%d" % r, size_bytes=8 * len(views[s]), at_ms=deadline)
        try:
            agreed = finalize_online_set(views, deadline, None, crashed)
        except RoundAbortedError:
            tr.status = INCOMPLETE
            return False
        tr.online = agreed
        tr.client_ciphertexts = {c: cts[c] for c in agreed}

        if self.policy is not None and agreed != tr.participants and not g.descriptor.shared_slot:
            mask = self._mask(agreed)
            for k, dv in tr.decisions.items():
                if dv == TRANSMIT and gate_round(self.policy, self.trackers[k], mask, r) == SUPPRESS:
                    tr.status = SUPPRESSED
                    return False

        combiner = self._combiner()
        for s in servers:
            tr.server_ciphertexts[s] = server_commit(g.servers[s], r, length, agreed)
            if s != combiner:
                net.send(s, combiner, b"", flow_id="sct:%d" % r, size_bytes=length,
                         at_ms=deadline + cfg.exchange_ms)
        combine(tr, g)
        return tr.status != CORRUPTED

    def _accountability(self, tr: RoundTranscript) -> None:
        g, cfg = self.group, self.config
        accs = []
        for c in sorted(tr.online):
            a = detect_disruption(g.clients[c], tr)
            if a is not None and a.offsets:
                accs.append((c, a))
        if not accs:
            return
        # accusations travel anonymously through a shuffle of all online clients
        if g.topology == CLIENT_SERVER:
            shufflers = [s.keypair for s in g.servers.values()]
        else:
            shufflers = [g.clients[c].keypair for c in sorted(tr.online)[:3]]
        size = Accusation.encoded_size(128)
        sc = ShuffleConfig(shufflers, len(tr.online), size, g.suite)
        mine = dict(accs)
        subs = [submit(c, mine[c].encode() if c in mine else b"", sc, self.rng) for c in sorted(tr.online)]
        res = run_cascade(sc, subs, self.rng, round_id=tr.round_id)
        if res.aborted:
            return
        for raw in res.released:
            if not raw:
                continue
            acc = Accusation.decode(raw)
            if self.result.flagged.get(acc.slot, 0) >= cfg.max_spurious:
                continue
            if not verify_accusation(g, tr, acc):
                continue
            tr.status = JAMMED
            tr.accusations.append(acc)
            verdict = blame(g, tr, acc)
            self.result.blames.append((tr.round_id, verdict))
            if verdict.verdict == CULPRIT:
                tr.culprits = tuple(sorted(set(tr.culprits) | set(verdict.culprits)))
                for p in verdict.culprits:
                    if p in g.clients and p not in g.expelled:
                        g.expelled.add(p)
                        self.result.expelled.append((tr.round_id, p))
            else:
                self.result.flagged[acc.slot] = self.result.flagged.get(acc.slot, 0) + 1

    def _confirm(self, tr: RoundTranscript) -> None:
        """Owners whose slot decoded intact drop the delivered message."""
        for c in tr.online:
            client = self.group.clients[c]
            sent = client.sent.get(tr.round_id)
            if not sent or client.slot is None or tr.slot_bytes(client.slot) != sent:
                continue
            body = tr.schedule.body_length(client.slot)
            if client.outbox and body > 0 and any(sent[:body]):
                msg = client.outbox.popleft()
                self.result.delivered.setdefault(c, []).append((tr.round_id, msg))

    def _record_metrics(self, tr: RoundTranscript, released: bool) -> None:
        if not self.config.track_metrics or self.group.descriptor.shared_slot:
            return
        metric = self.policy.metric if self.policy is not None else POSSINYMITY
        mask = self._mask(tr.online if released else ())
        for k in range(len(tr.schedule.slots)):
            dv = tr.decisions.get(k, TRANSMIT)
            if tr.status == SUPPRESSED:
                dv = SUPPRESS
            enabled = released and dv == TRANSMIT
            active = enabled and any(tr.slot_bytes(k))
            tracker = self.trackers[k]
            tracker.record(tr.round_id, mask, active, enabled, metric)
            owner = self._owner_of(k)
            indi = tracker.indinymity(self.index[owner]) if owner is not None else None
            self.result.metrics.record(pseudonym_label(tr.schedule, k), tr.round_id,
                                       tracker.possinymity(), indi, dv)

    def run(self, rounds: int) -> SessionResult:
        for _ in range(rounds):
            self.run_round()
        return self.result


def run_session(group: Group, rounds: int, churn: ChurnSchedule | None = None,
                policy: AnonymityPolicy | None = None, config: SessionConfig | None = None,
                workload: dict | None = None, **kw) -> SessionResult:
    return Session(group, churn, policy, config, workload, **kw).run(rounds)


def write_registry(group: Group, rounds, path) -> None:
    with open(path, "w") as fh:
        for r in rounds:
            fh.write(json.dumps({"round": r, "commitments": group.registry.export_round(r)},
                                sort_keys=True, separators=(",", ":")) + "\n")
