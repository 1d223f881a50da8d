"""Group membership, pairwise seeds, parties and slot schedules."""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from ..primitives import CipherSuite, KeyPair, SharedSeed, commit, get_suite
from ..shuffle import ShuffleConfig, run_cascade, submit

FULL = "full-pairwise"
CLIENT_SERVER = "client-server"
TOPOLOGIES = (FULL, CLIENT_SERVER)


class SetupError(ValueError):
    pass


class ScheduleAbortedError(RuntimeError):
    pass


@dataclass
class GroupDescriptor:
    clients: dict  # id -> public key, the closed admission list
    servers: dict  # id -> public key (empty for full-pairwise)
    topology: str = CLIENT_SERVER
    slot_size: int = 64
    request_flags: bool = True
    shared_slot: bool = False  # single anonymous broadcast slot (classic three-diner setup)
    policy: object = None

    def __post_init__(self):
        if self.topology not in TOPOLOGIES:
            raise SetupError("unknown topology %r" % self.topology)
        if len(self.clients) < 2:
            raise SetupError("a group needs at least 2 clients")
        if self.topology == CLIENT_SERVER and len(self.servers) < 1:
            raise SetupError("client-server groups need at least one server")
        if self.slot_size < (2 if self.request_flags else 1):
            raise SetupError("slot_size too small")
        keys = list(self.clients.values()) + list(self.servers.values())
        if len(set(keys)) != len(keys):
            raise SetupError("duplicate member keys")
        ids = list(self.clients) + list(self.servers)
        if len(set(ids)) != len(ids):
            raise SetupError("duplicate member ids")


@dataclass
class SeedTable:
    seeds: dict = field(default_factory=dict)  # frozenset pair -> SharedSeed

    def __len__(self) -> int:
        return len(self.seeds)

    def get(self, a: str, b: str) -> SharedSeed:
        return self.seeds[frozenset((a, b))]


@dataclass
class CommitmentRegistry:
    """Seed commitments from setup plus per-round pad-segment commitments."""

    seeds: dict = field(default_factory=dict)  # (party, frozenset pair) -> digest
    rounds: dict = field(default_factory=dict)  # round -> {(client, peer): (n_slots, 16) uint8}
    keep_rounds: int = 4

    def register_round(self, round_id: int, client: str, commitments: dict) -> None:
        book = self.rounds.setdefault(round_id, {})
        for peer, arr in commitments.items():
            book[(client, peer)] = arr
        while len(self.rounds) > self.keep_rounds:
            del self.rounds[min(self.rounds)]

    def round_digest(self, round_id: int) -> str:
        h = hashlib.sha256()
        for key in sorted(self.rounds.get(round_id, {})):
            h.update(("%s|%s|" % key).encode())
            h.update(self.rounds[round_id][key].tobytes())
        return h.hexdigest()

    def export_round(self, round_id: int) -> dict:
        return {"%s|%s" % k: v.tobytes().hex() for k, v in sorted(self.rounds.get(round_id, {}).items())}


@dataclass
class ClientBehavior:
    """Deviations from the honest protocol (all off by default)."""

    disrupt_slot: int | None = None
    disrupt_bits: tuple | None = None  # bit offsets inside the slot; None -> random bytes
    disrupt_rounds: frozenset | None = None
    refuse_reveal: bool = False
    lie_in_reveal: bool = False

    def disrupts(self, round_id: int) -> bool:
        return self.disrupt_slot is not None and (
            self.disrupt_rounds is None or round_id in self.disrupt_rounds)


@dataclass
class ServerBehavior:
    disrupt: bool = False
    stale_online: frozenset | None = None
    refuse_reveal: bool = False
    lie_in_reveal: bool = False


@dataclass
class Party:
    id: str
    keypair: KeyPair
    suite: CipherSuite
    seeds: dict = field(default_factory=dict)  # peer id -> seed bytes
    pad_count: int = 0

    def derive(self, peers: dict) -> None:
        self.seeds = {p: self.suite.derive_seed(self.keypair.private_part, pub) for p, pub in peers.items()}

    def pad(self, peer: str, round_id: int, n: int) -> np.ndarray:
        self.pad_count += 1
        return self.suite.prg_array(self.seeds[peer], round_id, n)


@dataclass
class Client(Party):
    behavior: ClientBehavior = field(default_factory=ClientBehavior)
    pseudonym: KeyPair | None = None
    slot: int | None = None  # private: which schedule slot this client owns
    outbox: deque = field(default_factory=deque)
    sent: dict = field(default_factory=dict)  # round -> slot bytes this client wrote


@dataclass
class Server(Party):
    behavior: ServerBehavior = field(default_factory=ServerBehavior)


@dataclass(frozen=True)
class Slot:
    pseudonym: bytes
    length: int


@dataclass(frozen=True)
class SlotSchedule:
    round_id: int
    slots: tuple
    request_flags: bool = True

    @property
    def total_length(self) -> int:
        return sum(s.length for s in self.slots)

    def offsets(self) -> list[int]:
        out, acc = [], 0
        for s in self.slots:
            out.append(acc)
            acc += s.length
        return out

    def span(self, k: int) -> tuple[int, int]:
        start = sum(s.length for s in self.slots[:k])
        return start, start + self.slots[k].length

    def slot_of_byte(self, offset: int) -> int:
        acc = 0
        for k, s in enumerate(self.slots):
            if acc <= offset < acc + s.length:
                return k
            acc += s.length
        raise IndexError(offset)

    def body_length(self, k: int) -> int:
        n = self.slots[k].length
        return n - 1 if self.request_flags else n

    def is_open(self, k: int) -> bool:
        return self.body_length(k) > 0

    def with_round(self, round_id: int) -> "SlotSchedule":
        return SlotSchedule(round_id, self.slots, self.request_flags)


@dataclass
class Group:
    descriptor: GroupDescriptor
    suite: CipherSuite
    clients: dict  # id -> Client
    servers: dict  # id -> Server
    seed_table: SeedTable | None = None
    registry: CommitmentRegistry = field(default_factory=CommitmentRegistry)
    expelled: set = field(default_factory=set)

    @property
    def topology(self) -> str:
        return self.descriptor.topology

    @property
    def admitted(self) -> list[str]:
        return [c for c in self.descriptor.clients if c not in self.expelled]

    def counterparts(self, client_id: str, participants=None) -> list[str]:
        """Peers a client shares pads with in a round."""
        if self.topology == CLIENT_SERVER:
            return list(self.servers)
        pool = participants if participants is not None else self.admitted
        return [c for c in pool if c != client_id]


def create_group(n: int, m: int = 3, topology: str = CLIENT_SERVER, slot_size: int = 64,
                 suite: str | CipherSuite = "test", request_flags: bool = True,
                 shared_slot: bool = False, policy=None, id_prefix: str = "") -> Group:
    """Generate keys for n clients and m servers and return an un-setup group."""
    suite = get_suite(suite) if isinstance(suite, str) else suite
    if topology == FULL:
        m = 0
    ckeys = [suite.keygen("%sc%d" % (id_prefix, i)) for i in range(n)]
    skeys = [suite.keygen("%ss%d" % (id_prefix, j)) for j in range(m)]
    desc = GroupDescriptor({k.id: k.public_part for k in ckeys}, {k.id: k.public_part for k in skeys},
                           topology, slot_size, request_flags, shared_slot, policy)
    clients = {k.id: Client(k.id, k, suite) for k in ckeys}
    servers = {k.id: Server(k.id, k, suite) for k in skeys}
    return Group(desc, suite, clients, servers)


def setup_group(group: Group) -> tuple[SeedTable, CommitmentRegistry]:
    """Every party derives its pairwise seeds; both sides register H(seed).

    Full-pairwise groups yield N(N-1)/2 seeds, client-server groups N*M.
    """
    d = group.descriptor
    if d.topology == CLIENT_SERVER:
        for c in group.clients.values():
            c.derive(d.servers)
        for s in group.servers.values():
            s.derive(d.clients)
    else:
        for c in group.clients.values():
            c.derive({p: pub for p, pub in d.clients.items() if p != c.id})
    table = SeedTable()
    reg = group.registry
    parties = list(group.clients.values()) + list(group.servers.values())
    for party in parties:
        for peer, seed in party.seeds.items():
            pair = frozenset((party.id, peer))
            reg.seeds[(party.id, pair)] = commit(b"seed", seed)
            if pair not in table.seeds:
                table.seeds[pair] = SharedSeed(seed, pair)
            elif table.seeds[pair].bytes != seed:
                raise SetupError("seed disagreement on %s" % sorted(pair))
    group.seed_table = table
    return table, reg


def assign_slots(group: Group, rng: np.random.Generator, round_id: int = 0,
                 initial_open: bool = True, tamper: dict | None = None) -> SlotSchedule:
    """Shuffle fresh pseudonym keys; output order becomes slot order.

    Shufflers are the servers (client-server) or the first three clients
    (full-pairwise).  Each client learns its slot by finding its own key.
    """
    d = group.descriptor
    members = [group.clients[c] for c in group.admitted]
    if d.shared_slot:
        for c in members:
            c.slot = 0
        return SlotSchedule(round_id, (Slot(b"", d.slot_size),), False)
    for c in members:
        c.pseudonym = group.suite.sign_keygen("nym-%s-%d" % (c.id, round_id))
    if d.topology == CLIENT_SERVER:
        shufflers = [s.keypair for s in group.servers.values()]
    else:
        shufflers = [c.keypair for c in members[: min(3, len(members))]]
    key_len = len(members[0].pseudonym.public_part)
    cfg = ShuffleConfig(shufflers, len(members), key_len, group.suite)
    subs = [submit(c.id, c.pseudonym.public_part, cfg, rng) for c in members]
    result = run_cascade(cfg, subs, rng, tamper=tamper, round_id=round_id)
    if result.aborted:
        raise ScheduleAbortedError("slot shuffle complaint: %r" % {
            k: v for k, v in result.verdicts.items() if v != "ok"})
    order = result.released
    for c in members:
        c.slot = order.index(c.pseudonym.public_part)
    full = d.slot_size if initial_open or not d.request_flags else 1
    return SlotSchedule(round_id, tuple(Slot(k, full) for k in order), d.request_flags)


def next_schedule(schedule: SlotSchedule, output: bytes | None, slot_size: int,
                  hold: frozenset = frozenset()) -> SlotSchedule:
    """Open slot k next round iff its request byte was set this round.

    Slots in ``hold`` (suppressed) keep their current length; a round
    without output keeps the whole schedule.
    """
    nxt = schedule.round_id + 1
    if output is None or not schedule.request_flags:
        return schedule.with_round(nxt)
    slots = []
    for k, s in enumerate(schedule.slots):
        if k in hold:
            slots.append(s)
            continue
        _, end = schedule.span(k)
        want = output[end - 1] & 1
        slots.append(Slot(s.pseudonym, slot_size if want else 1))
    return SlotSchedule(nxt, tuple(slots), True)
