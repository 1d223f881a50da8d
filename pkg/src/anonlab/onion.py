"""Onion routing: directory, circuits, layered wrap/peel, flows over simnet.

Layer i of an onion for circuit (r_1..r_n) is ``(r_i, Enc_{K_ri}(O_{i+1}))``
and the innermost plaintext is the core ``(d, M)``.  A one-byte marker
tells a relay whether what it peeled is another hop or the core.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .primitives import CipherSuite, DecryptionError, KeyPair, TestSuite, suite_for_key
from .simnet import EventRecord, Network

CELL_SIZE = 512
MARK_CORE = 0x00
MARK_HOP = 0x01
DEFAULT_CIRCUIT_LENGTH = 3


class InsufficientRelaysError(ValueError):
    pass


class CellOverflowError(ValueError):
    pass


@dataclass(frozen=True)
class RelayDirectory:
    relays: dict  # relay id -> public key

    @classmethod
    def generate(cls, ids, suite: CipherSuite | None = None) -> tuple["RelayDirectory", dict]:
        suite = suite or TestSuite()
        pairs = {str(r): suite.keygen(r) for r in ids}
        return cls({r: kp.public_part for r, kp in pairs.items()}), pairs

    def __len__(self) -> int:
        return len(self.relays)

    def key(self, relay: str) -> bytes:
        return self.relays[relay]


@dataclass(frozen=True)
class Circuit:
    source: str
    relays: tuple
    destination: str

    def __post_init__(self):
        if len(self.relays) < 1:
            raise ValueError("circuit needs at least one relay")

    @property
    def length(self) -> int:
        return len(self.relays)

    def hops(self) -> list[tuple[str, str]]:
        path = [self.source, *self.relays, self.destination]
        return list(zip(path, path[1:]))


@dataclass(frozen=True)
class Onion:
    hop: str
    body: bytes

    def cell(self) -> bytes:
        return to_cell(self.body)


class NextHop(NamedTuple):
    relay: str
    body: bytes


class Core(NamedTuple):
    destination: str
    message: bytes


def to_cell(body: bytes) -> bytes:
    if len(body) + 2 > CELL_SIZE:
        raise CellOverflowError("%d-byte body does not fit a %d-byte cell" % (len(body), CELL_SIZE))
    return struct.pack(">H", len(body)) + body + bytes(CELL_SIZE - 2 - len(body))


def from_cell(cell: bytes) -> bytes:
    if len(cell) != CELL_SIZE:
        raise DecryptionError("malformed cell")
    (n,) = struct.unpack(">H", cell[:2])
    if n > CELL_SIZE - 2:
        raise DecryptionError("malformed cell length")
    return cell[2 : 2 + n]


def _ident(x: str) -> bytes:
    raw = str(x).encode()
    if len(raw) > 255:
        raise ValueError("identifier too long")
    return bytes([len(raw)]) + raw


def encode_layer(marker: int, ident: str, rest: bytes) -> bytes:
    return bytes([marker]) + _ident(ident) + rest


def decode_layer(plain: bytes) -> NextHop | Core:
    if len(plain) < 2 or plain[0] not in (MARK_CORE, MARK_HOP):
        raise DecryptionError("malformed layer")
    n = plain[1]
    ident = plain[2 : 2 + n].decode()
    rest = plain[2 + n :]
    if plain[0] == MARK_CORE:
        return Core(ident, rest)
    return NextHop(ident, rest)


def build_circuit(directory: RelayDirectory, n: int, rng: np.random.Generator,
                  source: str = "s", destination: str = "d") -> Circuit:
    """n distinct relays drawn uniformly without replacement."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ids = sorted(directory.relays)
    if len(ids) < n:
        raise InsufficientRelaysError("need %d relays, directory has %d" % (n, len(ids)))
    picks = rng.choice(len(ids), size=n, replace=False)
    return Circuit(source, tuple(ids[i] for i in picks), destination)


def wrap(circuit: Circuit, message: bytes, directory: RelayDirectory) -> Onion:
    if not message:
        raise ValueError("message must be non-empty")
    rs = circuit.relays
    inner = encode_layer(MARK_CORE, circuit.destination, message)
    body = suite_for_key(directory.key(rs[-1])).encrypt(directory.key(rs[-1]), inner)
    for i in range(len(rs) - 2, -1, -1):
        plain = encode_layer(MARK_HOP, rs[i + 1], body)
        body = suite_for_key(directory.key(rs[i])).encrypt(directory.key(rs[i]), plain)
    if len(body) + 2 > CELL_SIZE:
        raise CellOverflowError("onion of %d bytes exceeds cell size" % len(body))
    return Onion(rs[0], body)


def peel(keypair: KeyPair, body: bytes) -> NextHop | Core:
    plain = suite_for_key(keypair.private_part).decrypt(keypair.private_part, body)
    return decode_layer(plain)


def peel_all(onion: Onion, keypairs: dict) -> Core:
    hop, body = onion.hop, onion.body
    while True:
        out = peel(keypairs[hop], body)
        if isinstance(out, Core):
            return out
        hop, body = out


# --------------------------------------------------------------------------
# flows over simnet
# --------------------------------------------------------------------------

@dataclass
class _RelayState:
    keypair: KeyPair
    busy_until: float = 0.0
    windows: list = field(default_factory=list)  # (start, end, factor)

    def factor(self, t: float) -> float:
        f = 1.0
        for s, e, k in self.windows:
            if s <= t < e:
                f *= k
        return f


class OnionNetwork:
    """Relay runtime installed on a ``Network``.

    Each relay serves cells FIFO with a per-cell service time
    ``service_ms`` scaled by any active congestion factor, plus optional
    uniform jitter in [0, jitter_ms).
    """

    def __init__(self, net: Network, directory: RelayDirectory, keypairs: dict,
                 service_ms: float = 0.0, jitter_ms: float = 0.0, seed: int = 0):
        self.net = net
        self.directory = directory
        self.service_ms = service_ms
        self.jitter_ms = jitter_ms
        self.rng = np.random.default_rng(seed)
        self.relays = {r: _RelayState(keypairs[r]) for r in directory.relays}
        self.received: dict[str, list] = {}
        self.failures: list = []
        for r in self.relays:
            net.on_deliver(r, self._relay_handler(r))
        self._next_flow = 0

    def congest(self, relay: str, factor: float, start_ms: float, end_ms: float) -> None:
        """Divide the relay's service rate by ``factor`` during [start, end)."""
        if factor < 1:
            raise ValueError("congestion factor must be >= 1")
        self.relays[relay].windows.append((start_ms, end_ms, factor))

    def _relay_handler(self, relay: str):
        state = self.relays[relay]

        def handle(net: Network, rec: EventRecord, cell: bytes) -> None:
            try:
                out = peel(state.keypair, from_cell(cell))
            except DecryptionError as exc:
                self.failures.append((net.now, relay, rec.flow_id, str(exc)))
                return
            service = self.service_ms * state.factor(net.now)
            if self.jitter_ms:
                service += float(self.rng.uniform(0.0, self.jitter_ms))
            depart = max(net.now, state.busy_until) + service
            state.busy_until = depart
            if isinstance(out, Core):
                nxt, payload = out.destination, to_cell(out.message)
                if nxt not in self.received:
                    net.on_deliver(nxt, self._dest_handler(nxt))
            else:
                nxt, payload = out.relay, to_cell(out.body)
            if nxt not in net.topology:
                self.failures.append((net.now, relay, rec.flow_id, "unknown next hop"))
                return
            net.send(relay, nxt, payload, rec.flow_id, at_ms=depart)

        return handle

    def _dest_handler(self, dest: str):
        self.received[dest] = []

        def handle(net: Network, rec: EventRecord, cell: bytes) -> None:
            self.received[dest].append((net.now, rec.flow_id, from_cell(cell)))

        return handle

    def run_flow(self, circuit: Circuit, pattern, flow_id=None, message: bytes = b"x") -> str:
        """Schedule ``pattern`` = [(time_ms, cell_count), ...] on the circuit.

        Every hop of every cell carries the same ``flow_id`` (ground-truth
        lineage, never used by attack code).
        """
        if flow_id is None:
            flow_id = "flow%d" % self._next_flow
            self._next_flow += 1
        if circuit.destination not in self.received:
            self.net.on_deliver(circuit.destination, self._dest_handler(circuit.destination))
        cell = wrap(circuit, message, self.directory).cell()
        for t, count in pattern:
            for _ in range(int(count)):
                self.net.send(circuit.source, circuit.relays[0], cell, flow_id, at_ms=float(t))
        return flow_id


def flower_petal(target: str, others, visits: int, source: str = "atk", destination: str = "atk-d") -> Circuit:
    """Attacker circuit that re-enters ``target`` ``visits`` times."""
    others = list(others)
    if not others:
        raise ValueError("flower-petal circuit needs at least one other relay")
    path = []
    for i in range(visits):
        path += [target, others[i % len(others)]]
    return Circuit(source, tuple(path), destination)
