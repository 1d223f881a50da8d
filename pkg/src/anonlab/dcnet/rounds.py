"""One DC-net round: client/server ciphertexts, online-set agreement, combine."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field

import numpy as np

from .group import CLIENT_SERVER, Client, Group, Server, SlotSchedule

CLEAN = "clean"
JAMMED = "jammed"
SUPPRESSED = "suppressed"
CORRUPTED = "corrupted"
INCOMPLETE = "incomplete"


class IncompleteRoundError(RuntimeError):
    pass


class RoundAbortedError(RuntimeError):
    pass


@dataclass(frozen=True)
class ClientCiphertext:
    client: str
    round_id: int
    data: bytes
    commitments: dict = field(default_factory=dict, compare=False, repr=False)


@dataclass(frozen=True)
class ServerCiphertext:
    server: str
    round_id: int
    data: bytes
    online: frozenset


@dataclass
class RoundTranscript:
    round_id: int
    schedule: SlotSchedule
    online: frozenset
    client_ciphertexts: dict = field(default_factory=dict)
    server_ciphertexts: dict = field(default_factory=dict)
    output: bytes | None = None
    status: str = CLEAN
    participants: frozenset = frozenset()
    decisions: dict = field(default_factory=dict)
    accusations: list = field(default_factory=list)
    culprits: tuple = ()

    def slot_bytes(self, k: int) -> bytes:
        a, b = self.schedule.span(k)
        return self.output[a:b]

    def output_digest(self) -> str | None:
        return None if self.output is None else hashlib.sha256(self.output).hexdigest()

    def to_json(self) -> str:
        return json.dumps({
            "round": self.round_id,
            "online": sorted(self.online),
            "status": self.status,
            "output_digest": self.output_digest(),
        }, separators=(",", ":"))


def segment_commitment(round_id: int, client: str, peer: str, k: int, segment) -> bytes:
    h = hashlib.blake2b(digest_size=16, person=b"anonlab-pad")
    h.update(("%d|%s|%s|%d|" % (round_id, client, peer, k)).encode())
    h.update(segment)
    return h.digest()


def _commit_pad(round_id, client, peer, pad: np.ndarray, schedule: SlotSchedule) -> np.ndarray:
    out = np.empty((len(schedule.slots), 16), dtype=np.uint8)
    mv = memoryview(pad)
    for k, (a, s) in enumerate(zip(schedule.offsets(), schedule.slots)):
        out[k] = np.frombuffer(segment_commitment(round_id, client, peer, k, mv[a : a + s.length]), np.uint8)
    return out


def compose_slot(client: Client, schedule: SlotSchedule, allow: bool = True) -> bytes:
    """Bytes the owner XORs into its slot (all zero for cover)."""
    k = client.slot
    if k is None or k >= len(schedule.slots):
        return b""
    n = schedule.slots[k].length
    content = bytearray(n)
    if not allow:
        return bytes(content)
    body = schedule.body_length(k)
    queued = len(client.outbox)
    sending = queued > 0 and body > 0
    if sending:
        msg = client.outbox[0]
        if len(msg) > body:
            raise ValueError("message of %d bytes exceeds slot body %d" % (len(msg), body))
        content[: len(msg)] = msg
    if schedule.request_flags:
        remaining = queued - (1 if sending else 0)
        content[n - 1] = 1 if remaining > 0 else 0
    return bytes(content)


def _disruption(client: Client, schedule: SlotSchedule, round_id: int) -> np.ndarray | None:
    b = client.behavior
    if not b.disrupts(round_id) or b.disrupt_slot >= len(schedule.slots):
        return None
    a, e = schedule.span(b.disrupt_slot)
    noise = np.zeros(schedule.total_length, dtype=np.uint8)
    if b.disrupt_bits is None:
        seed = hashlib.sha256(("jam|%s|%d" % (client.id, round_id)).encode()).digest()
        noise[a:e] = np.frombuffer(hashlib.shake_256(seed).digest(e - a), np.uint8)
    else:
        for bit in b.disrupt_bits:
            noise[a + bit // 8] ^= 0x80 >> (bit % 8)
    return noise


def client_submit(client: Client, round_id: int, schedule: SlotSchedule, peers,
                  allow: bool = True, with_commitments: bool = True) -> ClientCiphertext:
    """XOR of the client's pads with every counterpart, plus its slot content.

    The byte count is the schedule length for every client, owner or not.
    """
    n = schedule.total_length
    data = np.zeros(n, dtype=np.uint8)
    commitments = {}
    for p in peers:
        pad = client.pad(p, round_id, n)
        data ^= pad
        if with_commitments:
            commitments[p] = _commit_pad(round_id, client.id, p, pad, schedule)
    content = compose_slot(client, schedule, allow)
    if content:
        a, e = schedule.span(client.slot)
        data[a:e] ^= np.frombuffer(content, np.uint8)
    client.sent[round_id] = content
    noise = _disruption(client, schedule, round_id)
    if noise is not None:
        data ^= noise
    return ClientCiphertext(client.id, round_id, data.tobytes(), commitments)


def server_commit(server: Server, round_id: int, length: int, online) -> ServerCiphertext:
    online = frozenset(online) if server.behavior.stale_online is None else server.behavior.stale_online
    ordered = sorted(online)
    server.pad_count += len(ordered)
    data = server.suite.xor_prg_array([server.seeds[c] for c in ordered], round_id, length)
    if server.behavior.disrupt:
        seed = hashlib.sha256(("jam|%s|%d" % (server.id, round_id)).encode()).digest()
        data = data ^ np.frombuffer(hashlib.shake_256(seed).digest(length), np.uint8)
    return ServerCiphertext(server.id, round_id, data.tobytes(), frozenset(online))


def finalize_online_set(server_views: dict, deadline_ms: float, received: dict | None = None,
                        crashed=()) -> frozenset:
    """Agree on the round's client set.

    ``server_views`` maps each server to {client: arrival_ms} for the
    ciphertexts it received.  Servers broadcast their on-time lists;
    ``received[s]`` names the servers whose lists reached s (default: all).
    Each server's view is the union of the lists it holds and the agreed
    set is the intersection of the views, which every server can compute
    once the views themselves are exchanged.
    """
    if crashed:
        raise RoundAbortedError("server(s) %s crashed during agreement" % sorted(crashed))
    lists = {s: frozenset(c for c, t in v.items() if t <= deadline_ms) for s, v in server_views.items()}
    if not lists:
        return frozenset()
    views = []
    for s in lists:
        got = set(lists) if received is None else set(received.get(s, ())) | {s}
        views.append(frozenset().union(*(lists[x] for x in got if x in lists)))
    return frozenset.intersection(*views)


def xor_all(chunks, n: int) -> bytes:
    acc = np.zeros(n, dtype=np.uint8)
    for c in chunks:
        acc ^= np.frombuffer(c, np.uint8)
    return acc.tobytes()


def combine(transcript: RoundTranscript, group: Group) -> bytes:
    """XOR every ciphertext in the round.

    Sets ``transcript.status`` to CORRUPTED when servers disagree on the
    online set; the (garbage) XOR is still returned for inspection but the
    caller must not release it.
    """
    n = transcript.schedule.total_length
    missing = [c for c in transcript.online if c not in transcript.client_ciphertexts]
    if missing:
        raise IncompleteRoundError("missing client ciphertexts: %s" % sorted(missing))
    chunks = [transcript.client_ciphertexts[c].data for c in sorted(transcript.online)]
    if group.topology == CLIENT_SERVER:
        absent = [s for s in group.servers if s not in transcript.server_ciphertexts]
        if absent:
            raise IncompleteRoundError("missing server ciphertexts: %s" % absent)
        sets = {sc.online for sc in transcript.server_ciphertexts.values()}
        if sets != {transcript.online}:
            transcript.status = CORRUPTED
        chunks += [transcript.server_ciphertexts[s].data for s in group.servers]
    out = xor_all(chunks, n)
    transcript.output = out
    return out


# --------------------------------------------------------------------------
# disruption detection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Accusation:
    round_id: int
    slot: int
    offsets: tuple  # global bit offsets the owner sent as 0 but decoded as 1
    n_flipped: int = 0
    signature: bytes = b""
    flipped: tuple = field(default=(), compare=False)  # every differing bit, kept by the owner

    MAX_OFFSETS = 16

    def body(self) -> bytes:
        return struct.pack(">IIH", self.round_id, self.slot, len(self.offsets)) + b"".join(
            struct.pack(">I", o) for o in self.offsets) + struct.pack(">I", self.n_flipped)

    def encode(self) -> bytes:
        return self.body() + struct.pack(">H", len(self.signature)) + self.signature

    @classmethod
    def decode(cls, raw: bytes) -> "Accusation":
        r, s, k = struct.unpack(">IIH", raw[:10])
        offs = tuple(struct.unpack(">I", raw[10 + 4 * i : 14 + 4 * i])[0] for i in range(k))
        p = 10 + 4 * k
        (nf,) = struct.unpack(">I", raw[p : p + 4])
        (sl,) = struct.unpack(">H", raw[p + 4 : p + 6])
        return cls(r, s, offs, nf, raw[p + 6 : p + 6 + sl])

    @classmethod
    def encoded_size(cls, sig_len: int = 64) -> int:
        return 10 + 4 * cls.MAX_OFFSETS + 4 + 2 + sig_len


def bits_of(data: bytes) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, np.uint8))


def detect_disruption(owner: Client, transcript: RoundTranscript) -> Accusation | None:
    """Compare the decoded slot with what the owner wrote."""
    k = owner.slot
    if transcript.output is None or k is None or k >= len(transcript.schedule.slots):
        return None
    sent = owner.sent.get(transcript.round_id)
    if sent is None:
        return None
    got = transcript.slot_bytes(k)
    if got == sent:
        return None
    a, _ = transcript.schedule.span(k)
    sb, gb = bits_of(sent), bits_of(got)
    diff = np.flatnonzero(sb != gb)
    flipped = tuple(int(a * 8 + i) for i in diff)
    up = tuple(int(a * 8 + i) for i in diff if sb[i] == 0)[: Accusation.MAX_OFFSETS]
    acc = Accusation(transcript.round_id, k, up, len(flipped), b"", flipped)
    sig = owner.suite.sign(owner.pseudonym.private_part, acc.body()) if owner.pseudonym else b""
    return Accusation(acc.round_id, k, up, len(flipped), sig, flipped)
