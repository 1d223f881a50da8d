"""Retroactive blame from pad-segment commitments and selective reveals.

An accusation names bits of its slot that the owner sent as 0 but that
decoded as 1.  Every party reveals its pad segments for that slot; client
reveals are checked against the commitments registered at submission, and
any client/server disagreement on a shared pad is settled by opening the
pair's seed against the seed commitment from setup.  With the verified pads
in hand, a party whose ciphertext bit differs from the XOR of its pads at an
accused offset is the disruptor.  Honest parties always reproduce their
ciphertext there, so they are never blamed.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..primitives import commit
from .group import CLIENT_SERVER, Group, Party
from .rounds import Accusation, RoundTranscript, segment_commitment

CULPRIT = "culprit"
INCONCLUSIVE = "inconclusive"


@dataclass
class BlameResult:
    verdict: str
    culprits: tuple = ()
    reasons: dict = field(default_factory=dict)


def reveal_segment(party: Party, peer: str, round_id: int, length: int, span) -> bytes | None:
    """Honest parties return their true pad segment; deviants refuse or lie."""
    b = getattr(party, "behavior", None)
    if b is not None and b.refuse_reveal:
        return None
    a, e = span
    seg = bytearray(party.suite.prg_array(party.seeds[peer], round_id, length)[a:e].tobytes())
    if b is not None and b.lie_in_reveal and seg:
        seg[0] ^= 0xFF
    return bytes(seg)


def open_seed(party: Party, peer: str) -> bytes | None:
    b = getattr(party, "behavior", None)
    if b is not None and b.refuse_reveal:
        return None
    return party.seeds[peer]


def verify_accusation(group: Group, transcript: RoundTranscript, acc: Accusation) -> bool:
    sched = transcript.schedule
    if transcript.output is None or acc.round_id != transcript.round_id:
        return False
    if not (0 <= acc.slot < len(sched.slots)) or not acc.offsets:
        return False
    a, e = sched.span(acc.slot)
    if any(not (a * 8 <= o < e * 8) for o in acc.offsets):
        return False
    body = Accusation(acc.round_id, acc.slot, acc.offsets, acc.n_flipped).body()
    return group.suite.verify(sched.slots[acc.slot].pseudonym, body, acc.signature)


def _bits_at(data: bytes, offsets, base_byte: int = 0) -> np.ndarray:
    return np.array([(data[o // 8 - base_byte] >> (7 - o % 8)) & 1 for o in offsets], dtype=np.uint8)


def blame(group: Group, transcript: RoundTranscript, acc: Accusation) -> BlameResult:
    sched = transcript.schedule
    r = transcript.round_id
    length = sched.total_length
    k = acc.slot
    span = sched.span(k)
    base = span[0]
    culprits: dict[str, str] = {}

    def accuse(party_id: str, why: str) -> None:
        culprits.setdefault(party_id, why)

    online = sorted(transcript.online)
    if group.topology == CLIENT_SERVER:
        pairs = [(c, s) for c in online for s in group.servers]
    else:
        pairs = [(a, b) for i, a in enumerate(online) for b in online[i + 1 :]]
    book = group.registry.rounds.get(r, {})

    def party(pid: str) -> Party:
        return group.clients[pid] if pid in group.clients else group.servers[pid]

    def committed(pid: str, peer: str, seg: bytes) -> bool:
        if pid not in group.clients:
            return True  # servers register no pad commitments
        want = book.get((pid, peer))
        return want is not None and segment_commitment(r, pid, peer, k, seg) == want[k].tobytes()

    verified: dict[frozenset, bytes] = {}
    for x, y in pairs:
        pair = frozenset((x, y))
        segs = {}
        for pid, peer in ((x, y), (y, x)):
            seg = reveal_segment(party(pid), peer, r, length, span)
            if seg is None:
                accuse(pid, "refused to reveal pad")
            elif not committed(pid, peer, seg):
                accuse(pid, "reveal does not open commitment")
                seg = None
            segs[pid] = seg
        if segs[x] is not None and segs[x] == segs[y]:
            verified[pair] = segs[x]
            continue
        # dispute or missing side: open the shared seed against setup commitments
        truth = None
        for pid, peer in ((x, y), (y, x)):
            seed = open_seed(party(pid), peer)
            if seed is None:
                accuse(pid, "refused to open seed")
            elif commit(b"seed", seed) != group.registry.seeds.get((pid, pair)):
                accuse(pid, "opened seed does not match setup commitment")
            elif truth is None:
                truth = group.suite.prg_array(seed, r, length)[span[0] : span[1]].tobytes()
        if truth is None:
            continue
        for pid in (x, y):
            if segs[pid] is not None and segs[pid] != truth:
                accuse(pid, "revealed a false pad segment")
        verified[pair] = truth

    offs = list(acc.offsets)

    def residual(pid: str, data: bytes, peers) -> np.ndarray:
        bits = _bits_at(data[span[0] : span[1]], offs, base)
        for peer in peers:
            seg = verified.get(frozenset((pid, peer)))
            if seg is None:
                return None
            bits ^= _bits_at(seg, offs, base)
        return bits

    for c in online:
        peers = list(group.servers) if group.topology == CLIENT_SERVER else [p for p in online if p != c]
        res = residual(c, transcript.client_ciphertexts[c].data, peers)
        if res is not None and res.any():
            accuse(c, "ciphertext disagrees with its pads at accused bits")
    if group.topology == CLIENT_SERVER:
        for s, sc in transcript.server_ciphertexts.items():
            res = residual(s, sc.data, online)
            if res is not None and res.any():
                accuse(s, "ciphertext disagrees with its pads at accused bits")

    if culprits:
        return BlameResult(CULPRIT, tuple(sorted(culprits)), culprits)
    return BlameResult(INCONCLUSIVE)
