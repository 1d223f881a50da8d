"""Cascade shuffle with sender verification and release gating.

Each client wraps a padded, nonce-tagged message in m layers (first
shuffler outermost).  Shufflers peel one layer, permute with a seeded
Fisher-Yates, and pass the batch on.  The final plaintexts are released to
applications only after every client reports that its own item appears
exactly once.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .primitives import CipherSuite, DecryptionError, KeyPair, TestSuite

NONCE_LEN = 8
OK, DROPPED, DUPLICATED = "ok", "dropped", "duplicated"


class ShuffleError(RuntimeError):
    pass


class OversizeMessageError(ValueError):
    pass


@dataclass
class ShuffleConfig:
    shufflers: list  # ordered KeyPairs, index 0 peels first
    n: int
    slot_size: int = 64
    suite: CipherSuite = field(default_factory=TestSuite)

    def __post_init__(self):
        if len(self.shufflers) < 1:
            raise ValueError("need at least one shuffler")

    @property
    def m(self) -> int:
        return len(self.shufflers)


@dataclass(frozen=True)
class ShuffleBatch:
    items: tuple  # bytes, or None for an item a shuffler could not decrypt
    layers_remaining: int
    round_id: int = 0


@dataclass(frozen=True)
class Submission:
    client: str
    ciphertext: bytes
    receipt: bytes  # padded plaintext the client later looks for


@dataclass
class CascadeResult:
    outputs: list  # padded plaintexts in final order
    verdicts: dict  # client -> ok | dropped | duplicated
    released: list | None  # application messages, None if release withheld
    transcript: dict

    @property
    def aborted(self) -> bool:
        return self.released is None


def pad_message(message: bytes, slot_size: int, nonce: bytes) -> bytes:
    if len(message) > slot_size:
        raise OversizeMessageError("message of %d bytes exceeds slot size %d" % (len(message), slot_size))
    return struct.pack(">H", len(message)) + nonce + message + bytes(slot_size - len(message))


def unpad_message(padded: bytes) -> bytes:
    (n,) = struct.unpack(">H", padded[:2])
    return padded[2 + NONCE_LEN : 2 + NONCE_LEN + n]


def submit(client: str, message: bytes, config: ShuffleConfig, rng: np.random.Generator | None = None) -> Submission:
    """Wrap ``message`` under every shuffler key, last shuffler innermost."""
    rng = rng or np.random.default_rng()
    nonce = rng.bytes(NONCE_LEN)
    receipt = pad_message(message, config.slot_size, nonce)
    c = receipt
    for kp in reversed(config.shufflers):
        c = config.suite.encrypt(kp.public_part, c)
    return Submission(client, c, receipt)


def fisher_yates(n: int, rng: np.random.Generator) -> list[int]:
    perm = list(range(n))
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    return perm


def shuffle_step(shuffler: KeyPair, batch: ShuffleBatch, rng: np.random.Generator | None = None,
                 suite: CipherSuite | None = None, expected: int | None = None,
                 permutation=None, strict: bool = True) -> ShuffleBatch:
    """Peel one layer from every item and permute.

    ``permutation[i]`` is the input index placed at output position i.  In
    strict mode any undecryptable item raises; otherwise it becomes ``None``
    and travels on so the batch size stays constant.
    """
    suite = suite or TestSuite()
    if batch.layers_remaining < 1:
        raise ShuffleError("batch is already fully unwrapped")
    if expected is not None and len(batch.items) != expected:
        raise ShuffleError("expected %d items, got %d" % (expected, len(batch.items)))
    peeled, failed = [], 0
    for item in batch.items:
        if item is None:
            peeled.append(None)
            continue
        try:
            peeled.append(suite.decrypt(shuffler.private_part, item))
        except DecryptionError:
            failed += 1
            peeled.append(None)
    if failed and strict:
        raise DecryptionError("%d of %d items failed to decrypt" % (failed, len(batch.items)))
    if permutation is None:
        permutation = fisher_yates(len(peeled), rng or np.random.default_rng())
    if sorted(permutation) != list(range(len(peeled))):
        raise ValueError("not a permutation")
    return ShuffleBatch(tuple(peeled[i] for i in permutation), batch.layers_remaining - 1, batch.round_id)


def verify(receipt: bytes, outputs) -> str:
    count = sum(1 for o in outputs if o == receipt)
    if count == 1:
        return OK
    return DROPPED if count == 0 else DUPLICATED


# -- misbehaviour hooks: f(items, rng) -> items, applied after a shuffler's step


def drop_item(index: int) -> Callable:
    def tamper(items, rng):
        items = list(items)
        items[index] = None
        return items
    return tamper


def duplicate_item(index: int) -> Callable:
    """Copy item ``index`` over a neighbour so the batch size is unchanged."""
    def tamper(items, rng):
        items = list(items)
        items[(index + 1) % len(items)] = items[index]
        return items
    return tamper


def modify_item(index: int) -> Callable:
    def tamper(items, rng):
        items = list(items)
        b = bytearray(items[index])
        b[len(b) // 2] ^= 0x01
        items[index] = bytes(b)
        return items
    return tamper


def run_cascade(config: ShuffleConfig, submissions, rng: np.random.Generator | None = None,
                tamper: dict | None = None, permutations: dict | None = None,
                round_id: int = 0) -> CascadeResult:
    """Run every shuffler in order, then gate release on client verification.

    ``tamper`` maps shuffler index to a misbehaviour hook; ``permutations``
    optionally fixes a shuffler's secret permutation (for replay tests).
    """
    rng = rng or np.random.default_rng()
    submissions = list(submissions)
    if len(submissions) != config.n:
        raise ShuffleError("expected %d submissions, got %d" % (config.n, len(submissions)))
    tamper = tamper or {}
    permutations = permutations or {}
    inputs = tuple(s.ciphertext for s in submissions)
    batch = ShuffleBatch(inputs, config.m, round_id)
    for i, kp in enumerate(config.shufflers):
        batch = shuffle_step(kp, batch, rng, config.suite, expected=config.n,
                             permutation=permutations.get(i), strict=False)
        if i in tamper:
            batch = ShuffleBatch(tuple(tamper[i](batch.items, rng)), batch.layers_remaining, round_id)
    outputs = [o for o in batch.items if o is not None]
    verdicts = {s.client: verify(s.receipt, outputs) for s in submissions}
    released = None
    if all(v == OK for v in verdicts.values()) and len(outputs) == config.n:
        released = [unpad_message(o) for o in outputs]
    transcript = {"round_id": round_id, "inputs": list(inputs), "outputs": list(outputs)}
    return CascadeResult(outputs, verdicts, released, transcript)


def multiset(items) -> Counter:
    return Counter(items)
