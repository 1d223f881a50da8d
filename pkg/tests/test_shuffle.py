import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from anonlab.primitives import DecryptionError, TestSuite
from anonlab.shuffle import (DROPPED, DUPLICATED, OK, OversizeMessageError, ShuffleBatch, ShuffleConfig,
                             ShuffleError, drop_item, duplicate_item, modify_item, multiset, pad_message,
                             run_cascade, shuffle_step, submit, unpad_message, verify)
from oracles import dcnet_ref as ref

FIXTURE = ("10c2c104bef3ab01c3a25310f4a2df14a335717c6e5eb827c49f7f1a25411f61534ed1aa445754d3b342d65b"
           "3b2d242f4c9ff76e2de525a439f6282de72c218e5d6e03357d7290acb805")


class FixedNonce:
    def __init__(self, nonce):
        self.nonce = nonce

    def bytes(self, n):
        return self.nonce[:n]


def config(m=3, n=4, slot=16):
    s = TestSuite()
    return ShuffleConfig([s.keygen("m%d" % i) for i in range(m)], n, slot)


def test_submission_matches_reference_fixture():
    sub = submit("c0", b"vote", config(), FixedNonce(bytes(range(8))))
    assert sub.ciphertext.hex() == FIXTURE
    assert sub.ciphertext == ref.shuffle_wrap(["m0", "m1", "m2"], b"vote", 16, bytes(range(8)))


def test_fixed_permutation_replay():
    cfg = config(m=1, n=3)
    subs = [submit("c%d" % i, bytes([65 + i]), cfg, FixedNonce(bytes([i]) * 8)) for i in range(3)]
    batch = ShuffleBatch(tuple(s.ciphertext for s in subs), 1)
    out = shuffle_step(cfg.shufflers[0], batch, permutation=[2, 0, 1])
    assert [unpad_message(x) for x in out.items] == [b"C", b"A", b"B"]


def test_wrong_order_fails():
    cfg = config(m=2, n=1)
    sub = submit("c", b"m", cfg)
    with pytest.raises(DecryptionError):
        shuffle_step(cfg.shufflers[1], ShuffleBatch((sub.ciphertext,), 2), permutation=[0])


def test_size_mismatch_and_oversize():
    cfg = config(n=2)
    with pytest.raises(ShuffleError):
        run_cascade(cfg, [submit("c", b"m", cfg)])
    with pytest.raises(OversizeMessageError):
        pad_message(b"x" * 17, 16, bytes(8))


@given(st.lists(st.binary(min_size=0, max_size=16), min_size=1, max_size=8), st.integers(1, 4), st.integers(0, 2**32))
def test_honest_cascade_preserves_multiset(msgs, m, seed):
    rng = np.random.default_rng(seed)
    cfg = config(m=m, n=len(msgs))
    subs = [submit("c%d" % i, x, cfg, rng) for i, x in enumerate(msgs)]
    res = run_cascade(cfg, subs, rng)
    assert multiset(res.outputs) == multiset(s.receipt for s in subs)
    assert sorted(res.released) == sorted(msgs)
    assert all(v == OK for v in res.verdicts.values())


@pytest.mark.parametrize("hook,verdict", [(drop_item(1), DROPPED), (duplicate_item(1), DROPPED),
                                          (modify_item(1), DROPPED)])
def test_tampering_withholds_release(hook, verdict):
    rng = np.random.default_rng(3)
    cfg = config(m=3, n=5)
    subs = [submit("c%d" % i, b"msg%d" % i, cfg, rng) for i in range(5)]
    res = run_cascade(cfg, subs, rng, tamper={1: hook})
    assert res.aborted
    assert verdict in res.verdicts.values()


def test_duplicate_is_reported_by_the_copied_owner():
    rng = np.random.default_rng(5)
    cfg = config(m=1, n=3)
    subs = [submit("c%d" % i, b"x%d" % i, cfg, rng) for i in range(3)]
    res = run_cascade(cfg, subs, rng, tamper={0: duplicate_item(0)}, permutations={0: [0, 1, 2]})
    assert res.verdicts == {"c0": DUPLICATED, "c1": DROPPED, "c2": OK}


def test_verify_verdicts():
    assert verify(b"a", [b"a", b"b"]) == OK
    assert verify(b"a", [b"b"]) == DROPPED
    assert verify(b"a", [b"a", b"a"]) == DUPLICATED


@pytest.mark.parametrize("n", range(1, 6))
def test_one_honest_shuffler_realizes_every_bijection(n):
    # Adversarial shufflers are fixed to identity; the honest one's
    # permutation ranges over all n! choices and each must yield a distinct
    # input-to-output mapping, so outputs carry no information about inputs.
    cfg = config(m=3, n=n)
    subs = [submit("c%d" % i, bytes([i]), cfg, FixedNonce(bytes([i]) * 8)) for i in range(n)]
    ident = list(range(n))
    mappings = set()
    for perm in itertools.permutations(range(n)):
        res = run_cascade(cfg, subs, permutations={0: ident, 1: list(perm), 2: ident})
        pos = tuple(res.outputs.index(s.receipt) for s in subs)
        mappings.add(pos)
    assert len(mappings) == len(list(itertools.permutations(range(n))))
