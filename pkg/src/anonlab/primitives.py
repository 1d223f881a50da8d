"""Pluggable cryptographic building blocks.

Two cipher suites share one interface:

* ``TestSuite`` -- fully deterministic, hash-based, and deliberately
  insecure.  Keys are derived from integer ids, so fixtures are bit-exact
  and replayable.  Never use it for anything but laboratory runs.
* ``RealSuite`` -- X25519 + HKDF + ChaCha20-Poly1305 sealed boxes,
  ChaCha20 keystream PRG, Ed25519 signatures (``cryptography`` package).

Key byte strings carry a one-byte suite tag so cross-suite use is caught.
"""

from __future__ import annotations

import hashlib
import hmac
import os
import struct
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

SEED_LEN = 32
_TEST_TAG = b"T"
_REAL_TAG = b"R"


class DecryptionError(Exception):
    """Wrong key, truncated, or tampered ciphertext."""


class SuiteMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class KeyPair:
    id: str
    public_part: bytes
    private_part: bytes = field(repr=False)


@dataclass(frozen=True)
class SharedSeed:
    bytes: bytes
    parties: frozenset

    def __post_init__(self):
        if len(self.bytes) != SEED_LEN:
            raise ValueError("seed must be %d bytes" % SEED_LEN)


def _round_tag_bytes(round_tag) -> bytes:
    if isinstance(round_tag, (bytes, bytearray)):
        return hashlib.sha256(b"anonlab/tag" + bytes(round_tag)).digest()[:8]
    return struct.pack("<Q", int(round_tag) & _kernels.MASK64)


def _xor(a: bytes, b: bytes) -> bytes:
    return (np.frombuffer(a, np.uint8) ^ np.frombuffer(b, np.uint8)).tobytes()


def _suite_of(key: bytes) -> bytes:
    if not key:
        raise SuiteMismatchError("empty key")
    return key[:1]


class CipherSuite:
    name = "abstract"
    tag = b"?"
    overhead = 0

    # -- keys ---------------------------------------------------------------
    def keygen(self, party_id) -> KeyPair:
        raise NotImplementedError

    def sign_keygen(self, party_id) -> KeyPair:
        raise NotImplementedError

    def _check(self, *keys: bytes) -> None:
        for k in keys:
            if _suite_of(k) != self.tag:
                raise SuiteMismatchError(
                    "key from suite %r used with %r" % (_suite_of(k), self.name))

    # -- public-key encryption ---------------------------------------------
    def encrypt(self, public_part: bytes, message: bytes) -> bytes:
        raise NotImplementedError

    def decrypt(self, private_part: bytes, ciphertext: bytes) -> bytes:
        raise NotImplementedError

    # -- seeds / PRG --------------------------------------------------------
    def derive_seed(self, my_private: bytes, their_public: bytes) -> bytes:
        raise NotImplementedError

    def prg(self, seed: bytes, round_tag, n: int) -> bytes:
        raise NotImplementedError

    def prg_array(self, seed: bytes, round_tag, n: int) -> np.ndarray:
        return np.frombuffer(self.prg(seed, round_tag, n), dtype=np.uint8)

    def xor_prg_array(self, seeds, round_tag, n: int) -> np.ndarray:
        """XOR of the expansions of several seeds (uint8 array of length n)."""
        out = np.zeros(n, dtype=np.uint8)
        for s in seeds:
            out ^= self.prg_array(s, round_tag, n)
        return out

    # -- signatures ---------------------------------------------------------
    def sign(self, private_part: bytes, message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, public_part: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError


class TestSuite(CipherSuite):
    """Deterministic hash-based suite for fixtures and replay.

    The private key of party ``i`` is ``H(master, i)``; the public key is a
    hash of the private key.  Seeds hash the sorted pair of public keys, so
    they are symmetric but not secret.  The PRG is splitmix64 in counter
    mode keyed by (seed, round tag), expanded by the numba kernel.
    """

    __test__ = False  # keep pytest from collecting this class
    name = "test"
    tag = _TEST_TAG
    overhead = 16

    def __init__(self, master: bytes = b"anonlab-test-suite"):
        self.master = master

    def keygen(self, party_id) -> KeyPair:
        priv = self.tag + hashlib.sha256(
            b"priv|" + self.master + b"|" + str(party_id).encode()).digest()
        return KeyPair(str(party_id), self._public_of(priv), priv)

    sign_keygen = keygen

    def _public_of(self, private_part: bytes) -> bytes:
        return self.tag + hashlib.sha256(b"pub|" + private_part[1:]).digest()

    def _stream(self, public_part: bytes, n: int) -> bytes:
        return hashlib.shake_256(b"enc|" + public_part).digest(n) if n else b""

    def encrypt(self, public_part: bytes, message: bytes) -> bytes:
        self._check(public_part)
        body = _xor(message, self._stream(public_part, len(message)))
        mac = hmac.new(public_part, body, hashlib.sha256).digest()[: self.overhead]
        return body + mac

    def decrypt(self, private_part: bytes, ciphertext: bytes) -> bytes:
        self._check(private_part)
        if len(ciphertext) < self.overhead:
            raise DecryptionError("ciphertext too short")
        pub = self._public_of(private_part)
        body, mac = ciphertext[: -self.overhead], ciphertext[-self.overhead:]
        want = hmac.new(pub, body, hashlib.sha256).digest()[: self.overhead]
        if not hmac.compare_digest(mac, want):
            raise DecryptionError("authentication failed")
        return _xor(body, self._stream(pub, len(body)))

    def derive_seed(self, my_private: bytes, their_public: bytes) -> bytes:
        self._check(my_private, their_public)
        a, b = sorted((self._public_of(my_private), their_public))
        return hashlib.sha256(b"seed|" + a + b).digest()

    def _base(self, seed: bytes, round_tag) -> int:
        k = struct.unpack("<4Q", seed)
        (tag,) = struct.unpack("<Q", _round_tag_bytes(round_tag))
        z = _kernels.mix64(tag)
        for w in reversed(k):
            z = _kernels.mix64(w ^ z)
        return z

    def prg_array(self, seed: bytes, round_tag, n: int) -> np.ndarray:
        if n < 0:
            raise ValueError("n must be >= 0")
        words = _kernels.prg_words(self._base(seed, round_tag), (n + 7) // 8)
        return words.view(np.uint8)[:n]

    def prg(self, seed: bytes, round_tag, n: int) -> bytes:
        return self.prg_array(seed, round_tag, n).tobytes()

    def xor_prg_array(self, seeds, round_tag, n: int) -> np.ndarray:
        bases = [self._base(s, round_tag) for s in seeds]
        return _kernels.xor_prg_words(bases, (n + 7) // 8).view(np.uint8)[:n]

    def sign(self, private_part: bytes, message: bytes) -> bytes:
        return hmac.new(self._public_of(private_part), b"sig|" + message, hashlib.sha256).digest()

    def verify(self, public_part: bytes, message: bytes, signature: bytes) -> bool:
        want = hmac.new(public_part, b"sig|" + message, hashlib.sha256).digest()
        return hmac.compare_digest(want, signature)


class RealSuite(CipherSuite):
    """Randomized suite backed by the ``cryptography`` package."""

    name = "real"
    tag = _REAL_TAG
    overhead = 32 + 16  # ephemeral X25519 public key + Poly1305 tag

    def __init__(self):
        from cryptography.hazmat.primitives.asymmetric import ed25519, x25519
        from cryptography.hazmat.primitives.ciphers import Cipher, algorithms
        from cryptography.hazmat.primitives.ciphers.aead import ChaCha20Poly1305
        from cryptography.hazmat.primitives.kdf.hkdf import HKDF
        from cryptography.hazmat.primitives import hashes, serialization

        self._x = x25519
        self._ed = ed25519
        self._aead = ChaCha20Poly1305
        self._cipher = Cipher
        self._chacha = algorithms.ChaCha20
        self._hkdf = HKDF
        self._hashes = hashes
        self._raw = (serialization.Encoding.Raw, serialization.PublicFormat.Raw)
        self._raw_priv = (serialization.Encoding.Raw, serialization.PrivateFormat.Raw,
                          serialization.NoEncryption())

    def _kdf(self, material: bytes, info: bytes) -> bytes:
        return self._hkdf(algorithm=self._hashes.SHA256(), length=32, salt=None,
                          info=info).derive(material)

    def _pair(self, priv, party_id) -> KeyPair:
        pub = priv.public_key().public_bytes(*self._raw)
        return KeyPair(str(party_id), self.tag + pub, self.tag + priv.private_bytes(*self._raw_priv))

    def keygen(self, party_id) -> KeyPair:
        return self._pair(self._x.X25519PrivateKey.generate(), party_id)

    def sign_keygen(self, party_id) -> KeyPair:
        return self._pair(self._ed.Ed25519PrivateKey.generate(), party_id)

    def encrypt(self, public_part: bytes, message: bytes) -> bytes:
        self._check(public_part)
        eph = self._x.X25519PrivateKey.generate()
        eph_pub = eph.public_key().public_bytes(*self._raw)
        shared = eph.exchange(self._x.X25519PublicKey.from_public_bytes(public_part[1:]))
        key = self._kdf(shared, b"seal|" + eph_pub + public_part[1:])
        return eph_pub + self._aead(key).encrypt(b"\0" * 12, message, None)

    def decrypt(self, private_part: bytes, ciphertext: bytes) -> bytes:
        from cryptography.exceptions import InvalidTag

        self._check(private_part)
        if len(ciphertext) < self.overhead:
            raise DecryptionError("ciphertext too short")
        priv = self._x.X25519PrivateKey.from_private_bytes(private_part[1:])
        eph_pub, body = ciphertext[:32], ciphertext[32:]
        try:
            shared = priv.exchange(self._x.X25519PublicKey.from_public_bytes(eph_pub))
        except ValueError as exc:
            raise DecryptionError(str(exc)) from None
        my_pub = priv.public_key().public_bytes(*self._raw)
        key = self._kdf(shared, b"seal|" + eph_pub + my_pub)
        try:
            return self._aead(key).decrypt(b"\0" * 12, body, None)
        except InvalidTag:
            raise DecryptionError("authentication failed") from None

    def derive_seed(self, my_private: bytes, their_public: bytes) -> bytes:
        self._check(my_private, their_public)
        priv = self._x.X25519PrivateKey.from_private_bytes(my_private[1:])
        shared = priv.exchange(self._x.X25519PublicKey.from_public_bytes(their_public[1:]))
        a, b = sorted((priv.public_key().public_bytes(*self._raw), their_public[1:]))
        return self._kdf(shared, b"seed|" + a + b)

    def prg(self, seed: bytes, round_tag, n: int) -> bytes:
        if n < 0:
            raise ValueError("n must be >= 0")
        if n == 0:
            return b""
        nonce = b"\0\0\0\0" + _round_tag_bytes(round_tag) + b"\0\0\0\0"
        enc = self._cipher(self._chacha(seed, nonce), mode=None).encryptor()
        return enc.update(b"\0" * n)

    def sign(self, private_part: bytes, message: bytes) -> bytes:
        return self._ed.Ed25519PrivateKey.from_private_bytes(private_part[1:]).sign(message)

    def verify(self, public_part: bytes, message: bytes, signature: bytes) -> bool:
        from cryptography.exceptions import InvalidSignature

        try:
            self._ed.Ed25519PublicKey.from_public_bytes(public_part[1:]).verify(signature, message)
        except (InvalidSignature, ValueError):
            return False
        return True


_SUITES = {"test": TestSuite, "real": RealSuite}


def get_suite(name: str = "test") -> CipherSuite:
    try:
        return _SUITES[name]()
    except KeyError:
        raise ValueError("unknown cipher suite %r" % name) from None


def suite_for_key(key: bytes) -> CipherSuite:
    tag = _suite_of(key)
    if tag == _TEST_TAG:
        return TestSuite()
    if tag == _REAL_TAG:
        return RealSuite()
    raise SuiteMismatchError("unrecognised key tag %r" % tag)


# --------------------------------------------------------------------------
# module-level operations
# --------------------------------------------------------------------------

def pke_encrypt(pk: bytes, m: bytes) -> bytes:
    if not m:
        raise ValueError("message must be non-empty")
    return suite_for_key(pk).encrypt(pk, m)


def pke_decrypt(sk: bytes, c: bytes) -> bytes:
    return suite_for_key(sk).decrypt(sk, c)


def derive_seed(my_private: bytes, their_public: bytes, parties=None) -> SharedSeed:
    if _suite_of(my_private) != _suite_of(their_public):
        raise SuiteMismatchError("cross-suite seed derivation")
    raw = suite_for_key(my_private).derive_seed(my_private, their_public)
    return SharedSeed(raw, frozenset(parties or ()))


def prg(seed: SharedSeed | bytes, round_tag, n: int, suite: CipherSuite | None = None) -> bytes:
    raw = seed.bytes if isinstance(seed, SharedSeed) else seed
    return (suite or TestSuite()).prg(raw, round_tag, n)


def commit(*parts: bytes) -> bytes:
    """Binding hash commitment (16 bytes) over length-framed parts."""
    h = hashlib.blake2b(digest_size=16, person=b"anonlab-commit")
    for p in parts:
        h.update(struct.pack("<I", len(p)))
        h.update(p)
    return h.digest()


def xor_bytes(a: bytes, b: bytes) -> bytes:
    if len(a) != len(b):
        raise ValueError("length mismatch")
    return (np.frombuffer(a, np.uint8) ^ np.frombuffer(b, np.uint8)).tobytes()


def random_bytes(n: int) -> bytes:
    return os.urandom(n)
