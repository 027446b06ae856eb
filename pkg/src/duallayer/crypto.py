"""Arbitrary-precision Paillier and textbook RSA.

Both schemes are implemented directly on Python integers.  Every source of
randomness is an explicit ``random.Random`` (or a seed), so a run can be
replayed bit for bit.

The RSA layer is deliberately unpadded: encryption is the bare permutation
``m -> m^e mod n`` on ``Z_n``.  That makes it deterministic and therefore not
semantically secure (``0`` and ``1`` are fixed points, equal plaintexts give
equal ciphertexts).  The Paillier layer underneath is probabilistic.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .errors import (
    InvalidCiphertextError,
    KeyGenerationError,
    KeyMismatchError,
    PlaintextRangeError,
)

RngLike = Union[random.Random, int, str, None]

MILLER_RABIN_ROUNDS = 40
KEY_FILE_FORMAT = "duallayer-key"
KEY_FILE_VERSION = 1

_SMALL_PRIMES = (3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89, 97)


def as_rng(rng: RngLike) -> random.Random:
    """Return ``rng`` itself, or a ``random.Random`` seeded from it."""
    if isinstance(rng, random.Random):
        return rng
    return random.Random(rng)


# ---------------------------------------------------------------------------
# primes
# ---------------------------------------------------------------------------

def is_probable_prime(n: int, rng: RngLike = None, rounds: int = MILLER_RABIN_ROUNDS) -> bool:
    """Miller-Rabin test with ``rounds`` random witnesses drawn from ``rng``."""
    if n < 2:
        return False
    if n in (2, 3):
        return True
    if n % 2 == 0:
        return False
    for p in _SMALL_PRIMES:
        if n == p:
            return True
        if n % p == 0:
            return False
    rng = as_rng(rng)
    d, s = n - 1, 0
    while d % 2 == 0:
        d //= 2
        s += 1
    for _ in range(rounds):
        a = rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x in (1, n - 1):
            continue
        for _ in range(s - 1):
            x = pow(x, 2, n)
            if x == n - 1:
                break
        else:
            return False
    return True


def random_prime(bits: int, rng: RngLike = None) -> int:
    """Random prime of exactly ``bits`` bits with the two top bits set.

    Setting both top bits guarantees that the product of two such primes has
    exactly the sum of their bit lengths.
    """
    if bits < 3:
        raise KeyGenerationError(f"cannot draw a {bits}-bit prime with its top two bits set")
    rng = as_rng(rng)
    top = (1 << (bits - 1)) | (1 << (bits - 2))
    while True:
        candidate = rng.getrandbits(bits) | top | 1
        if is_probable_prime(candidate, rng):
            return candidate


def _prime_pair(bits: int, rng: random.Random, accept) -> tuple[int, int]:
    half = bits // 2
    # a fresh pair is drawn on rejection; small sizes have few candidates, so bound the search
    for _ in range(10_000):
        p = random_prime(half, rng)
        q = random_prime(bits - half, rng)
        if p != q and accept(p, q):
            return p, q
    raise KeyGenerationError(f"no admissible prime pair found for a {bits}-bit modulus")


# ---------------------------------------------------------------------------
# Paillier
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PaillierPublicKey:
    n: int
    g: int

    @property
    def nsquare(self) -> int:
        return self.n * self.n

    @property
    def bits(self) -> int:
        return self.n.bit_length()


@dataclass(frozen=True)
class PaillierPrivateKey:
    n: int
    lam: int
    mu: int

    @property
    def public_key(self) -> PaillierPublicKey:
        return PaillierPublicKey(self.n, self.n + 1)

    @property
    def nsquare(self) -> int:
        return self.n * self.n


@dataclass(frozen=True)
class PaillierCiphertext:
    """Element of ``Z*_{n^2}`` tagged with the modulus of the key that made it."""

    value: int
    n: int

    def __post_init__(self):
        if not 0 <= self.value < self.n * self.n:
            raise InvalidCiphertextError(f"ciphertext value outside Z_(n^2) for n={self.n}")


def paillier_from_primes(p: int, q: int) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    """Build a keypair from explicit primes (mainly a test hook)."""
    if p == q:
        raise KeyGenerationError("Paillier primes must be distinct")
    if not (is_probable_prime(p, 0) and is_probable_prime(q, 0)):
        raise KeyGenerationError("Paillier factors must be prime")
    n = p * q
    if math.gcd(n, (p - 1) * (q - 1)) != 1:
        raise KeyGenerationError("gcd(n, (p-1)(q-1)) must be 1")
    lam = math.lcm(p - 1, q - 1)
    # with g = n + 1, L(g^lam mod n^2) = lam mod n
    mu = pow(lam % n, -1, n)
    return PaillierPublicKey(n, n + 1), PaillierPrivateKey(n, lam, mu)


def paillier_keygen(bits: int, rng: RngLike = None) -> tuple[PaillierPublicKey, PaillierPrivateKey]:
    """Generate a Paillier keypair whose modulus has exactly ``bits`` bits."""
    if bits < 16:
        raise KeyGenerationError(f"Paillier modulus needs at least 16 bits, got {bits}")
    rng = as_rng(rng)
    p, q = _prime_pair(bits, rng, lambda p, q: math.gcd(p * q, (p - 1) * (q - 1)) == 1)
    return paillier_from_primes(p, q)


def random_unit(n: int, rng: RngLike = None) -> int:
    """Uniform draw from ``Z*_n``."""
    rng = as_rng(rng)
    while True:
        r = rng.randrange(1, n)
        if math.gcd(r, n) == 1:
            return r


def paillier_encrypt(pk: PaillierPublicKey, m: int, r: int | None = None, rng: RngLike = None) -> PaillierCiphertext:
    """Encrypt ``m`` in ``Z_n`` as ``g^m r^n mod n^2``.

    ``r`` defaults to a uniform unit drawn from ``rng``.
    """
    if not 0 <= m < pk.n:
        raise PlaintextRangeError(f"plaintext {m} outside Z_n for n={pk.n}")
    if r is None:
        r = random_unit(pk.n, rng)
    elif math.gcd(r, pk.n) != 1:
        raise ValueError("Paillier randomness must be coprime to the modulus")
    nsq = pk.nsquare
    gm = (1 + m * pk.n) % nsq if pk.g == pk.n + 1 else pow(pk.g, m, nsq)
    return PaillierCiphertext(gm * pow(r, pk.n, nsq) % nsq, pk.n)


def _check_key(n: int, c: PaillierCiphertext) -> None:
    if c.n != n:
        raise KeyMismatchError(f"ciphertext made under modulus {c.n}, key has modulus {n}")


def paillier_decrypt(sk: PaillierPrivateKey, c: PaillierCiphertext) -> int:
    _check_key(sk.n, c)
    if math.gcd(c.value, sk.n) != 1:
        raise InvalidCiphertextError("ciphertext is not a unit modulo n^2")
    u = pow(c.value, sk.lam, sk.nsquare)
    return (u - 1) // sk.n * sk.mu % sk.n


def paillier_add(pk: PaillierPublicKey, c1: PaillierCiphertext, c2: PaillierCiphertext) -> PaillierCiphertext:
    """Ciphertext of ``(m1 + m2) mod n``."""
    _check_key(pk.n, c1)
    _check_key(pk.n, c2)
    return PaillierCiphertext(c1.value * c2.value % pk.nsquare, pk.n)


def paillier_scale(pk: PaillierPublicKey, c: PaillierCiphertext, k: int) -> PaillierCiphertext:
    """Ciphertext of ``(k * m) mod n`` for ``k >= 0``; ``k = 0`` gives the value 1."""
    _check_key(pk.n, c)
    if k < 0:
        raise ValueError("scalar must be non-negative; use the dual ciphertext for signs")
    return PaillierCiphertext(pow(c.value, k, pk.nsquare), pk.n)


def paillier_rerandomize(pk: PaillierPublicKey, c: PaillierCiphertext, rng: RngLike = None) -> PaillierCiphertext:
    """Multiply by a fresh encryption of zero."""
    _check_key(pk.n, c)
    r = random_unit(pk.n, rng)
    return PaillierCiphertext(c.value * pow(r, pk.n, pk.nsquare) % pk.nsquare, pk.n)


# ---------------------------------------------------------------------------
# textbook RSA
# ---------------------------------------------------------------------------

DEFAULT_RSA_EXPONENT = 65537


@dataclass(frozen=True)
class RsaPublicKey:
    n: int
    e: int

    @property
    def bits(self) -> int:
        return self.n.bit_length()


@dataclass(frozen=True)
class RsaKeypair:
    n: int
    e: int
    d: int

    @property
    def public(self) -> RsaPublicKey:
        return RsaPublicKey(self.n, self.e)

    @property
    def bits(self) -> int:
        return self.n.bit_length()


def rsa_from_primes(p: int, q: int, e: int = DEFAULT_RSA_EXPONENT) -> RsaKeypair:
    if p == q:
        raise KeyGenerationError("RSA primes must be distinct")
    lam = math.lcm(p - 1, q - 1)
    if math.gcd(e, lam) != 1:
        raise KeyGenerationError(f"public exponent {e} is not invertible modulo lcm(p-1, q-1)")
    return RsaKeypair(p * q, e, pow(e, -1, lam))


def rsa_keygen(bits: int, rng: RngLike = None, e: int = DEFAULT_RSA_EXPONENT) -> RsaKeypair:
    if bits < 16:
        raise KeyGenerationError(f"RSA modulus needs at least 16 bits, got {bits}")
    rng = as_rng(rng)
    p, q = _prime_pair(bits, rng, lambda p, q: math.gcd(e, math.lcm(p - 1, q - 1)) == 1)
    return rsa_from_primes(p, q, e)


def rsa_encrypt(pub: RsaPublicKey | RsaKeypair, m: int) -> int:
    if not 0 <= m < pub.n:
        raise PlaintextRangeError(f"RSA plaintext outside Z_n for n={pub.n}")
    return pow(m, pub.e, pub.n)


def rsa_decrypt(key: RsaKeypair, c: int) -> int:
    if not 0 <= c < key.n:
        raise InvalidCiphertextError(f"RSA ciphertext outside Z_n for n={key.n}")
    return pow(c, key.d, key.n)


# ---------------------------------------------------------------------------
# key files
# ---------------------------------------------------------------------------

def _hex(v: int) -> str:
    return format(v, "x")


def key_to_dict(key, label: str | None = None) -> dict:
    """Serialise a key to a JSON-ready dict with hex big integers."""
    if isinstance(key, PaillierPrivateKey):
        body = {"kind": "paillier-private", "modulus": _hex(key.n), "lambda": _hex(key.lam), "mu": _hex(key.mu)}
    elif isinstance(key, PaillierPublicKey):
        body = {"kind": "paillier-public", "modulus": _hex(key.n), "generator": _hex(key.g)}
    elif isinstance(key, RsaKeypair):
        body = {"kind": "rsa-private", "modulus": _hex(key.n), "public_exponent": _hex(key.e), "private_exponent": _hex(key.d)}
    elif isinstance(key, RsaPublicKey):
        body = {"kind": "rsa-public", "modulus": _hex(key.n), "public_exponent": _hex(key.e)}
    else:
        raise TypeError(f"not a key: {type(key).__name__}")
    out = {"format": KEY_FILE_FORMAT, "version": KEY_FILE_VERSION, **body, "bits": key.n.bit_length()}
    if label is not None:
        out["label"] = label
    return out


def key_from_dict(data: dict):
    if data.get("format") != KEY_FILE_FORMAT or data.get("version") != KEY_FILE_VERSION:
        raise ValueError(f"unsupported key file format {data.get('format')!r} v{data.get('version')!r}")
    h = lambda field: int(data[field], 16)  # noqa: E731
    kind = data["kind"]
    if kind == "paillier-private":
        return PaillierPrivateKey(h("modulus"), h("lambda"), h("mu"))
    if kind == "paillier-public":
        return PaillierPublicKey(h("modulus"), h("generator"))
    if kind == "rsa-private":
        return RsaKeypair(h("modulus"), h("public_exponent"), h("private_exponent"))
    if kind == "rsa-public":
        return RsaPublicKey(h("modulus"), h("public_exponent"))
    raise ValueError(f"unknown key kind {kind!r}")


def save_key(key, path: str | Path, label: str | None = None) -> None:
    Path(path).write_text(json.dumps(key_to_dict(key, label), indent=2, sort_keys=True) + "\n")


def load_key(path: str | Path):
    return key_from_dict(json.loads(Path(path).read_text()))
