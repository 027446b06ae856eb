"""Composite encryption pipeline between entities and control units.

Signals travel in two layers:

* inner: each grid value ``v`` is mapped to ``Z_(2^n)`` and Paillier-encrypted
  together with its negation (a :class:`DualCiphertext`), so signed integer
  gains can be applied by exponentiation alone;
* outer: every Paillier ciphertext is wrapped as a single integer by textbook
  RSA, either under the key of the receiving control unit (measurements) or of
  the receiving entity (commands).

Outer ciphertexts carry their layer, party index and key modulus.  Stripping a
layer with the wrong key is therefore reported as :class:`LayerError` instead
of silently producing an unrelated integer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import IntEnum
from typing import Iterable, Sequence

from .crypto import (
    PaillierCiphertext,
    PaillierPrivateKey,
    PaillierPublicKey,
    RngLike,
    RsaKeypair,
    RsaPublicKey,
    as_rng,
    paillier_decrypt,
    paillier_encrypt,
    rsa_decrypt,
    rsa_encrypt,
)
from .errors import (
    GridOverflowError,
    InvalidCiphertextError,
    KeyMismatchError,
    LayerError,
    PlaintextRangeError,
)
from .fixedpoint import FixedPointValue, GridParams, from_integer, to_integer


class Layer(IntEnum):
    """Wire tag of a ciphertext message."""

    INNER = 0x50          # bare Paillier ciphertext
    TO_CONTROLLER = 0x43  # RSA under the receiving control unit's key
    TO_ENTITY = 0x45      # RSA under the receiving entity's key


@dataclass(frozen=True)
class DualCiphertext:
    """Paillier encryptions of ``I(v)`` and ``I(-v)``."""

    plus: PaillierCiphertext
    minus: PaillierCiphertext

    def select(self, sign: int) -> PaillierCiphertext:
        return self.plus if sign > 0 else self.minus


@dataclass(frozen=True)
class OuterCiphertext:
    value: int
    party: int
    layer: Layer
    modulus: int

    def __post_init__(self):
        if not 0 <= self.value < self.modulus:
            raise InvalidCiphertextError("outer ciphertext outside Z_(n_R)")

    def to_wire(self) -> bytes:
        return encode_frame(self.layer, self.party, self.value)


OuterPair = tuple[OuterCiphertext, OuterCiphertext]


# ---------------------------------------------------------------------------
# wire framing
# ---------------------------------------------------------------------------

def encode_frame(layer: Layer, party: int, value: int) -> bytes:
    """``tag (1 byte) | party (2 bytes) | length (4 bytes) | value``, all big-endian."""
    if not 0 <= party < 1 << 16:
        raise ValueError("party index must fit in two bytes")
    if value < 0:
        raise ValueError("frame values are non-negative integers")
    body = value.to_bytes(max(1, (value.bit_length() + 7) // 8), "big")
    return bytes([int(layer)]) + party.to_bytes(2, "big") + len(body).to_bytes(4, "big") + body


def decode_frame(frame: bytes) -> tuple[Layer, int, int]:
    if len(frame) < 7:
        raise ValueError("truncated frame header")
    layer = Layer(frame[0])
    party = int.from_bytes(frame[1:3], "big")
    length = int.from_bytes(frame[3:7], "big")
    body = frame[7:]
    if len(body) != length:
        raise ValueError(f"frame declares {length} value bytes, carries {len(body)}")
    return layer, party, int.from_bytes(body, "big")


def frame_hex(layer: Layer, party: int, value: int) -> str:
    return encode_frame(layer, party, value).hex()


def parse_frame_hex(line: str) -> tuple[Layer, int, int]:
    return decode_frame(bytes.fromhex(line.strip()))


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def _check_grid_fits(params: GridParams, pk: PaillierPublicKey) -> None:
    if params.modulus >= pk.n:
        raise PlaintextRangeError(f"grid image 2^{params.n} does not fit below the Paillier modulus ({pk.bits} bits)")


def eo(values: Iterable[FixedPointValue], pk: PaillierPublicKey, rng: RngLike = None) -> list[DualCiphertext]:
    """Inner layer: encrypt ``(v, -v)`` for each grid value."""
    rng = as_rng(rng)
    out = []
    for v in values:
        _check_grid_fits(v.params, pk)
        if v.raw == v.params.raw_min:
            raise GridOverflowError(f"{v} is the most negative grid point; its negation is not representable")
        out.append(DualCiphertext(
            paillier_encrypt(pk, to_integer(v), rng=rng),
            paillier_encrypt(pk, to_integer(-v), rng=rng),
        ))
    return out


def _wrap(c: PaillierCiphertext, pub: RsaPublicKey, party: int, layer: Layer) -> OuterCiphertext:
    if c.value >= pub.n:
        raise PlaintextRangeError("Paillier ciphertext does not fit below the RSA modulus (need n_R >= n_P^2)")
    return OuterCiphertext(rsa_encrypt(pub, c.value), party, layer, pub.n)


def _check_outer(c: OuterCiphertext, key: RsaKeypair, party: int, layer: Layer) -> None:
    if c.layer != layer:
        raise LayerError(f"expected a {layer.name} ciphertext, got {c.layer.name}")
    if c.party != party:
        raise LayerError(f"ciphertext addressed to party {c.party}, not {party}")
    if c.modulus != key.n:
        raise KeyMismatchError("outer ciphertext was not produced under this RSA key")


def strip_outer(value: int, key: RsaKeypair, pk: PaillierPublicKey) -> PaillierCiphertext:
    """RSA-decrypt ``value`` and check the result is a Paillier ciphertext for ``pk``.

    Garbage from a wrong key lands outside ``Z*_(n_P^2)`` with overwhelming
    probability (``n_R`` is much larger than ``n_P^2``) and is rejected here.
    """
    inner = rsa_decrypt(key, value)
    if inner >= pk.nsquare or math.gcd(inner, pk.n) != 1:
        raise InvalidCiphertextError("outer layer did not decrypt to a Paillier ciphertext")
    return PaillierCiphertext(inner, pk.n)


def ei(values: Iterable[FixedPointValue], pk: PaillierPublicKey, rsa_pub: RsaPublicKey, party: int,
       rng: RngLike = None) -> list[OuterPair]:
    """Entity-side measurement encryption: inner layer, then RSA under control unit ``party``."""
    return [
        (_wrap(d.plus, rsa_pub, party, Layer.TO_CONTROLLER), _wrap(d.minus, rsa_pub, party, Layer.TO_CONTROLLER))
        for d in eo(values, pk, rng)
    ]


def di(pairs: Iterable[OuterPair], rsa_key: RsaKeypair, party: int, pk: PaillierPublicKey) -> list[DualCiphertext]:
    """Control-unit side: strip the outer layer only."""
    out = []
    for plus, minus in pairs:
        _check_outer(plus, rsa_key, party, Layer.TO_CONTROLLER)
        _check_outer(minus, rsa_key, party, Layer.TO_CONTROLLER)
        out.append(DualCiphertext(strip_outer(plus.value, rsa_key, pk), strip_outer(minus.value, rsa_key, pk)))
    return out


def ebar(cts: Iterable[PaillierCiphertext], rsa_pub: RsaPublicKey, party: int) -> list[OuterCiphertext]:
    """Control-unit side: wrap command ciphertexts under entity ``party``'s key."""
    return [_wrap(c, rsa_pub, party, Layer.TO_ENTITY) for c in cts]


def do_(cts: Iterable[PaillierCiphertext], sk: PaillierPrivateKey, params: GridParams) -> list[FixedPointValue]:
    """Paillier-decrypt, reduce modulo ``2^n``, map back to the grid."""
    return [from_integer(paillier_decrypt(sk, c) % params.modulus, params) for c in cts]


def dbar(cts: Sequence[OuterCiphertext], rsa_key: RsaKeypair, party: int, sk: PaillierPrivateKey,
         params: GridParams) -> list[FixedPointValue]:
    """Entity side: full two-layer decryption of commands."""
    pk = sk.public_key
    inner = []
    for c in cts:
        _check_outer(c, rsa_key, party, Layer.TO_ENTITY)
        inner.append(strip_outer(c.value, rsa_key, pk))
    return do_(inner, sk, params)
