"""Signed fixed-point grid and its two's-complement integer encoding.

A grid with word length ``n`` and ``m`` fractional bits holds the rationals
``v / 2^m`` for integers ``-2^(n-1) <= v <= 2^(n-1) - 1``.  Values are stored
as that scaled integer ``v`` (the *raw* value), so all arithmetic is exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational
from typing import Union

from .errors import GridOverflowError

RationalLike = Union[int, Fraction, float, str]


@dataclass(frozen=True)
class GridParams:
    n: int
    m: int

    def __post_init__(self):
        if not (isinstance(self.n, int) and isinstance(self.m, int)):
            raise TypeError("grid word length and fractional bits must be integers")
        if not self.n > self.m >= 1:
            raise ValueError(f"need n > m >= 1, got n={self.n}, m={self.m}")

    @property
    def modulus(self) -> int:
        """Size of the integer image, ``2^n``."""
        return 1 << self.n

    @property
    def resolution(self) -> Fraction:
        return Fraction(1, 1 << self.m)

    @property
    def raw_min(self) -> int:
        return -(1 << (self.n - 1))

    @property
    def raw_max(self) -> int:
        return (1 << (self.n - 1)) - 1

    @property
    def bound(self) -> Fraction:
        """Half-open range limit ``2^(n-m-1)``: the grid is ``[-bound, bound)``."""
        return Fraction(1 << (self.n - 1), 1 << self.m)

    def contains_raw(self, raw: int) -> bool:
        return self.raw_min <= raw <= self.raw_max


@dataclass(frozen=True)
class FixedPointValue:
    raw: int
    params: GridParams

    def __post_init__(self):
        if not self.params.contains_raw(self.raw):
            raise GridOverflowError(
                f"raw value {self.raw} outside [{self.params.raw_min}, {self.params.raw_max}] "
                f"for n={self.params.n}, m={self.params.m}"
            )

    @property
    def value(self) -> Fraction:
        return Fraction(self.raw, 1 << self.params.m)

    def __neg__(self) -> "FixedPointValue":
        return FixedPointValue(-self.raw, self.params)

    def __float__(self) -> float:
        return self.raw / (1 << self.params.m)

    def __str__(self) -> str:
        return str(self.value)


def to_fraction(x: RationalLike) -> Fraction:
    """Exact rational for ``x``.

    Floats convert to their exact binary value (``0.1`` is *not* ``1/10``);
    pass a string or ``Fraction`` when the decimal is what you mean.
    """
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, Rational)):
        return Fraction(x)
    if isinstance(x, float):
        if not math.isfinite(x):
            raise GridOverflowError(f"cannot quantize non-finite value {x}")
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x)
    raise TypeError(f"not a rational: {x!r}")


def quantize(x: RationalLike, params: GridParams) -> FixedPointValue:
    """Round ``x`` down to the grid (largest grid point ``<= x``)."""
    q = to_fraction(x)
    if not -params.bound <= q < params.bound:
        raise GridOverflowError(f"{q} outside [{-params.bound}, {params.bound}) for n={params.n}, m={params.m}")
    scaled = q * (1 << params.m)
    return FixedPointValue(scaled.numerator // scaled.denominator, params)


def from_raw(raw: int, params: GridParams) -> FixedPointValue:
    return FixedPointValue(raw, params)


def grid_value(x: RationalLike, params: GridParams) -> FixedPointValue:
    """Exact grid element for ``x``; raises if ``x`` is not already on the grid."""
    q = to_fraction(x) * (1 << params.m)
    if q.denominator != 1:
        raise ValueError(f"{x} is not a multiple of 2^-{params.m}")
    return FixedPointValue(q.numerator, params)


def to_integer(a: FixedPointValue) -> int:
    """``2^m a mod 2^n``."""
    return a.raw % a.params.modulus


def from_integer(z: int, params: GridParams) -> FixedPointValue:
    """Inverse of :func:`to_integer`."""
    if not 0 <= z < params.modulus:
        raise GridOverflowError(f"{z} outside Z_(2^{params.n})")
    if z >= 1 << (params.n - 1):
        z -= params.modulus
    return FixedPointValue(z, params)
