"""Exact rational matrices as numpy object arrays of ``Fraction``.

numpy's ``@`` and block helpers work unchanged on object arrays, which keeps
the control path free of binary floating point.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Any, Sequence

import numpy as np


def parse_rational(x: Any) -> Fraction:
    """Accept ``int``, ``Fraction``, ``"p/q"`` strings, ``[num, den]`` pairs or floats (exact binary value)."""
    if isinstance(x, bool):
        raise TypeError("booleans are not rationals")
    if isinstance(x, (int, Fraction)):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    if isinstance(x, (list, tuple)) and len(x) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in x):
        if x[1] == 0:
            raise ZeroDivisionError("zero denominator in rational pair")
        return Fraction(x[0], x[1])
    if isinstance(x, float):
        return Fraction(x)
    raise TypeError(f"cannot read {x!r} as a rational")


def rational_pair(x: Fraction) -> list[int]:
    return [x.numerator, x.denominator]


def rational_matrix(rows: Any) -> np.ndarray:
    if isinstance(rows, np.ndarray) and rows.ndim == 2:
        rows = rows.tolist()
    out = np.array([[parse_rational(v) for v in row] for row in rows], dtype=object)
    if out.ndim != 2:
        raise ValueError("matrix rows must have equal length")
    return out


def rational_vector(values: Sequence[Any]) -> np.ndarray:
    return np.array([parse_rational(v) for v in values], dtype=object)


def integer_matrix(rows: Any) -> np.ndarray:
    """Object array of Python ints; rejects non-integral entries."""
    if isinstance(rows, np.ndarray):
        rows = rows.tolist()
    out = []
    for row in rows:
        new = []
        for v in row:
            f = parse_rational(v)
            if f.denominator != 1:
                raise ValueError(f"gain entry {f} is not an integer")
            new.append(int(f))
        out.append(new)
    arr = np.array(out, dtype=object)
    if arr.ndim != 2:
        raise ValueError("matrix rows must have equal length")
    return arr


def zeros(rows: int, cols: int) -> np.ndarray:
    return np.full((rows, cols), Fraction(0), dtype=object)


def identity(n: int) -> np.ndarray:
    out = zeros(n, n)
    for i in range(n):
        out[i, i] = Fraction(1)
    return out


def block_diag(blocks: Sequence[np.ndarray]) -> np.ndarray:
    rows = sum(b.shape[0] for b in blocks)
    cols = sum(b.shape[1] for b in blocks)
    out = zeros(rows, cols)
    r = c = 0
    for b in blocks:
        out[r:r + b.shape[0], c:c + b.shape[1]] = b
        r += b.shape[0]
        c += b.shape[1]
    return out


def scale(matrix: np.ndarray, factor: Fraction) -> np.ndarray:
    return np.vectorize(lambda v: Fraction(v) * factor, otypes=[object])(matrix)


def to_float(matrix: np.ndarray) -> np.ndarray:
    return np.array(matrix, dtype=float)


def denominators_lcm(matrix: np.ndarray) -> int:
    from math import lcm

    out = 1
    for v in np.asarray(matrix).ravel():
        out = lcm(out, Fraction(v).denominator)
    return out


def is_integral(matrix: np.ndarray) -> bool:
    return all(Fraction(v).denominator == 1 for v in np.asarray(matrix).ravel())


def exact_equal(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and all(Fraction(x) == Fraction(y) for x, y in zip(a.ravel(), b.ravel()))
