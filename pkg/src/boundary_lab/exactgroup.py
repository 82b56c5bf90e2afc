"""Exact integer matrices of determinant one, plus lossless float scaling.

Group elements are stored as tuples of Python ints so that products of
thousands of generators stay exact.  Anything numeric downstream goes
through :func:`to_scaled` (a float mantissa with a binary exponent) or
through :func:`compound`, which lets the Cartan-level code read off
singular values without ever squaring a condition number in floating point.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

__all__ = [
    "GroupElement",
    "ScaledMatrix",
    "DimensionError",
    "identity",
    "multiply",
    "inverse",
    "to_scaled",
    "canonical_key",
    "int_det",
    "int_matmul",
    "compound",
    "adjugate",
    "key_to_element",
    "rows_to_scaled_rows",
    "encode_varint",
    "decode_varint",
]


class DimensionError(ValueError):
    pass


class GroupElement:
    """A d x d integer matrix with determinant exactly +1."""

    __slots__ = ("rows", "_hash")

    def __init__(self, rows: Sequence[Sequence[int]], *, check: bool = True):
        rows = tuple(tuple(int(x) for x in r) for r in rows)
        d = len(rows)
        if check:
            if d < 2 or any(len(r) != d for r in rows):
                raise DimensionError(f"expected a square matrix of size >= 2, got {rows!r}")
            det = int_det(rows)
            if det != 1:
                raise ValueError(f"determinant must be 1, got {det}")
        self.rows = rows
        self._hash = None

    @classmethod
    def _trusted(cls, rows: tuple) -> "GroupElement":
        obj = cls.__new__(cls)
        obj.rows = rows
        obj._hash = None
        return obj

    @property
    def dim(self) -> int:
        return len(self.rows)

    def __eq__(self, other):
        if not isinstance(other, GroupElement):
            return NotImplemented
        return self.rows == other.rows

    def __hash__(self):
        if self._hash is None:
            self._hash = hash(self.rows)
        return self._hash

    def __matmul__(self, other: "GroupElement") -> "GroupElement":
        return multiply(self, other)

    def __repr__(self):
        return f"GroupElement({[list(r) for r in self.rows]})"

    def max_bits(self) -> int:
        return max(abs(x).bit_length() for r in self.rows for x in r)


@dataclass(frozen=True)
class ScaledMatrix:
    """``mantissa * 2**exponent`` with the largest |mantissa entry| in (1/2, 1]."""

    mantissa: np.ndarray
    exponent: int

    def to_float(self) -> np.ndarray:
        return np.ldexp(self.mantissa, self.exponent)

    def __matmul__(self, other: "ScaledMatrix") -> "ScaledMatrix":
        prod = self.mantissa @ other.mantissa
        m = float(np.max(np.abs(prod)))
        _, e = np.frexp(m)
        return ScaledMatrix(np.ldexp(prod, -int(e)), self.exponent + other.exponent + int(e))


def identity(d: int) -> GroupElement:
    return GroupElement._trusted(tuple(tuple(int(i == j) for j in range(d)) for i in range(d)))


def int_matmul(a: Sequence[Sequence[int]], b: Sequence[Sequence[int]]) -> tuple:
    cols = tuple(zip(*b))
    return tuple(tuple(sum(x * y for x, y in zip(row, col)) for col in cols) for row in a)


def multiply(a: GroupElement, b: GroupElement) -> GroupElement:
    if a.dim != b.dim:
        raise DimensionError(f"dimension mismatch: {a.dim} vs {b.dim}")
    ra, rb = a.rows, b.rows
    if len(ra) == 2:
        (p, q), (r, s) = ra
        (t, u), (v, w) = rb
        return GroupElement._trusted(((p * t + q * v, p * u + q * w), (r * t + s * v, r * u + s * w)))
    return GroupElement._trusted(int_matmul(ra, rb))


def int_det(m: Sequence[Sequence[int]]) -> int:
    """Bareiss fraction-free determinant (exact)."""
    n = len(m)
    if n == 1:
        return m[0][0]
    if n == 2:
        return m[0][0] * m[1][1] - m[0][1] * m[1][0]
    if n == 3:
        a, b, c = m
        return (a[0] * (b[1] * c[2] - b[2] * c[1])
                - a[1] * (b[0] * c[2] - b[2] * c[0])
                + a[2] * (b[0] * c[1] - b[1] * c[0]))
    a = [list(r) for r in m]
    sign, prev = 1, 1
    for k in range(n - 1):
        if a[k][k] == 0:
            for i in range(k + 1, n):
                if a[i][k] != 0:
                    a[k], a[i] = a[i], a[k]
                    sign = -sign
                    break
            else:
                return 0
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) // prev
        prev = a[k][k]
    return sign * a[-1][-1]


def _cofactor_matrix(m: Sequence[Sequence[int]]) -> list:
    n = len(m)
    cof = [[0] * n for _ in range(n)]
    for i in range(n):
        for j in range(n):
            minor = [[m[r][c] for c in range(n) if c != j] for r in range(n) if r != i]
            cof[i][j] = (-1) ** (i + j) * int_det(minor)
    return cof


def adjugate(m: Sequence[Sequence[int]]) -> tuple:
    n = len(m)
    if n == 2:
        (a, b), (c, d) = m
        return ((d, -b), (-c, a))
    cof = _cofactor_matrix(m)
    return tuple(tuple(cof[j][i] for j in range(n)) for i in range(n))


def inverse(g: GroupElement) -> GroupElement:
    # det = 1, so the adjugate is the inverse
    return GroupElement._trusted(adjugate(g.rows))


def compound(m: Sequence[Sequence[int]], k: int) -> tuple:
    """k-th compound matrix: all k x k minors, subsets in lexicographic order."""
    n = len(m)
    if k == 1:
        return tuple(tuple(r) for r in m)
    subsets = list(combinations(range(n), k))
    return tuple(
        tuple(int_det([[m[i][j] for j in cols] for i in rows]) for cols in subsets)
        for rows in subsets
    )


def _ceil_log2(m: int) -> int:
    if m <= 0:
        return 0
    return m.bit_length() - 1 if m & (m - 1) == 0 else m.bit_length()


def rows_to_scaled_rows(m: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    """Per-row binary scaling: ``m[i] = mant[i] * 2**exps[i]``."""
    mant = np.empty((len(m), len(m[0])))
    exps = np.empty(len(m), dtype=np.int64)
    for i, row in enumerate(m):
        e = _ceil_log2(max(abs(x) for x in row))
        scale = 1 << e
        exps[i] = e
        mant[i] = [x / scale for x in row]
    return mant, exps


def to_scaled(g) -> ScaledMatrix:
    rows = g.rows if isinstance(g, GroupElement) else g
    e = _ceil_log2(max(abs(x) for r in rows for x in r))
    scale = 1 << e
    # int / int true division is correctly rounded even for huge ints
    mant = np.array([[x / scale for x in r] for r in rows], dtype=float)
    return ScaledMatrix(mant, e)


def encode_varint(value: int) -> bytes:
    if value < 0:
        raise ValueError("varint must be non-negative")
    out = bytearray()
    while True:
        byte = value & 0x7F
        value >>= 7
        if value:
            out.append(byte | 0x80)
        else:
            out.append(byte)
            return bytes(out)


def decode_varint(buf: bytes, pos: int) -> tuple[int, int]:
    value, shift = 0, 0
    while True:
        b = buf[pos]
        pos += 1
        value |= (b & 0x7F) << shift
        if not b & 0x80:
            return value, pos
        shift += 7


def canonical_key(g: GroupElement) -> bytes:
    """dim byte, then row-major entries as varint-length-prefixed
    big-endian two's-complement byte strings."""
    out = bytearray([g.dim])
    for r in g.rows:
        for x in r:
            nbytes = (x.bit_length() + 8) // 8
            out += encode_varint(nbytes)
            out += x.to_bytes(nbytes, "big", signed=True)
    return bytes(out)


def key_to_element(key: bytes, pos: int = 0) -> tuple[GroupElement, int]:
    d = key[pos]
    pos += 1
    entries = []
    for _ in range(d * d):
        nbytes, pos = decode_varint(key, pos)
        entries.append(int.from_bytes(key[pos:pos + nbytes], "big", signed=True))
        pos += nbytes
    rows = tuple(tuple(entries[i * d:(i + 1) * d]) for i in range(d))
    return GroupElement._trusted(rows), pos
