"""Cartan-level numerics for SL(d, R).

Radial parts are log singular values, sorted non-increasing and re-centred
to sum zero.  For exact group elements the partial sums
``r_1 + ... + r_k = log sigma_1(wedge^k g)`` are read from integer compound
matrices, so the smallest singular values stay accurate even when the
condition number is far beyond double precision.

Points of the Cartan subalgebra are plain ``numpy`` vectors; Weyl elements
are permutation tuples ``p`` with ``sorted_v[k] == v[p[k]]``; lattice points
are tuples of ints.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

from .exactgroup import (
    GroupElement,
    ScaledMatrix,
    DimensionError,
    compound,
    inverse,
    multiply,
    to_scaled,
)

LOG2 = math.log(2.0)
SVD_RANK_TOL = 1e-12


class PolarError(ValueError):
    pass


def top_singular_value(m: np.ndarray) -> float:
    if m.shape == (2, 2):
        a, b, c, d = float(m[0, 0]), float(m[0, 1]), float(m[1, 0]), float(m[1, 1])
        fro = a * a + b * b + c * c + d * d
        det = a * d - b * c
        disc = fro * fro - 4.0 * det * det
        return math.sqrt(0.5 * (fro + math.sqrt(max(disc, 0.0))))
    return float(np.linalg.svd(m, compute_uv=False)[0])


def _log_top_sv_int(rows) -> float:
    s = to_scaled(rows)
    return math.log(top_singular_value(s.mantissa)) + s.exponent * LOG2


def _finish(values: np.ndarray) -> np.ndarray:
    values = np.sort(values)[::-1]
    return values - values.mean()


def radial(g) -> np.ndarray:
    """Radial part r(g): log singular values, non-increasing, zero-sum.

    ``g`` may be a :class:`GroupElement` (exact route through compound
    matrices), a :class:`ScaledMatrix`, or a float array.
    """
    if isinstance(g, GroupElement):
        d = g.dim
        partial = [0.0]
        for k in range(1, d):
            partial.append(_log_top_sv_int(compound(g.rows, k)))
        partial.append(0.0)
        return _finish(np.diff(partial))
    if isinstance(g, ScaledMatrix):
        mant, e = g.mantissa, g.exponent
    else:
        mant, e = np.asarray(g, dtype=float), 0
    try:
        s = np.linalg.svd(mant, compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise PolarError(f"SVD failed: {exc}") from exc
    if s[-1] <= SVD_RANK_TOL * s[0]:
        raise PolarError("matrix is numerically singular")
    return _finish(np.log(s) + e * LOG2)


def radial_norm(g: GroupElement) -> float:
    """|r(g)|, with a scalar shortcut for small 2 x 2 elements."""
    if g.dim == 2 and g.max_bits() < 500:
        (a, b), (c, d) = g.rows
        fro = float(a * a + b * b + c * c + d * d)
        s1 = math.sqrt(0.5 * (fro + math.sqrt(max(fro * fro - 4.0, 0.0))))
        return math.sqrt(2.0) * math.log(s1)
    return float(np.linalg.norm(radial(g)))


def polar_decompose(g) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """g = k1 @ diag(exp(r)) @ k2 with k1, k2 orthogonal.

    Sign convention: each row of k2 has its first nonzero entry positive
    (the matching column of k1 absorbs the sign).  When all singular values
    coincide, k2 is the identity.  For a :class:`GroupElement` the radial
    part comes from the exact route, so it stays accurate however badly
    conditioned g is; the float path only rejects matrices whose condition
    number is not representable.
    """
    exact = None
    if isinstance(g, GroupElement):
        exact = radial(g)
        mant = to_scaled(g).mantissa
    else:
        mant = np.asarray(g, dtype=float)
    try:
        u, s, vt = np.linalg.svd(mant)
    except np.linalg.LinAlgError as exc:
        raise PolarError(f"SVD failed: {exc}") from exc
    if not s[-1] > 0 or not np.isfinite(s[0] / s[-1]):
        raise PolarError("near-singular input")
    if s[0] - s[-1] <= 1e-12 * s[0]:
        k1 = mant / s[0]
        k2 = np.eye(len(s))
    else:
        k1, k2 = u.copy(), vt.copy()
        for i in range(len(s)):
            row = k2[i]
            j = int(np.argmax(np.abs(row) > 1e-12))
            if row[j] < 0:
                k2[i] = -row
                k1[:, i] = -k1[:, i]
    if exact is not None:
        return k1, exact, k2
    r = np.log(s)
    return k1, r - r.mean(), k2


def generalized_distance(x: GroupElement, y: GroupElement) -> np.ndarray:
    """D(xK, yK) = r(x^{-1} y)."""
    if x.dim != y.dim:
        raise DimensionError("dimension mismatch")
    return radial(multiply(inverse(x), y))


def dist(x: GroupElement, y: GroupElement) -> float:
    return float(np.linalg.norm(generalized_distance(x, y)))


def weyl_sort(v) -> tuple[tuple[int, ...], np.ndarray]:
    """Stable non-increasing sort; returns (permutation, sorted vector)."""
    v = np.asarray(v, dtype=float)
    perm = tuple(int(i) for i in sorted(range(len(v)), key=lambda i: -v[i]))
    return perm, v[list(perm)]


def weyl_unsort(perm, sorted_values) -> np.ndarray:
    """Inverse of :func:`weyl_sort`: put sorted_values[k] back at perm[k]."""
    out = np.empty(len(perm))
    out[list(perm)] = sorted_values
    return out


@lru_cache(maxsize=None)
def helmert_basis(d: int) -> np.ndarray:
    """Rows form an orthonormal basis of the zero-sum hyperplane of R^d.

    Row k (0-based) is (1, ..., 1, -(k+1), 0, ..., 0) / sqrt((k+1)(k+2))
    with k+1 leading ones.  Fixed once; encoder and decoder share it.
    """
    h = np.zeros((d - 1, d))
    for k in range(1, d):
        h[k - 1, :k] = 1.0
        h[k - 1, k] = -k
        h[k - 1] /= math.sqrt(k * (k + 1))
    h.setflags(write=False)
    return h


def iota(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    return helmert_basis(len(v)) @ v


def iota_inv(y) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    return helmert_basis(len(y) + 1).T @ y


def round_coords(y) -> tuple[int, ...]:
    # nearest integer, half-integers toward -inf
    return tuple(int(math.ceil(float(t) - 0.5)) for t in y)


def round_lattice(v) -> tuple[int, ...]:
    return round_coords(iota(v))
