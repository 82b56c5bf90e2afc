"""Bilateral random walks driven by a finitely supported measure.

Increments are drawn by exact inverse-CDF sampling from a Philox stream
keyed by ``(seed, 2 * path_index + direction)``: increment ``g_i`` for
``i >= 1`` is the ``(i-1)``-th draw of the forward stream and ``g_{-j}`` for
``j >= 0`` is the ``j``-th draw of the backward stream.  A path is therefore
a pure function of (measure, seed, path index), whatever the horizons or the
worker that produced it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Sequence

import numpy as np

from .exactgroup import GroupElement, canonical_key, identity, inverse, multiply
from .flags import (
    DEFAULT_BITS,
    Flag,
    OrientedFlat,
    flag_distance,
    flat_from_flags,
    forward_flag,
)
from .liegeom import radial, radial_norm

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class MuSpec:
    support: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.support) != len(self.weights) or not self.support:
            raise ValueError("support and weights must be non-empty and of equal length")
        weights = tuple(Fraction(w) for w in self.weights)
        if any(w <= 0 for w in weights):
            raise ValueError("weights must be positive")
        if sum(weights) != 1:
            raise ValueError(f"weights sum to {sum(weights)}, not 1")
        keys = [canonical_key(g) for g in self.support]
        if len(set(keys)) != len(keys):
            raise ValueError("support elements must be distinct")
        dims = {g.dim for g in self.support}
        if len(dims) != 1:
            raise ValueError("support elements have different dimensions")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "support", tuple(self.support))

    @property
    def dim(self) -> int:
        return self.support[0].dim

    @cached_property
    def _cdf(self) -> tuple[int, tuple[int, ...]]:
        q = math.lcm(*(w.denominator for w in self.weights))
        acc, cuts = 0, []
        for w in self.weights:
            acc += w.numerator * (q // w.denominator)
            cuts.append(acc)
        return q, tuple(cuts)

    def draw_indices(self, raw: Sequence[int]) -> list[int]:
        """Map raw 64-bit words to support indices (exact inverse CDF)."""
        q, cuts = self._cdf
        out = []
        for word in raw:
            u = (int(word) * q) >> 64
            lo, hi = 0, len(cuts) - 1
            while lo < hi:
                mid = (lo + hi) // 2
                if u < cuts[mid]:
                    hi = mid
                else:
                    lo = mid + 1
            out.append(lo)
        return out

    def law(self) -> dict:
        """The measure itself, as canonical key -> weight (order of support ignored)."""
        return {canonical_key(g): w for g, w in zip(self.support, self.weights)}

    def entropy(self) -> float:
        return -sum(float(w) * math.log(w.numerator / w.denominator) for w in self.weights)

    def step_sizes(self) -> list[float]:
        return [radial_norm(g) for g in self.support]

    def step_size_quantile(self, q: float) -> float:
        """Smallest step size s with P(|r(g_1)| <= s) >= q."""
        pairs = sorted(zip(self.step_sizes(), self.weights))
        acc = Fraction(0)
        for s, w in pairs:
            acc += w
            if acc >= Fraction(q).limit_denominator(10**9):
                return s
        return pairs[-1][0]


def delta(g: GroupElement) -> MuSpec:
    return MuSpec((g,), (Fraction(1),))


def reflect(mu: MuSpec) -> MuSpec:
    """The reflected measure: mu_check(g) = mu(g^{-1})."""
    return MuSpec(tuple(inverse(g) for g in mu.support), mu.weights)


def _raw_stream(seed: int, path_index: int, direction: int, count: int) -> np.ndarray:
    if count == 0:
        return np.zeros(0, dtype=np.uint64)
    key = np.array([seed & _MASK64, (2 * path_index + direction) & _MASK64], dtype=np.uint64)
    return np.random.Philox(key=key).random_raw(count)


@dataclass
class BilateralPath:
    """Increments g_i, i in [-n_back+1, n_fwd], and exact positions w_i, i in [-n_back, n_fwd]."""

    mu: MuSpec
    seed: int
    path_index: int
    n_fwd: int
    n_back: int
    fwd_choice: list = field(repr=False)
    back_choice: list = field(repr=False)
    forward: list = field(repr=False)   # forward[i] = w_i, i >= 0
    backward: list = field(repr=False)  # backward[j] = w_{-j}, j >= 0

    def increment(self, i: int) -> GroupElement:
        if 1 <= i <= self.n_fwd:
            return self.mu.support[self.fwd_choice[i - 1]]
        if -self.n_back < i <= 0:
            return self.mu.support[self.back_choice[-i]]
        raise IndexError(f"increment {i} outside stored range")

    def position(self, i: int) -> GroupElement:
        if 0 <= i <= self.n_fwd:
            return self.forward[i]
        if -self.n_back <= i < 0:
            return self.backward[-i]
        raise IndexError(f"position {i} outside stored range")

    @property
    def dim(self) -> int:
        return self.mu.dim


def sample_path(mu: MuSpec, seed: int, n_fwd: int, n_back: int, path_index: int = 0) -> BilateralPath:
    if n_fwd < 0 or n_back < 0:
        raise ValueError("horizons must be non-negative")
    fwd = mu.draw_indices(_raw_stream(seed, path_index, 0, n_fwd))
    back = mu.draw_indices(_raw_stream(seed, path_index, 1, n_back))
    e = identity(mu.dim)
    forward = [e]
    for c in fwd:
        forward.append(multiply(forward[-1], mu.support[c]))
    inverses = [inverse(g) for g in mu.support]
    backward = [e]
    for c in back:
        backward.append(multiply(backward[-1], inverses[c]))
    return BilateralPath(mu, seed, path_index, n_fwd, n_back, fwd, back, forward, backward)


def shift_increments(path: BilateralPath, i: int) -> list[GroupElement]:
    """Increments of U^i(omega): (g_{i+1}, g_{i+2}, ..., g_{n_fwd})."""
    if not 0 <= i <= path.n_fwd:
        raise IndexError(f"shift {i} outside stored range")
    return [path.increment(j) for j in range(i + 1, path.n_fwd + 1)]


def shifted_position(path: BilateralPath, i: int, n: int) -> GroupElement:
    """(U^i omega)_n computed from shifted increments."""
    w = identity(path.dim)
    for g in shift_increments(path, i)[:n]:
        w = multiply(w, g)
    return w


@dataclass
class BoundaryData:
    z_fwd: Flag
    z_back: Flag
    flat: OrientedFlat
    horizon_gap: float


def working_bits(path: BilateralPath, n: int) -> int:
    """Flat precision needed to resolve positions w_0..w_n against it."""
    top = max(w.max_bits() for w in path.forward[:min(n, path.n_fwd) + 1])
    return max(DEFAULT_BITS, 2 * top + 128)


def estimate_boundary(path: BilateralPath, n: int | None = None) -> BoundaryData:
    """Finite-horizon boundary flags and the flat through them.

    ``n`` is the largest time whose positions will be compared against the
    flat; it fixes the working precision.
    """
    n = path.n_fwd if n is None else n
    bits = working_bits(path, n)
    z_fwd = forward_flag(path.forward[path.n_fwd], bits)
    z_back = forward_flag(path.backward[path.n_back], bits)
    half = forward_flag(path.forward[path.n_fwd // 2], bits)
    gap = flag_distance(z_fwd, half)
    flat = flat_from_flags(z_fwd, z_back)
    return BoundaryData(z_fwd, z_back, flat, gap)


def contracting_diagnostic(path: BilateralPath, grid: Sequence[int]) -> list[float]:
    """min_i r_i(w_n) - r_{i+1}(w_n) along a grid of times."""
    out = []
    for n in grid:
        r = radial(path.position(n))
        out.append(float(np.min(r[:-1] - r[1:])))
    return out
