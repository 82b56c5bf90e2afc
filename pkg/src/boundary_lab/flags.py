"""Full flags, oriented flats and closest-point projection onto flats.

Flags and flats carry *integer* column bases rounded to a working precision
of ``bits`` bits.  A walk position ``w`` with entries of B bits sits near a
flat only up to terms of relative size ``2**(-2B)``, so the flat must be known
to roughly twice that precision before distances to it mean anything.  All
contractions against group elements are done in exact integer arithmetic;
floating point only ever sees row-rescaled, well-conditioned matrices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import minimize

from .exactgroup import (
    GroupElement,
    ScaledMatrix,
    adjugate,
    compound,
    int_det,
    int_matmul,
    rows_to_scaled_rows,
    to_scaled,
)
from .liegeom import LOG2, iota, iota_inv, radial, top_singular_value

DEFAULT_BITS = 128
FLAG_GAP_TOL = 1e-10
TRANSVERSE_TOL = 1e-8
SIMPLEX_TOL = 1e-8
MAX_NM_ITER = 10_000
_FLOAT_INT_BITS = 62
_MAX_ORTHO_ITER = 64
_SMALL_RANGE = 30.0


class IndeterminateFlagError(ValueError):
    pass


class TransversalityError(ValueError):
    pass


class ProjectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class DyadicMatrix:
    """Integer matrix times ``2**exponent``; exact stand-in for float points."""

    rows: tuple
    exponent: int = 0

    @classmethod
    def from_float(cls, m) -> "DyadicMatrix":
        m = np.asarray(m, dtype=float)
        ratios = [[float(x).as_integer_ratio() for x in row] for row in m]
        shift = max(den.bit_length() - 1 for row in ratios for _, den in row)
        rows = tuple(tuple(num << (shift - (den.bit_length() - 1)) for num, den in row) for row in ratios)
        return cls(rows, -shift)

    def to_float(self) -> np.ndarray:
        s = to_scaled(self.rows)
        return np.ldexp(s.mantissa, s.exponent + self.exponent)


def _as_dyadic(x) -> DyadicMatrix:
    if isinstance(x, DyadicMatrix):
        return x
    if isinstance(x, GroupElement):
        return DyadicMatrix(x.rows, 0)
    if isinstance(x, ScaledMatrix):
        d = DyadicMatrix.from_float(x.mantissa)
        return DyadicMatrix(d.rows, d.exponent + x.exponent)
    return DyadicMatrix.from_float(x)


# --- exact vector helpers -------------------------------------------------

def _dot(u, v) -> int:
    return sum(a * b for a, b in zip(u, v))


def _round_vec(v: Sequence[int], bits: int) -> tuple:
    top = max(abs(x) for x in v).bit_length()
    shift = top - bits
    if shift <= 0:
        return tuple(v)
    half = 1 << (shift - 1)
    return tuple((x + half) >> shift for x in v)


def _orient(v: Sequence[int]) -> tuple:
    # first entry that is not rounding noise is made positive
    top = max(abs(x) for x in v)
    for x in v:
        if abs(x) * (1 << 30) > top:
            return tuple(v) if x > 0 else tuple(-y for y in v)
    return tuple(v)


def _gram_schmidt(cols: Sequence[Sequence[int]], pivot: bool = False) -> list:
    """Exact fraction-free Gram-Schmidt; returns mutually orthogonal int vectors.

    With ``pivot`` the next column is the one with the largest residual.
    """
    remaining = [tuple(c) for c in cols]
    out: list = []
    while remaining:
        resid = []
        for c in remaining:
            v = c
            for u in out:
                uu = _dot(u, u)
                vu = _dot(v, u)
                v = tuple(uu * a - vu * b for a, b in zip(v, u))
            resid.append(v)
        idx = 0
        if pivot:
            # every residual carries the same scale factor, so compare
            # |residual|^2 / |column|^2
            scores = [_log_ratio(_dot(v, v), _dot(c, c)) for v, c in zip(resid, remaining)]
            idx = int(np.argmax(scores))
        v = resid.pop(idx)
        remaining.pop(idx)
        if not any(v):
            raise IndeterminateFlagError("linearly dependent columns")
        # strip common power of two to keep integers small
        tz = min((x & -x).bit_length() - 1 for x in v if x)
        out.append(tuple(x >> tz for x in v))
    return out


def _log_ratio(num: int, den: int) -> float:
    if num == 0:
        return -math.inf
    return math.log(num) - math.log(den)


def _log_abs(x: int) -> float:
    return math.log(abs(x))


def _log_norm(v: Sequence[int]) -> float:
    return 0.5 * _log_abs(_dot(v, v))


def _cross(vectors: Sequence[Sequence[int]], d: int) -> tuple:
    """Generalised cross product of d-1 integer vectors in Z^d."""
    out = []
    for j in range(d):
        minor = [[vec[i] for vec in vectors] for i in range(d) if i != j]
        out.append((-1) ** j * int_det(minor))
    return tuple(out)


# --- flags ----------------------------------------------------------------

class Flag:
    """A full flag; V_i is spanned by the first i columns of ``frame``."""

    __slots__ = ("columns", "bits", "frame")

    def __init__(self, columns: Sequence[Sequence[int]], bits: int = DEFAULT_BITS):
        cols = _gram_schmidt(columns)
        self.columns = tuple(_orient(_round_vec(c, bits)) for c in cols)
        self.bits = bits
        frame = np.empty((len(cols), len(cols)))
        for j, c in enumerate(self.columns):
            s = to_scaled([c])
            v = s.mantissa[0]
            frame[:, j] = v / np.linalg.norm(v)
        self.frame = frame

    @property
    def dim(self) -> int:
        return len(self.columns)

    @classmethod
    def from_frame(cls, frame, bits: int = DEFAULT_BITS) -> "Flag":
        frame = np.asarray(frame, dtype=float)
        cols = []
        for j in range(frame.shape[1]):
            c = frame[:, j] / np.max(np.abs(frame[:, j]))
            cols.append(tuple(int(round(x * (1 << _FLOAT_INT_BITS))) for x in c))
        return cls(cols, bits)

    @classmethod
    def standard(cls, d: int) -> "Flag":
        return cls([tuple(int(i == j) for i in range(d)) for j in range(d)])

    @classmethod
    def opposite(cls, d: int) -> "Flag":
        return cls([tuple(int(i == d - 1 - j) for i in range(d)) for j in range(d)])

    def transform(self, h) -> "Flag":
        """The flag h.b (V_i mapped to h V_i)."""
        if isinstance(h, GroupElement):
            cols_t = int_matmul(h.rows, tuple(zip(*self.columns)))
            return Flag(list(zip(*cols_t)), self.bits)
        return Flag.from_frame(np.asarray(h, dtype=float) @ self.frame, self.bits)

    def __repr__(self):
        return f"Flag(frame={self.frame.tolist()})"


def _check_gaps(r: np.ndarray) -> float:
    gaps = r[:-1] - r[1:]
    g = float(np.min(gaps))
    if g < FLAG_GAP_TOL:
        raise IndeterminateFlagError(
            f"singular-value gap {g:.3g} below {FLAG_GAP_TOL}; horizon too short?")
    return g


def forward_flag(g, bits: int = DEFAULT_BITS) -> Flag:
    """Flag of left singular vectors of g, singular values decreasing.

    For exact elements the flag is refined by exact orthogonal iteration on
    g g^T until it is accurate to about ``2**-bits``.
    """
    if not isinstance(g, GroupElement):
        s = g if isinstance(g, ScaledMatrix) else ScaledMatrix(np.asarray(g, dtype=float), 0)
        r = radial(s)
        _check_gaps(r)
        u, _, _ = np.linalg.svd(s.mantissa)
        return Flag.from_frame(u, min(bits, 53))

    r = radial(g)
    gap = _check_gaps(r)
    gram = int_matmul(g.rows, tuple(zip(*g.rows)))
    target = (bits + 16) * LOG2
    if r[0] - r[-1] < _SMALL_RANGE:
        u, _, _ = np.linalg.svd(to_scaled(g).mantissa)
        cols = Flag.from_frame(u, _FLOAT_INT_BITS).columns
        have = 48 * LOG2
    else:
        cols = [_round_vec(c, bits + 32) for c in _gram_schmidt(list(zip(*gram)), pivot=True)]
        have = 2 * gap - 16 * LOG2
    iters = 0
    while have < target and iters < _MAX_ORTHO_ITER:
        prod = int_matmul(gram, tuple(zip(*cols)))
        cols = [_round_vec(c, bits + 32) for c in _gram_schmidt(list(zip(*prod)))]
        have += 2 * gap
        iters += 1
    return Flag(cols, bits)


def _projectors(frame: np.ndarray, i: int) -> np.ndarray:
    q = frame[:, :i]
    return q @ q.T


def flag_distance(a: Flag, b: Flag) -> float:
    """max_i of the operator-norm distance between projectors onto V_i."""
    if a.dim != b.dim:
        raise ValueError("dimension mismatch")
    worst = 0.0
    for i in range(1, a.dim):
        diff = _projectors(a.frame, i) - _projectors(b.frame, i)
        worst = max(worst, float(np.linalg.norm(diff, 2)))
    return min(worst, 1.0)


def is_transverse(a: Flag, b: Flag) -> bool:
    d = a.dim
    for i in range(1, d):
        m = np.hstack([a.frame[:, :i], b.frame[:, :d - i]])
        if abs(np.linalg.det(m)) <= TRANSVERSE_TOL:
            return False
    return True


# --- flats ----------------------------------------------------------------

class OrientedFlat:
    """The flat g_F A.o through transverse flags (b_plus forward, b_minus backward).

    Column i of ``basis`` spans E_i = V_i(b_plus) & W_{d-i+1}(b_minus);
    columns have unit length before a common rescaling to det +1.
    """

    def __init__(self, columns: Sequence[Sequence[int]], bits: int):
        d = len(columns)
        self.columns = tuple(tuple(c) for c in columns)
        self.bits = bits
        emat = tuple(zip(*self.columns))  # rows of E
        self.det_e = int_det(emat)
        if self.det_e == 0:
            raise TransversalityError("degenerate flat basis")
        self.adj_e = adjugate(emat)
        log_norms = np.array([_log_norm(c) for c in self.columns])
        log_det = _log_abs(self.det_e)
        log_s = -(log_det - log_norms.sum()) / d
        self.log_c = log_s - log_norms  # |c_i|, g_F = E diag(c)
        self.row_log = -self.log_c - log_det  # |row i of g_F^{-1}| scale on adj(E)
        sign = 1.0 if self.det_e > 0 else -1.0
        basis = np.empty((d, d))
        for j, c in enumerate(self.columns):
            v = to_scaled([c]).mantissa[0]
            basis[:, j] = v / np.linalg.norm(v)
        basis *= math.exp(log_s)
        basis[:, -1] *= sign
        self.basis = basis
        self.inverse_basis = np.linalg.inv(basis)
        self.signs = np.ones(d)
        self.signs[-1] = sign

    @property
    def dim(self) -> int:
        return len(self.columns)

    def point(self, v, bits: int | None = None) -> DyadicMatrix:
        """g_F exp(v) as an exact dyadic matrix, accurate to ``bits`` bits."""
        import mpmath

        v = np.asarray(v, dtype=float)
        bits = bits or (self.bits + int(2 * np.ptp(v) / LOG2) + 64)
        logs = self.log_c + v
        base = int(math.floor(min(logs) / LOG2))
        shift = bits - base
        with mpmath.workprec(bits + 64):
            scal = [int(mpmath.nint(mpmath.exp(mpmath.mpf(float(t))) * mpmath.mpf(2) ** shift))
                    for t in logs]
        scal = [s * int(sg) for s, sg in zip(scal, self.signs)]
        d = self.dim
        rows = tuple(tuple(self.columns[j][i] * scal[j] for j in range(d)) for i in range(d))
        return DyadicMatrix(rows, -shift)

    def chart(self, x) -> "PointChart":
        return PointChart(self, x)


def flat_from_flags(b_plus: Flag, b_minus: Flag) -> OrientedFlat:
    if not is_transverse(b_plus, b_minus):
        raise TransversalityError("flags are not transverse")
    d = b_plus.dim
    bits = min(b_plus.bits, b_minus.bits)
    cols = []
    for i in range(1, d + 1):
        constraints = list(b_plus.columns[i:]) + list(b_minus.columns[d - i + 1:])
        e = _cross(constraints, d)
        if _dot(e, b_plus.columns[i - 1]) < 0:
            e = tuple(-x for x in e)
        cols.append(_round_vec(e, bits))
    return OrientedFlat(cols, bits)


class PointChart:
    """Precomputed data for f(v) = dist(g_F exp(v) o, x o) at a fixed x.

    With Y = g_F^{-1} x, the partial sums r_1 + .. + r_k of r(exp(-v) Y) are
    log sigma_1 of wedge^k Y with rows rescaled by exp(-sum_{i in I} v_i).
    Rows of wedge^k Y are exact integers times known scalars.
    """

    def __init__(self, flat: OrientedFlat, x):
        xd = _as_dyadic(x)
        d = flat.dim
        y = int_matmul(flat.adj_e, xd.rows)
        self.dim = d
        self.levels = []
        for k in range(1, d):
            subsets = list(combinations(range(d), k))
            sel = np.zeros((len(subsets), d))
            for a, sub in enumerate(subsets):
                sel[a, list(sub)] = 1.0
            mant, exps = rows_to_scaled_rows(compound(y, k))
            logs = exps * LOG2 + sel @ flat.row_log + k * xd.exponent * LOG2
            self.levels.append((sel, logs, mant))
        sel, logs, mant = self.levels[0]
        v0 = logs + np.log(np.linalg.norm(mant, axis=1))
        self.start = v0 - v0.mean()

    def objective(self, v) -> float:
        partial = [0.0]
        for sel, logs, mant in self.levels:
            a = logs - sel @ v
            m = a.max()
            partial.append(m + math.log(top_singular_value(mant * np.exp(a - m)[:, None])))
        partial.append(0.0)
        r = np.diff(partial)
        return float(math.sqrt(float(r @ r)))

    def upper_bound(self) -> float:
        return self.objective(self.start)

    def project(self, start=None, step: float = 0.5) -> tuple[np.ndarray, float]:
        v0 = self.start if start is None else np.asarray(start, dtype=float)
        y0 = iota(v0)
        n = len(y0)
        simplex = np.vstack([y0] + [y0 + step * np.eye(n)[j] for j in range(n)])
        res = minimize(
            lambda y: self.objective(iota_inv(y)),
            y0,
            method="Nelder-Mead",
            options={
                "initial_simplex": simplex,
                "xatol": SIMPLEX_TOL,
                "fatol": 1e-10,
                "maxiter": MAX_NM_ITER,
                "maxfev": 4 * MAX_NM_ITER,
            },
        )
        if not res.success:
            raise ProjectionError(f"Nelder-Mead did not converge: {res.message}")
        return iota_inv(res.x), float(res.fun)


def project_to_flat(flat: OrientedFlat, x, start=None) -> tuple[np.ndarray, float]:
    """(pi_F(x), dist(x.o, F)) by convex minimisation over the Cartan subalgebra."""
    return PointChart(flat, x).project(start)


def dist_to_flat(flat: OrientedFlat, x) -> float:
    return project_to_flat(flat, x)[1]
