"""Critical times, good intervals and the four pin-down records.

Time indices run over 0..n.  Interval k is [k*alpha, (k+1)*alpha) for
k < K-1 and the last interval, k = K-1 with K = ceil(n/alpha), absorbs
everything up to and including n.  Increment g_i is the step w_{i-1} -> w_i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .exactgroup import (
    GroupElement,
    canonical_key,
    decode_varint,
    encode_varint,
    identity,
    key_to_element,
    multiply,
)
from .flags import (
    IndeterminateFlagError,
    OrientedFlat,
    PointChart,
    ProjectionError,
    TransversalityError,
)
from .liegeom import iota, radial, radial_norm, round_coords, round_lattice, weyl_sort, weyl_unsort
from .walk import BilateralPath, MuSpec, estimate_boundary, sample_path

RECORD_MAGIC = b"PDR\x01"


class DecodeError(ValueError):
    pass


@dataclass(frozen=True)
class PinParams:
    n: int
    alpha: int
    L: float
    M: float

    def __post_init__(self):
        if self.alpha < 1:
            raise ValueError("alpha must be >= 1")
        if self.L <= 0 or self.M <= 0:
            raise ValueError("L and M must be positive")
        if self.n < 2 * self.alpha:
            raise ValueError("need n >= 2 * alpha")

    @cached_property
    def n_intervals(self) -> int:
        return -(-self.n // self.alpha)

    def interval(self, k: int) -> range:
        if k == self.n_intervals - 1:
            return range(k * self.alpha, self.n + 1)
        return range(k * self.alpha, (k + 1) * self.alpha)

    def interval_of(self, i: int) -> int:
        return min(i // self.alpha, self.n_intervals - 1)

    def window(self, k: int) -> range:
        """Increment indices J_k = I_{k-1} u I_k u I_{k+1}, clipped to [1, n]."""
        lo = max(1, (k - 1) * self.alpha)
        hi = self.n if k + 1 >= self.n_intervals - 1 else (k + 2) * self.alpha - 1
        return range(lo, hi + 1)

    def error_constants(self, d: int) -> tuple[float, float]:
        return d + 1.0, 4.0 * self.M + 1.0


@dataclass
class CriticalData:
    critical_times: tuple
    crit_interval: tuple
    good_mask: tuple
    doubly_good: frozenset

    @property
    def bad(self) -> tuple:
        return tuple(k for k, good in enumerate(self.good_mask) if not good)


class PathGeometry:
    """A path together with its flat; memoises distances and projections."""

    def __init__(self, path: BilateralPath, flat: OrientedFlat):
        self.path = path
        self.flat = flat
        self._charts: dict = {}
        self._proj: dict = {}
        self._steps = [radial_norm(g) for g in path.mu.support]

    def chart(self, i: int) -> PointChart:
        c = self._charts.get(i)
        if c is None:
            c = self._charts[i] = PointChart(self.flat, self.path.position(i))
        return c

    def upper(self, i: int) -> float:
        return self.chart(i).upper_bound()

    def project(self, i: int) -> tuple[np.ndarray, float]:
        p = self._proj.get(i)
        if p is None:
            p = self._proj[i] = self.chart(i).project()
        return p

    def distance(self, i: int) -> float:
        return self.project(i)[1]

    def within(self, i: int, M: float) -> bool:
        if self.upper(i) <= M:
            return True
        return self.distance(i) <= M

    def step(self, i: int) -> float:
        """dist(w_{i-1}.o, w_i.o) = |r(g_i)|."""
        return self._steps[self.path.fwd_choice[i - 1]]


def critical_times(geom: PathGeometry, params: PinParams) -> CriticalData:
    K = params.n_intervals
    times, where = [], []
    has_crit = [False] * K
    for k in range(K):
        for i in params.interval(k):
            if geom.within(i, params.M):
                times.append(i)
                where.append(k)
                has_crit[k] = True
                break
    good = [False] * K
    for k in range(1, K - 1):
        if has_crit[k]:
            good[k] = all(geom.step(i + 1) <= params.L for i in params.interval(k))
    dg = frozenset(
        j for j in range(len(times) - 1)
        if where[j + 1] == where[j] + 1 and good[where[j]] and good[where[j + 1]]
    )
    return CriticalData(tuple(times), tuple(where), tuple(good), dg)


def _zigzag(x: int) -> int:
    return 2 * x if x >= 0 else -2 * x - 1


def _unzigzag(z: int) -> int:
    return z >> 1 if z % 2 == 0 else -((z + 1) >> 1)


@dataclass
class PinDownRecord:
    dim: int
    n: int
    alpha: int
    tau: tuple
    pi: tuple
    sigma: dict = field(default_factory=dict)
    beta: dict = field(default_factory=dict)

    def tau_bytes(self) -> bytes:
        out = bytearray(encode_varint(len(self.tau)))
        prev = 0
        for t in self.tau:
            out += encode_varint(t - prev)
            prev = t
        return bytes(out)

    def pi_bytes(self) -> bytes:
        return b"".join(encode_varint(_zigzag(x)) for x in self.pi)

    def sigma_bytes(self) -> bytes:
        out = bytearray(encode_varint(len(self.sigma)))
        for j in sorted(self.sigma):
            out += encode_varint(j)
            out += bytes(self.sigma[j])
        return bytes(out)

    def beta_bytes(self) -> bytes:
        out = bytearray(encode_varint(len(self.beta)))
        for k in sorted(self.beta):
            incs = self.beta[k]
            out += encode_varint(k)
            out += encode_varint(len(incs))
            for g in incs:
                out += canonical_key(g)
        return bytes(out)

    def to_bytes(self) -> bytes:
        head = RECORD_MAGIC + bytes([self.dim]) + encode_varint(self.n) + encode_varint(self.alpha)
        return head + self.tau_bytes() + self.pi_bytes() + self.sigma_bytes() + self.beta_bytes()

    @classmethod
    def from_bytes(cls, buf: bytes) -> "PinDownRecord":
        if buf[:4] != RECORD_MAGIC:
            raise DecodeError("bad record header")
        d = buf[4]
        pos = 5
        n, pos = decode_varint(buf, pos)
        alpha, pos = decode_varint(buf, pos)
        r, pos = decode_varint(buf, pos)
        tau, acc = [], 0
        for _ in range(r):
            delta, pos = decode_varint(buf, pos)
            acc += delta
            tau.append(acc)
        pi = []
        for _ in range(d - 1):
            z, pos = decode_varint(buf, pos)
            pi.append(_unzigzag(z))
        count, pos = decode_varint(buf, pos)
        sigma = {}
        for _ in range(count):
            j, pos = decode_varint(buf, pos)
            sigma[j] = tuple(buf[pos:pos + d])
            pos += d
        count, pos = decode_varint(buf, pos)
        beta = {}
        for _ in range(count):
            k, pos = decode_varint(buf, pos)
            length, pos = decode_varint(buf, pos)
            incs = []
            for _ in range(length):
                g, pos = key_to_element(buf, pos)
                incs.append(g)
            beta[k] = tuple(incs)
        return cls(d, n, alpha, tuple(tau), tuple(pi), sigma, beta)


def encode_record(geom: PathGeometry, crit: CriticalData, params: PinParams) -> PinDownRecord:
    path = geom.path
    d = path.dim
    times = crit.critical_times
    proj = {t: geom.project(t)[0] for t in times}
    total = np.zeros(d)
    sigma = {}
    for j in range(len(times) - 1):
        a, b = proj[times[j]], proj[times[j + 1]]
        if j in crit.doubly_good:
            total += a - b
        else:
            sigma[j] = weyl_sort(b - a)[0]
    beta = {k: tuple(path.increment(i) for i in params.window(k)) for k in crit.bad}
    return PinDownRecord(d, params.n, params.alpha, times, round_lattice(total), sigma, beta)


@dataclass
class DecodeResult:
    w_first: GroupElement
    pi_last_estimate: tuple
    tail: GroupElement
    error_radius: float
    v_hat: dict


def _doubly_good_from_record(record: PinDownRecord, params: PinParams) -> set:
    where = [params.interval_of(t) for t in record.tau]
    bad = set(record.beta)
    return {
        j for j in range(len(record.tau) - 1)
        if where[j + 1] == where[j] + 1 and where[j] not in bad and where[j + 1] not in bad
    }


def decode_pin(flat: OrientedFlat, record: PinDownRecord, params: PinParams) -> DecodeResult:
    """Rebuild w_{k_1}, w_{k_r}^{-1} w_n exactly and estimate floor(pi_F(w_{k_r}.o)).

    Uses only the flat and the record.
    """
    if (record.n, record.alpha) != (params.n, params.alpha) or record.dim != flat.dim:
        raise DecodeError("record does not match parameters")
    d = record.dim
    known: dict = {}
    for k, incs in record.beta.items():
        idx = params.window(k)
        if len(idx) != len(incs):
            raise DecodeError(f"beta window {k} has wrong length")
        for i, g in zip(idx, incs):
            known[i] = g

    def product(a: int, b: int) -> GroupElement:
        w = identity(d)
        for i in range(a + 1, b + 1):
            g = known.get(i)
            if g is None:
                raise DecodeError(f"increment {i} not covered by beta")
            w = multiply(w, g)
        return w

    tau = record.tau
    first = tau[0] if tau else 0
    last = tau[-1] if tau else 0
    w_first = product(0, first)
    tail = product(last, params.n)

    dg = _doubly_good_from_record(record, params)
    non_dg = [j for j in range(len(tau) - 1) if j not in dg]
    if set(non_dg) != set(record.sigma):
        raise DecodeError("sigma keys disagree with the doubly good set")
    pi_first = PointChart(flat, w_first).project()[0]
    est = iota(pi_first) - np.asarray(record.pi, dtype=float)
    v_hat = {}
    for j in non_dg:
        sorted_d = radial(product(tau[j], tau[j + 1]))
        v = weyl_unsort(record.sigma[j], sorted_d)
        v_hat[j] = v
        est = est + iota(v)
    c0, c1 = params.error_constants(d)
    return DecodeResult(w_first, round_coords(est), tail, c0 + c1 * len(non_dg), v_hat)


def candidate_bound(record: PinDownRecord, params: PinParams, error_radius: float,
                    ball_count: int) -> float:
    """log of the number of candidates for w_n left after decoding."""
    return (record.dim - 1) * math.log(2.0 * error_radius + 1.0) + math.log(ball_count)


def ball_count(mu: MuSpec, radius: float, max_layers: int = 60,
               max_elements: int = 400_000) -> int:
    """#{gamma : dist(o, gamma.o) <= radius}, by breadth-first search over words.

    Elements up to ``radius`` plus one maximal step are kept in the frontier;
    the search stops once a whole layer adds nothing inside the ball.
    """
    from .exactgroup import inverse

    gens = list(mu.support) + [inverse(g) for g in mu.support]
    slack = max(radial_norm(g) for g in gens)
    e = identity(mu.dim)
    seen = {e}
    frontier = [e]
    inside = 1
    for _ in range(max_layers):
        new_frontier, added = [], 0
        for w in frontier:
            for g in gens:
                h = multiply(w, g)
                if h in seen:
                    continue
                size = radial_norm(h)
                if size > radius + slack:
                    continue
                seen.add(h)
                new_frontier.append(h)
                if size <= radius:
                    added += 1
        inside += added
        frontier = new_frontier
        if not frontier or len(seen) > max_elements:
            break
    return inside


def true_pin_values(geom: PathGeometry, crit: CriticalData, params: PinParams) -> dict:
    """Ground truth the decoder is compared against."""
    path = geom.path
    times = crit.critical_times
    first = times[0] if times else 0
    last = times[-1] if times else 0
    from .exactgroup import inverse
    return {
        "w_first": path.position(first),
        "tail": multiply(inverse(path.position(last)), path.position(params.n)),
        "pi_last": round_lattice(geom.project(last)[0]),
        "v": {j: geom.project(times[j + 1])[0] - geom.project(times[j])[0]
              for j in range(len(times) - 1)},
    }


@dataclass
class PathOutcome:
    """Per-path, per-parameter summary that is cheap to ship between processes."""

    ok: bool
    error: str = ""
    rejected: int = 0
    tau: bytes = b""
    pi: bytes = b""
    sigma: bytes = b""
    beta: bytes = b""
    joint: bytes = b""
    n_interior: int = 0
    n_interior_bad: int = 0
    n_interior_nocrit: int = 0
    n_critical: int = 0
    exact_match: bool = False
    contained: bool = False
    error_radius: float = 0.0
    candidate_bound: float = 0.0
    max_v_error: float = 0.0
    max_dg_jump: float = 0.0
    telescoping_error: float = 0.0


def boundary_for(mu: MuSpec, seed: int, index: int, n: int, horizon_factor: int,
                 max_rejects: int = 10):
    """Sample the path and its flat, resampling on non-transverse boundary pairs."""
    rejected = 0
    horizon = max(horizon_factor * n, n)
    while True:
        sub = index + (rejected << 32)
        path = sample_path(mu, seed, horizon, horizon, path_index=sub)
        try:
            bd = estimate_boundary(path, n)
            return path, bd, rejected
        except TransversalityError:
            rejected += 1
            if rejected > max_rejects:
                raise


def analyze_path(mu: MuSpec, seed: int, index: int, n: int, horizon_factor: int,
                 params_list: Sequence[PinParams], balls: Sequence[int]) -> list[PathOutcome]:
    """Encode, decode and check one path under each parameter set."""
    try:
        path, bd, rejected = boundary_for(mu, seed, index, n, horizon_factor)
    except (IndeterminateFlagError, TransversalityError, ProjectionError) as exc:
        return [PathOutcome(False, f"{type(exc).__name__}: {exc}") for _ in params_list]
    geom = PathGeometry(path, bd.flat)
    out = []
    for params, balls_m in zip(params_list, balls):
        try:
            crit = critical_times(geom, params)
            rec = encode_record(geom, crit, params)
            dec = decode_pin(bd.flat, rec, params)
            truth = true_pin_values(geom, crit, params)
        except (DecodeError, ProjectionError) as exc:
            out.append(PathOutcome(False, f"{type(exc).__name__}: {exc}", rejected))
            continue
        diff = np.asarray(dec.pi_last_estimate, float) - np.asarray(truth["pi_last"], float)
        v_err = max((float(np.linalg.norm(dec.v_hat[j] - truth["v"][j])) for j in dec.v_hat),
                    default=0.0)
        times = crit.critical_times
        dg_jump = max((float(np.linalg.norm(truth["v"][j])) for j in crit.doubly_good),
                      default=0.0)
        tele = 0.0
        if times:
            lhs = geom.project(times[-1])[0] - geom.project(times[0])[0]
            rhs = sum(truth["v"].values(), np.zeros(path.dim))
            tele = float(np.linalg.norm(lhs - rhs))
        interior = range(1, params.n_intervals - 1)
        has_crit = set(crit.crit_interval)
        out.append(PathOutcome(
            ok=True,
            rejected=rejected,
            tau=rec.tau_bytes(),
            pi=rec.pi_bytes(),
            sigma=rec.sigma_bytes(),
            beta=rec.beta_bytes(),
            joint=rec.to_bytes(),
            n_interior=len(interior),
            n_interior_bad=sum(1 for k in interior if not crit.good_mask[k]),
            n_interior_nocrit=sum(1 for k in interior if k not in has_crit),
            n_critical=len(times),
            exact_match=(dec.w_first == truth["w_first"] and dec.tail == truth["tail"]),
            contained=bool(np.linalg.norm(diff) <= dec.error_radius),
            error_radius=dec.error_radius,
            candidate_bound=candidate_bound(rec, params, dec.error_radius, balls_m),
            max_v_error=v_err,
            max_dg_jump=dg_jump,
            telescoping_error=tele,
        ))
    return out


def window_min_distance(mu: MuSpec, seed: int, index: int, n: int, horizon_factor: int,
                        start: int, window: int) -> float:
    """min over i in [start, start+window) of dist(w_i.o, F(omega))."""
    path, bd, _ = boundary_for(mu, seed, index, max(n, start + window), horizon_factor)
    geom = PathGeometry(path, bd.flat)
    return min(geom.distance(i) for i in range(start, start + window))


@dataclass
class SweepResult:
    M: float | None
    curve: list
    epsilon: float
    window: int


def sweep_M(mu: MuSpec, seed: int, paths: int, n: int, horizon_factor: int,
            epsilon: float = 0.1, window: int = 50, grid: Sequence[float] = (1, 2, 4, 8, 16, 32, 64),
            start: int | None = None, workers: int = 1) -> SweepResult:
    """Smallest grid M with P(some i in the window has dist <= M) >= 1 - epsilon."""
    from .parallel import map_paths

    start = n // 2 if start is None else start
    mins = map_paths(window_min_distance, range(paths), workers,
                     mu, seed, n=n, horizon_factor=horizon_factor, start=start, window=window)
    mins = np.asarray(mins)
    curve = [(float(m), float(np.mean(mins <= m))) for m in grid]
    chosen = next((m for m, p in curve if p >= 1 - epsilon), None)
    return SweepResult(chosen, curve, epsilon, window)
