"""Shannon entropy of records and of convolution powers.

Plug-in estimates come with a Miller-Madow correction and a jackknife
standard error.  Convolution powers are exact: with integer weights
``a_i / Q`` the n-step law has probabilities ``c_g / Q**n`` with integer
``c_g``, so tables never touch floating point until the final logarithm.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .exactgroup import canonical_key, identity, multiply
from .pindown import PathOutcome, PinParams
from .walk import MuSpec

DEFAULT_MAX_ATOMS = 10_000_000


class TableOverflowError(RuntimeError):
    pass


@dataclass
class CountTable:
    counts: Counter = field(default_factory=Counter)

    @classmethod
    def from_keys(cls, keys: Iterable[bytes]) -> "CountTable":
        return cls(Counter(keys))

    def add(self, key: bytes, count: int = 1) -> None:
        self.counts[key] += count

    def merge(self, other: "CountTable") -> "CountTable":
        return CountTable(self.counts + other.counts)

    @property
    def total(self) -> int:
        return sum(self.counts.values())

    def __len__(self):
        return len(self.counts)


@dataclass(frozen=True)
class EntropyEstimate:
    value: float
    miller_madow: float
    stderr: float
    N: int


def _entropy_from_counts(counts: Sequence[int], total: int) -> float:
    # grouping atoms by count keeps uniform tables exact: k atoms of mass 1/k give log k
    groups = Counter(counts)
    h = math.fsum((atoms * c / total) * math.log(total / c) for c, atoms in groups.items())
    return max(h, 0.0)


def plugin_entropy(table: CountTable) -> EntropyEstimate:
    n = table.total
    if n < 1:
        raise ValueError("empty count table")
    counts = list(table.counts.values())
    h = _entropy_from_counts(counts, n)
    k = len(counts)
    mm = h + (k - 1) / (2.0 * n)
    if n == 1:
        return EntropyEstimate(h, mm, 0.0, n)
    # leave-one-out values depend only on the count of the removed atom
    s = sum(c * math.log(c) for c in counts)
    m = n - 1
    by_count = Counter(counts)
    loo, weights = [], []
    for c, atoms in by_count.items():
        s_minus = s - c * math.log(c) + ((c - 1) * math.log(c - 1) if c > 1 else 0.0)
        loo.append(math.log(m) - s_minus / m)
        weights.append(c * atoms)
    loo = np.array(loo)
    weights = np.array(weights, dtype=float)
    mean = float(np.dot(weights, loo) / n)
    var = (n - 1) / n * float(np.dot(weights, (loo - mean) ** 2))
    return EntropyEstimate(h, mm, math.sqrt(var), n)


@dataclass
class ConvolutionTable:
    """mu^{*n} as integer numerators over ``denominator = Q**n``."""

    numerators: dict
    denominator: int
    step: int

    def probability(self, g) -> Fraction:
        return Fraction(self.numerators.get(g, 0), self.denominator)

    def keyed(self) -> dict:
        return {canonical_key(g): Fraction(c, self.denominator) for g, c in self.numerators.items()}

    def entropy(self) -> float:
        return _entropy_from_counts(list(self.numerators.values()), self.denominator)

    def is_normalized(self) -> bool:
        return sum(self.numerators.values()) == self.denominator


def _integer_weights(mu: MuSpec) -> tuple[list[int], int]:
    q = math.lcm(*(w.denominator for w in mu.weights))
    return [w.numerator * (q // w.denominator) for w in mu.weights], q


def convolution_tables(mu: MuSpec, n_max: int, max_atoms: int = DEFAULT_MAX_ATOMS):
    """Yield the exact tables for steps 0, 1, ..., n_max."""
    ints, q = _integer_weights(mu)
    table = {identity(mu.dim): 1}
    yield ConvolutionTable(table, 1, 0)
    for step in range(1, n_max + 1):
        nxt: dict = {}
        for w, c in table.items():
            for g, a in zip(mu.support, ints):
                h = multiply(w, g)
                nxt[h] = nxt.get(h, 0) + c * a
            if len(nxt) > max_atoms:
                raise TableOverflowError(
                    f"step {step} exceeds {max_atoms} atoms; use a sampling estimate instead")
        table = nxt
        yield ConvolutionTable(table, q ** step, step)


def exact_convolution(mu: MuSpec, n: int, max_atoms: int = DEFAULT_MAX_ATOMS) -> ConvolutionTable:
    for t in convolution_tables(mu, n, max_atoms):
        pass
    return t


def exact_step_entropy(mu: MuSpec, n: int, max_atoms: int = DEFAULT_MAX_ATOMS) -> EntropyEstimate:
    t = exact_convolution(mu, n, max_atoms)
    h = t.entropy()
    return EntropyEstimate(h, h, 0.0, 0)


@dataclass
class AvezResult:
    slope: float
    per_n: list  # (n, H(alpha_n), H(alpha_n)/n)


def avez_estimate(mu: MuSpec, n_grid: Sequence[int], max_atoms: int = DEFAULT_MAX_ATOMS) -> AvezResult:
    """Least-squares slope of H(alpha_n) against n over the grid."""
    grid = sorted(set(int(n) for n in n_grid))
    if not grid or grid[0] < 1:
        raise ValueError("n_grid must contain positive integers")
    values = {}
    for t in convolution_tables(mu, grid[-1], max_atoms):
        if t.step in grid:
            values[t.step] = t.entropy()
    xs = np.array(grid, dtype=float)
    ys = np.array([values[n] for n in grid])
    slope = float(np.polyfit(xs, ys, 1)[0]) if len(grid) > 1 else float(ys[0] / xs[0])
    return AvezResult(slope, [(n, values[n], values[n] / n) for n in grid])


def sampled_step_table(mu: MuSpec, seed: int, n: int, samples: int) -> CountTable:
    """Empirical law of w_n from ``samples`` independent paths."""
    from .walk import sample_path

    table = CountTable()
    for idx in range(samples):
        path = sample_path(mu, seed, n, 0, path_index=idx)
        table.add(canonical_key(path.forward[n]))
    return table


COMPONENTS = ("tau", "pi", "sigma", "beta", "joint")


@dataclass
class BudgetRow:
    params: PinParams
    estimates: dict        # component -> EntropyEstimate
    bounds: dict           # component -> closed-form bound (nats, not per step)
    f_bad: float
    eps_hat: float
    decoded: int
    status: str
    messages: list

    def rate(self, comp: str) -> float:
        return self.estimates[comp].value / self.params.n

    def stderr_rate(self, comp: str) -> float:
        return self.estimates[comp].stderr / self.params.n


def component_bounds(params: PinParams, d: int, h_mu: float, eps_hat: float) -> dict:
    n, a = params.n, params.alpha
    return {
        "tau": n / a * math.log(a),
        "pi": d * math.log(n * params.L),
        "sigma": n / a * math.log(math.factorial(d)),
        "beta": eps_hat * n + 2 * a * h_mu,
    }


def _verdict(value: float, limit: float, se: float) -> str:
    if value + 2 * se <= limit:
        return "pass"
    if value - 2 * se > limit:
        return "fail"
    return "inconclusive"


def budget_verify(mu: MuSpec, params: PinParams, outcomes: Sequence[PathOutcome]) -> BudgetRow:
    """Component and joint plug-in entropies of the pin-down records."""
    good = [o for o in outcomes if o.ok]
    if not good:
        raise ValueError("no successfully encoded paths")
    tables = {c: CountTable.from_keys(getattr(o, c) for o in good) for c in COMPONENTS}
    est = {c: plugin_entropy(t) for c, t in tables.items()}
    interior = sum(o.n_interior for o in good)
    f_bad = sum(o.n_interior_bad for o in good) / interior if interior else 1.0
    h_mu = mu.entropy()
    eps_hat = 3.0 * f_bad * h_mu
    bounds = component_bounds(params, mu.dim, h_mu, eps_hat)
    parts = sum(est[c].value for c in ("tau", "pi", "sigma", "beta"))
    parts_se = math.sqrt(sum(est[c].stderr ** 2 for c in ("tau", "pi", "sigma", "beta", "joint")))
    bounds["joint"] = parts
    verdicts, messages = [], []
    for c in ("tau", "pi", "sigma", "beta"):
        v = _verdict(est[c].value, bounds[c], est[c].stderr)
        verdicts.append(v)
        if v != "pass":
            messages.append(f"{c}: {est[c].value:.4g} vs bound {bounds[c]:.4g} ({v})")
    v = _verdict(est["joint"].value, parts, parts_se)
    verdicts.append(v)
    if v != "pass":
        messages.append(f"joint {est['joint'].value:.4g} vs sum of parts {parts:.4g} ({v})")
    if len(good) < 0.99 * len(outcomes):
        verdicts.append("fail")
        messages.append(f"only {len(good)} of {len(outcomes)} paths encoded")
    status = "fail" if "fail" in verdicts else ("inconclusive" if "inconclusive" in verdicts else "pass")
    return BudgetRow(params, est, bounds, f_bad, eps_hat, len(good), status, messages)


@dataclass
class RateRow:
    n: int
    mean_bound_rate: float
    stderr: float
    decode_success_frac: float
    containment_frac: float
    budget_rate: float | None = None


def pindown_rate(outcomes_by_n: dict, budget_by_n: dict | None = None) -> tuple[list[RateRow], str]:
    """Mean candidate_bound/n per horizon and whether it strictly decreases.

    ``budget_by_n`` optionally maps n to a joint budget rate; it is attached
    so that budget + pin-down can be read off as the overall upper bound.
    """
    rows = []
    status = "pass"
    for n in sorted(outcomes_by_n):
        outs = outcomes_by_n[n]
        ok = [o for o in outs if o.ok]
        frac = len(ok) / len(outs) if outs else 0.0
        if frac < 0.99:
            status = "fail"
        rates = np.array([o.candidate_bound / n for o in ok]) if ok else np.array([np.nan])
        se = float(rates.std(ddof=1) / math.sqrt(len(rates))) if len(rates) > 1 else 0.0
        contained = sum(1 for o in ok if o.contained and o.exact_match) / len(ok) if ok else 0.0
        rows.append(RateRow(n, float(rates.mean()), se, frac, contained,
                            None if budget_by_n is None else budget_by_n.get(n)))
    for a, b in zip(rows, rows[1:]):
        gap = a.mean_bound_rate - b.mean_bound_rate
        band = 2 * math.hypot(a.stderr, b.stderr)
        if gap <= 0:
            status = "fail"
        elif gap <= band and status == "pass":
            status = "inconclusive"
    return rows, status


def strictly_decreasing(values: Sequence[float], stderrs: Sequence[float]) -> str:
    """pass / fail / inconclusive for a sequence judged against 2-sigma bands.

    A sequence that is identically zero (nothing left to decrease) passes.
    """
    if all(abs(v) <= 1e-12 for v in values):
        return "pass"
    out = "pass"
    for (a, sa), (b, sb) in zip(zip(values, stderrs), zip(values[1:], stderrs[1:])):
        gap = a - b
        if gap <= 0:
            return "fail"
        if gap <= 2 * math.hypot(sa, sb):
            out = "inconclusive"
    return out
