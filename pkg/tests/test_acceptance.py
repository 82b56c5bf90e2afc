"""Acceptance criteria, one test per criterion.

Each test records a PASS/FAIL line (printed and shown in the pytest terminal
summary) before asserting, so the line appears whether or not it passes.
"""

import math
import time

import numpy as np
import pytest

from boundary_lab.entropy import (
    CountTable,
    avez_estimate,
    budget_verify,
    component_bounds,
    exact_step_entropy,
    plugin_entropy,
    sampled_step_table,
    strictly_decreasing,
)
from boundary_lab.exactgroup import DimensionError, int_matmul, multiply
from boundary_lab.flags import (
    DyadicMatrix,
    Flag,
    PointChart,
    dist_to_flat,
    flat_from_flags,
    forward_flag,
)
from boundary_lab.harness.cli import main
from boundary_lab.harness.config import bundled_configs, load_config
from boundary_lab.harness.experiments import cached_ball_count, convergence_path
from boundary_lab.liegeom import dist, generalized_distance, iota_inv, polar_decompose, radial
from boundary_lab.parallel import map_paths
from boundary_lab.pindown import PinParams, analyze_path, sweep_M

from _support import PINGPONG, SL3, as_float, random_word
from conftest import ACCEPTANCE_LINES

SEED = 20261015


def report(num: int, ok: bool, text: str):
    line = f"{'PASS' if ok else 'FAIL'} criterion {num}: {text}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# ---------------------------------------------------------------- 1


def test_criterion_01_polar_radial():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED)
    worst, bad_shape, count = 0.0, 0, 0
    for path in bundled_configs():
        mu = load_config(path).mu
        for _ in range(1000):
            w = random_word(mu, rng, int(rng.integers(0, 31)))
            g = as_float(w)
            k1, r, k2 = polar_decompose(w)
            rec = k1 @ np.diag(np.exp(r)) @ k2
            worst = max(worst, float(np.linalg.norm(rec - g) / np.linalg.norm(g)))
            rr = radial(w)
            if np.any(np.diff(rr) > 1e-10) or abs(rr.sum()) > 1e-9:
                bad_shape += 1
            count += 1
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-9 and bad_shape == 0 and elapsed < 10
    report(1, ok, f"{count} words over {len(bundled_configs())} configs, max relative "
                  f"reconstruction error {worst:.2e} (<= 1e-9), {bad_shape} unsorted/non-zero-sum "
                  f"radials, {elapsed:.1f}s (< 10s)")


# ---------------------------------------------------------------- 2


def test_criterion_02_distance_invariance_and_lipschitz():
    t0 = time.perf_counter()
    rng = np.random.default_rng(SEED + 2)
    inv_err, lip_slack, triples = 0.0, -np.inf, 0
    for mu in (PINGPONG, SL3):
        for _ in range(5000):
            g, g1, g2, h = (random_word(mu, rng, int(rng.integers(0, 16))) for _ in range(4))
            d12 = generalized_distance(g1, g2)
            inv_err = max(inv_err, float(np.linalg.norm(
                generalized_distance(multiply(g, g1), multiply(g, g2)) - d12)))
            n12 = float(np.linalg.norm(d12))
            a = np.linalg.norm(generalized_distance(g1, h) - generalized_distance(g2, h)) - n12
            b = np.linalg.norm(generalized_distance(h, g1) - generalized_distance(h, g2)) - n12
            lip_slack = max(lip_slack, float(a), float(b))
            triples += 1
    elapsed = time.perf_counter() - t0
    ok = inv_err <= 1e-6 and lip_slack <= 1e-6 and elapsed < 30
    report(2, ok, f"{triples} triples: G-invariance error {inv_err:.2e} (<= 1e-6), worst Lipschitz "
                  f"excess {lip_slack:.2e} (<= 1e-6), {elapsed:.1f}s (< 30s)")


# ---------------------------------------------------------------- 3


def test_criterion_03_phi_anchor_and_equivariance():
    anchor = max(float(np.max(np.abs(np.abs(flat_from_flags(Flag.standard(d), Flag.opposite(d)).basis)
                                     - np.eye(d)))) for d in (2, 3, 4))
    rng = np.random.default_rng(SEED + 3)
    worst = 0.0
    for trial in range(100):
        mu = PINGPONG if trial % 2 == 0 else SL3
        bp = forward_flag(random_word(mu, rng, 40))
        bm = forward_flag(random_word(mu, rng, 40))
        h = random_word(mu, rng, int(rng.integers(1, 8)))
        flat = flat_from_flags(bp, bm)
        moved = flat_from_flags(bp.transform(h), bm.transform(h))
        v = rng.normal(size=mu.dim) * 2
        v -= v.mean()
        p = flat.point(v)
        worst = max(worst, dist_to_flat(moved, DyadicMatrix(int_matmul(h.rows, p.rows), p.exponent)))
    ok = anchor <= 1e-12 and worst <= 1e-6
    report(3, ok, f"Phi(standard, opposite) deviates from identity flat by {anchor:.1e}; "
                  f"equivariance over 100 h: max dist_to_flat {worst:.2e} (<= 1e-6)")


# ---------------------------------------------------------------- 4


def test_criterion_04_projection_properties():
    rng = np.random.default_rng(SEED + 4)
    conv, lip, restart = -np.inf, -np.inf, 0.0
    pairs = 0
    for mu in (PINGPONG, SL3):
        flat = flat_from_flags(forward_flag(random_word(mu, rng, 50)),
                               forward_flag(random_word(mu, rng, 50)))
        for _ in range(500):
            x, y = random_word(mu, rng, 15), random_word(mu, rng, 15)
            cx, cy = PointChart(flat, x), PointChart(flat, y)
            px, _ = cx.project()
            py, _ = cy.project()
            lip = max(lip, float(np.linalg.norm(px - py)) - dist(x, y))
            u, w = rng.normal(size=(2, mu.dim)) * 3
            u -= u.mean()
            w -= w.mean()
            conv = max(conv, cx.objective((u + w) / 2) - (cx.objective(u) + cx.objective(w)) / 2)
            again, _ = cx.project(start=px + iota_inv(rng.normal(size=mu.dim - 1) * 2))
            restart = max(restart, float(np.linalg.norm(again - px)))
            pairs += 1
    ok = conv <= 1e-8 and lip <= 1e-6 and restart <= 1e-6
    report(4, ok, f"{pairs} pairs: midpoint convexity excess {conv:.2e} (<= 1e-8), 1-Lipschitz "
                  f"excess {lip:.2e} (<= 1e-6), restart disagreement {restart:.2e} (<= 1e-6)")


# ---------------------------------------------------------------- 5


def test_criterion_05_boundary_convergence():
    t0 = time.perf_counter()
    res = map_paths(convergence_path, range(1000), 1, PINGPONG, SEED, checkpoints=(10, 100), factor=8)
    data = np.array(res)
    med10, med100 = np.nanmedian(data[:, 0]), np.nanmedian(data[:, 1])
    elapsed = time.perf_counter() - t0
    ratio = med10 / med100 if med100 > 0 else math.inf
    ok = ratio >= 10 and elapsed < 120
    report(5, ok, f"median flag distance to horizon 8n: n=10 {med10:.3e}, n=100 {med100:.3e}, "
                  f"factor {ratio:.3g} (>= 10), {elapsed:.1f}s (< 120s)")


# ---------------------------------------------------------------- shared pin-down runs


@pytest.fixture(scope="module")
def swept():
    t0 = time.perf_counter()
    res = sweep_M(PINGPONG, SEED, 400, 400, 8, epsilon=0.1, window=50)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="module")
def pin_runs(swept):
    M = swept[0].M or 1.0
    L = PINGPONG.step_size_quantile(0.99)
    balls = cached_ball_count(PINGPONG, 2 * M)
    t0 = time.perf_counter()
    by_alpha = {a: PinParams(400, a, L, M) for a in (20, 40, 80)}
    per_path = map_paths(analyze_path, range(1000), 1, PINGPONG, SEED, n=400, horizon_factor=8,
                         params_list=list(by_alpha.values()), balls=[balls] * 3)
    at_400 = {a: [p[k] for p in per_path] for k, a in enumerate(by_alpha)}
    t400 = time.perf_counter() - t0
    by_n = {400: at_400[40]}
    for n in (100, 200):
        p = PinParams(n, 40, L, M)
        by_n[n] = [o[0] for o in map_paths(analyze_path, range(1000), 1, PINGPONG, SEED, n=n,
                                           horizon_factor=8, params_list=[p], balls=[balls])]
    return {"M": M, "L": L, "balls": balls, "params": by_alpha, "at_400": at_400, "by_n": by_n,
            "t400": t400, "total": time.perf_counter() - t0}


def test_criterion_06_critical_times(swept):
    res, t_sweep = swept
    t0 = time.perf_counter()
    M = res.M
    hit = dict(res.curve).get(M, 0.0) if M is not None else 0.0
    L = PINGPONG.step_size_quantile(0.99)
    outs = map_paths(analyze_path, range(200), 1, PINGPONG, SEED + 6, n=400, horizon_factor=8,
                     params_list=[PinParams(400, 50, L, M or 1.0)], balls=[1])
    outs = [o[0] for o in outs]
    interior = sum(o.n_interior for o in outs)
    bad = sum(o.n_interior_bad for o in outs) / interior
    nocrit = sum(o.n_interior_nocrit for o in outs) / interior
    elapsed = t_sweep + time.perf_counter() - t0
    ok = M is not None and hit >= 0.9 and bad < 0.1 and elapsed < 120
    report(6, ok, f"sweep M = {M} with window-50 hit probability {hit:.3f} (>= 0.9); alpha=50, "
                  f"L=p99={L:.4f}: interior bad fraction {bad:.4f} (< 0.1), lacking critical time "
                  f"{nocrit:.4f}; {elapsed:.1f}s (< 120s)")


def test_criterion_07_pindown_containment(pin_runs):
    outs = pin_runs["at_400"][40]
    ok_paths = [o for o in outs if o.ok]
    exact = sum(o.exact_match for o in ok_paths)
    contained = sum(o.contained for o in ok_paths)
    n = len(outs)
    ok = len(ok_paths) == n and exact == n and contained == n and pin_runs["t400"] < 600
    report(7, ok, f"{n} paths, n=400, alpha=40, M={pin_runs['M']}: exact w_k1 and tail in {exact}/{n}, "
                  f"floor(pi_F(w_kr)) within error_radius in {contained}/{n}; "
                  f"{pin_runs['t400']:.1f}s for all three alphas (< 600s)")


def test_criterion_08_rate_decrease(pin_runs):
    by_n = pin_runs["by_n"]
    ns = sorted(by_n)
    means, ses = [], []
    for n in ns:
        r = np.array([o.candidate_bound / n for o in by_n[n] if o.ok])
        means.append(float(r.mean()))
        ses.append(float(r.std(ddof=1) / math.sqrt(len(r))))
    pin_trend = strictly_decreasing(means, ses)

    rows = {a: budget_verify(PINGPONG, pin_runs["params"][a], pin_runs["at_400"][a])
            for a in (20, 40, 80)}
    joint = [rows[a].rate("joint") for a in (20, 40, 80)]
    joint_se = [rows[a].stderr_rate("joint") for a in (20, 40, 80)]
    joint_trend = strictly_decreasing(joint, joint_se)
    comp_ok = all(rows[a].status == "pass" for a in rows)
    comp_text = "; ".join(
        f"alpha={a}: " + ", ".join(
            f"{c} {rows[a].estimates[c].value:.2f}<={rows[a].bounds[c]:.1f}"
            for c in ("tau", "pi", "sigma", "beta"))
        for a in rows)
    distinct = {a: len(CountTable.from_keys(o.joint for o in pin_runs["at_400"][a] if o.ok))
                for a in rows}
    ok = pin_trend == "pass" and joint_trend == "pass" and comp_ok and pin_runs["total"] < 1200
    report(8, ok, f"candidate_bound/n over n={ns}: {[round(m, 5) for m in means]} "
                  f"(+-2se {[round(2 * s, 5) for s in ses]}) -> {pin_trend}; joint H/n over "
                  f"alpha=[20, 40, 80]: {[round(j, 5) for j in joint]} (+-2se "
                  f"{[round(2 * s, 5) for s in joint_se]}, distinct joint records {distinct}) -> "
                  f"{joint_trend}; component bounds: {comp_text} -> "
                  f"{'ok' if comp_ok else 'violated'}; {pin_runs['total']:.0f}s (< 1200s)")


# ---------------------------------------------------------------- 9


def test_criterion_09_entropy_oracles():
    uniform = plugin_entropy(CountTable.from_keys([b"a", b"b", b"c", b"d"] * 10)).value
    h1 = exact_step_entropy(PINGPONG, 1).value
    h2 = exact_step_entropy(PINGPONG, 2).value
    hand = -(1 / 4) * math.log(1 / 4) - 12 * (1 / 16) * math.log(1 / 16)
    per_n = [r for _, _, r in avez_estimate(PINGPONG, range(1, 9)).per_n]
    monotone = all(b <= a + 1e-12 for a, b in zip(per_n, per_n[1:]))
    N = 100_000
    sampled = plugin_entropy(sampled_step_table(PINGPONG, SEED, 4, N)).value
    exact4 = exact_step_entropy(PINGPONG, 4).value
    ok = (uniform == math.log(4) and h1 == math.log(4) and abs(h2 - hand) <= 1e-12
          and abs(hand - 3.5 * math.log(2)) <= 1e-12 and monotone
          and abs(sampled - exact4) <= 3 / math.sqrt(N))
    report(9, ok, f"uniform-4 plug-in {uniform!r} and exact {h1!r} vs log 4 {math.log(4)!r}; "
                  f"two-step {h2:.15f} vs hand count {hand:.15f}; H/n non-increasing over n=1..8: "
                  f"{monotone}; plug-in {sampled:.5f} vs exact {exact4:.5f} at n=4, N=1e5 "
                  f"(|diff| {abs(sampled - exact4):.2e} <= {3 / math.sqrt(N):.2e})")


# ---------------------------------------------------------------- 10

SMALL = """\
name: small_pingpong
dim: 2
generators:
  - [[1, 2], [0, 1]]
  - [[1, -2], [0, 1]]
  - [[1, 0], [2, 1]]
  - [[1, 0], [-2, 1]]
weights: uniform
n: 100
alpha: 10
L: p99
M: sweep
horizon_factor: 4
paths: 24
seed: 99
checkpoints: [10, 20, 40]
n_grid: [50, 100]
alpha_grid: [10, 20]
avez_grid: [1, 2, 3, 4]
window: 20
"""


def test_criterion_10_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "1700000000")
    cfg = tmp_path / "small.yaml"
    cfg.write_text(SMALL)
    mismatches, compared = [], 0
    for exp in ("simulate", "convergence", "pindown", "entropy-budget", "avez", "sweep-m"):
        outputs = {}
        for threads in (1, 4, 8):
            out = tmp_path / f"{exp}-{threads}"
            code = main([exp, "--config", str(cfg), "--out", str(out), "--threads", str(threads),
                         "--seed", "12345"])
            outputs[threads] = (code, {p.name: p.read_bytes() for p in sorted(out.iterdir())})
        base = outputs[1]
        for threads in (4, 8):
            compared += len(base[1])
            if outputs[threads] != base:
                mismatches.append(f"{exp}@{threads}")
    ok = not mismatches
    report(10, ok, f"6 subcommands x threads {{1, 4, 8}}: {compared} file comparisons, "
                   f"mismatches: {mismatches or 'none'}")
