import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from boundary_lab.exactgroup import GroupElement, identity, inverse, multiply, to_scaled
from boundary_lab.liegeom import (
    PolarError,
    dist,
    generalized_distance,
    helmert_basis,
    iota,
    iota_inv,
    polar_decompose,
    radial,
    radial_norm,
    round_coords,
    round_lattice,
    weyl_sort,
    weyl_unsort,
)

from _support import A, PINGPONG, SL3, as_float, random_word

finite = st.floats(-50, 50, allow_nan=False)


def zero_sum(d):
    return arrays(float, d, elements=finite).map(lambda v: v - v.mean())


def test_radial_examples():
    assert np.allclose(radial(identity(3)), 0)
    assert np.allclose(radial(np.diag([2.0, 0.5])), [math.log(2), -math.log(2)])
    # singular values of [[1,2],[0,1]] are 1 +- sqrt 2 in absolute value
    s = 1 + math.sqrt(2)
    assert np.allclose(radial(A), [math.log(s), -math.log(s)], atol=1e-14)
    assert radial_norm(A) == pytest.approx(math.sqrt(2) * math.log(s), abs=1e-14)


def test_radial_exact_route_matches_float_svd():
    rng = np.random.default_rng(0)
    for _ in range(50):
        g = random_word(SL3, rng, 8)
        assert np.allclose(radial(g), radial(as_float(g)), atol=1e-9)
        assert np.allclose(radial(g), radial(to_scaled(g)), atol=1e-9)


def test_radial_survives_huge_condition_numbers():
    # sigma_min of a length-400 word is far below double precision of sigma_max
    rng = np.random.default_rng(1)
    g = random_word(PINGPONG, rng, 400)
    r = radial(g)
    assert r[0] > 100
    assert np.allclose(radial(inverse(g)), r, atol=1e-8)
    assert abs(r.sum()) < 1e-9


def test_radial_rejects_singular():
    with pytest.raises(PolarError):
        radial(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_polar_examples():
    t = 0.3
    k = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    k1, r, k2 = polar_decompose(k)
    assert np.allclose(k1, k) and np.allclose(r, 0) and np.allclose(k2, np.eye(2))
    k1, r, k2 = polar_decompose(np.diag([4.0, 0.25]))
    assert np.allclose(r, [math.log(4), -math.log(4)])
    assert np.allclose(k1 @ np.diag(np.exp(r)) @ k2, np.diag([4.0, 0.25]))


def test_polar_sign_convention_and_reconstruction():
    rng = np.random.default_rng(2)
    for _ in range(200):
        g = as_float(random_word(SL3, rng, 10))
        k1, r, k2 = polar_decompose(g)
        for row in k2:
            nz = row[np.abs(row) > 1e-12]
            assert nz[0] > 0
        assert np.linalg.norm(k1.T @ k1 - np.eye(3)) < 1e-9
        assert np.linalg.norm(k2.T @ k2 - np.eye(3)) < 1e-9
        rec = k1 @ np.diag(np.exp(r)) @ k2
        assert np.linalg.norm(rec - g) <= 1e-9 * np.linalg.norm(g)


def test_distance_examples():
    g = multiply(A, A)
    assert np.allclose(generalized_distance(g, g), 0)
    assert dist(g, g) == 0
    # D(o, exp(H).o) = sorted(H)
    h = np.array([-0.2, 0.7, -0.5])
    assert np.allclose(radial(np.diag(np.exp(h))), np.sort(h)[::-1])
    assert np.linalg.norm(radial(np.diag([2.0, 0.5]))) == pytest.approx(0.980258, abs=1e-6)


def test_distance_invariance_and_lipschitz():
    rng = np.random.default_rng(3)
    for mu in (PINGPONG, SL3):
        for _ in range(200):
            g, g1, g2, h = (random_word(mu, rng, int(rng.integers(0, 12))) for _ in range(4))
            d12 = generalized_distance(g1, g2)
            assert np.linalg.norm(generalized_distance(multiply(g, g1), multiply(g, g2)) - d12) <= 1e-6
            lhs = np.linalg.norm(generalized_distance(g1, h) - generalized_distance(g2, h))
            assert lhs <= np.linalg.norm(d12) + 1e-6
            lhs = np.linalg.norm(generalized_distance(h, g1) - generalized_distance(h, g2))
            assert lhs <= np.linalg.norm(d12) + 1e-6
            assert abs(dist(g1, g2) - dist(g2, g1)) <= 1e-9
            assert dist(g1, h) <= dist(g1, g2) + dist(g2, h) + 1e-6


def test_weyl_sort_examples():
    assert weyl_sort([3.0, 1.0, -4.0])[0] == (0, 1, 2)
    perm, s = weyl_sort([-1.0, 1.0, 0.0])
    assert perm == (1, 2, 0) and np.array_equal(s, [1.0, 0.0, -1.0])
    assert weyl_sort([0.0, 0.0, 0.0])[0] == (0, 1, 2)


@given(arrays(float, 4, elements=st.sampled_from([-1.0, 0.0, 0.5, 2.0])))
def test_weyl_sort_properties(v):
    perm, s = weyl_sort(v)
    assert sorted(perm) == list(range(4))
    assert np.array_equal(v[list(perm)], s)
    assert all(s[i] >= s[i + 1] for i in range(3))
    # stable on ties
    for i in range(3):
        if s[i] == s[i + 1]:
            assert perm[i] < perm[i + 1]
    assert np.array_equal(weyl_unsort(perm, s), v)


def test_helmert_basis_is_orthonormal():
    for d in (2, 3, 4, 5):
        h = helmert_basis(d)
        assert np.allclose(h @ h.T, np.eye(d - 1), atol=1e-15)
        assert np.allclose(h.sum(axis=1), 0, atol=1e-15)


@given(zero_sum(3))
def test_iota_isometry_and_roundtrip(v):
    assert abs(np.linalg.norm(iota(v)) - np.linalg.norm(v)) <= 1e-12 * max(1, np.linalg.norm(v))
    assert np.allclose(iota_inv(iota(v)), v, atol=1e-12 * max(1, np.linalg.norm(v)))


def test_rounding_rules():
    assert round_lattice(np.zeros(3)) == (0, 0)
    assert round_coords([0.4, -1.6]) == (0, -2)
    assert round_coords([0.5, -0.5, 1.5]) == (0, -1, 1)
    assert round_lattice(iota_inv(np.array([0.4, -1.6]))) == (0, -2)
