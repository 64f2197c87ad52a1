import numpy as np
import pytest

from fascd.nodal import clamp, admissible, ext_sub, check_obstacle_pair

inf = np.inf


def test_clamp_basic():
    v = np.array([-2.0, 0.5, 3.0])
    lo = np.array([-1.0, 0.0, -inf])
    hi = np.array([1.0, 0.25, inf])
    out = clamp(v, lo, hi)
    assert np.array_equal(out, [-1.0, 0.25, 3.0])


def test_clamp_identity_inside():
    rng = np.random.default_rng(7)
    v = rng.standard_normal(50)
    lo = v - rng.random(50) - 0.1
    hi = v + rng.random(50) + 0.1
    assert np.array_equal(clamp(v, lo, hi), v)


def test_clamp_idempotent_and_monotone():
    rng = np.random.default_rng(8)
    lo = rng.standard_normal(40)
    hi = lo + rng.random(40)
    a = rng.standard_normal(40) * 3.0
    b = a + rng.random(40)          # a <= b
    ca, cb = clamp(a, lo, hi), clamp(b, lo, hi)
    assert np.array_equal(clamp(ca, lo, hi), ca)
    assert np.all(ca <= cb)


def test_clamp_shape_mismatch():
    with pytest.raises(ValueError):
        clamp(np.zeros(3), np.zeros(4), np.zeros(4))


def test_admissible():
    lo = np.array([0.0, -inf])
    hi = np.array([1.0, 0.0])
    assert admissible(np.array([0.0, -5.0]), lo, hi)
    assert not admissible(np.array([-0.1, -5.0]), lo, hi)
    assert admissible(np.array([-0.1, -5.0]), lo, hi, tol=0.2)
    mask = np.array([True, False])
    g = np.array([0.5, 0.0])
    assert admissible(np.array([0.5, -1.0]), lo, hi,
                      dirichlet_mask=mask, dirichlet_values=g)
    assert not admissible(np.array([0.6, -1.0]), lo, hi,
                          dirichlet_mask=mask, dirichlet_values=g)


def test_ext_sub_finite_matches_subtraction():
    rng = np.random.default_rng(9)
    a = rng.standard_normal(100)
    b = rng.standard_normal(100)
    assert np.array_equal(ext_sub(a, b), a - b)


def test_ext_sub_extended_rules():
    a = np.array([1.0, 1.0, -inf, inf, inf, -inf])
    b = np.array([-inf, inf, 2.0, -3.0, inf, -inf])
    out = ext_sub(a, b)
    # finite - (-inf) = +inf; finite - inf = -inf; -inf - x = -inf;
    # inf - x = +inf; the indeterminate forms take the first operand
    assert np.array_equal(out, [inf, -inf, -inf, inf, inf, -inf])
    assert not np.any(np.isnan(out))


def test_check_obstacle_pair():
    check_obstacle_pair(np.array([-inf, 0.0]), np.array([0.0, inf]))
    with pytest.raises(ValueError):
        check_obstacle_pair(np.array([1.0]), np.array([0.0]))
    with pytest.raises(ValueError):
        check_obstacle_pair(np.array([inf]), np.array([inf]))
    with pytest.raises(ValueError):
        check_obstacle_pair(np.array([-inf]), np.array([-inf]))
