import numpy as np
import pytest
import scipy.sparse as sp

from fascd.mesh import Domain, build_hierarchy
from fascd.linalg import KrylovConfig
from fascd.smoother import (SmootherConfig, fb_residual, active_sets,
                            rs_newton_step, smooth, coarse_solve,
                            _masked_system)
from fascd.problems import make_plap1d_problem
from oracles import solve_box_vi_bruteforce

inf = np.inf


def test_config_validation():
    with pytest.raises(ValueError):
        SmootherConfig(newton_iters=0)
    cfg = SmootherConfig()
    assert cfg.krylov.method in ('cg', 'gmres', 'lu')


def test_fb_residual_cases():
    lo = np.array([0.0, 0.0, -inf, -1.0, 0.0])
    hi = np.array([inf, inf, 0.0, 1.0, 0.0])
    x = np.array([0.5, 0.0, 0.0, 1.0, 0.0])
    F = np.array([0.0, 2.0, -3.0, -1.0, 5.0])
    r = fb_residual(F, x, lo, hi)
    assert r[0] == 0.0          # interior, zero residual
    assert r[1] == 0.0          # lower-active, F pushes down: consistent
    assert r[2] == 0.0          # upper-active, F pushes up: consistent
    assert r[3] == 0.0          # upper-active consistent on a box
    assert r[4] == 0.0          # pinched entry is always consistent
    # inconsistencies are detected
    assert fb_residual(np.array([-2.0]), np.array([0.0]),
                       np.array([0.0]), np.array([inf]))[0] != 0.0
    assert fb_residual(np.array([1.0]), np.array([0.5]),
                       np.array([0.0]), np.array([inf]))[0] != 0.0


def test_fb_residual_infinite_bounds_reduce_to_plain():
    # fully unconstrained entries reduce to max(F, -F) = |F|: the same
    # zero set and the same norm as the plain residual
    F = np.array([3.0, -2.5])
    x = np.array([7.0, -4.0])
    lo = np.full(2, -inf)
    hi = np.full(2, inf)
    assert np.array_equal(fb_residual(F, x, lo, hi), np.abs(F))


def test_fb_residual_zero_set_matches_bruteforce():
    # on random small box VIs the semi-smooth residual vanishes exactly at
    # the brute-force solution and only there
    rng = np.random.default_rng(31)
    for trial in range(25):
        n = int(rng.integers(2, 6))
        G = rng.standard_normal((n, n))
        A = G @ G.T + n * np.eye(n)
        b = 3.0 * rng.standard_normal(n)
        lo = np.where(rng.random(n) < 0.3, -inf, -rng.random(n))
        hi = np.where(rng.random(n) < 0.3, inf, rng.random(n))
        x = solve_box_vi_bruteforce(A, b, lo, hi)
        r = fb_residual(A @ x - b, x, lo, hi)
        assert np.abs(r).max() <= 1e-7 * (1.0 + np.abs(b).max())
        y = np.clip(x + 0.1, lo, hi)
        if np.any(y != x):
            assert np.abs(fb_residual(A @ y - b, y, lo, hi)).max() > 1e-9


def test_active_sets():
    lo = np.array([0.0, 0.0, -inf, 0.0])
    hi = np.array([inf, inf, 1.0, 1.0])
    x = np.array([0.0, 0.0, 1.0, 0.5])
    F = np.array([1.0, -1.0, -2.0, 3.0])
    active, lower, upper = active_sets(F, x, lo, hi)
    assert lower.tolist() == [True, False, False, False]
    assert upper.tolist() == [False, False, True, False]
    assert active.tolist() == [True, False, True, False]
    dmask = np.array([False, False, False, True])
    active2, _, _ = active_sets(F, x, lo, hi, dmask)
    assert active2.tolist() == [True, False, True, True]


def test_masked_system_symmetry_and_unit_rows():
    rng = np.random.default_rng(32)
    G = rng.standard_normal((6, 6))
    A = sp.csr_matrix(G @ G.T + 6.0 * np.eye(6))
    active = np.array([True, False, False, True, False, False])
    Am = _masked_system(A, active)
    D = np.asarray(Am.todense())
    assert np.allclose(D, D.T)
    for i in np.nonzero(active)[0]:
        row = np.zeros(6)
        row[i] = 1.0
        assert np.array_equal(D[i], row)
        assert np.array_equal(D[:, i], row)


def test_masked_system_zero_diagonal_fix():
    # an identically-zero inactive row (degenerate operator) receives a
    # unit diagonal so direct solves stay defined
    A = sp.csr_matrix((np.array([0.0, 1.0, 1.0]),
                       ([0, 1, 1], [0, 0, 1])), shape=(2, 2))
    Am = _masked_system(A, np.array([False, False]))
    assert Am.diagonal()[0] == 1.0


def linear_plap(J=1, m0=4):
    hier = build_hierarchy(Domain(-3.0, 3.0), m0, J, element='P1')
    return make_plap1d_problem(hier, p=2.0)


def linear_system_of(problem, j):
    '''(A, b) of the linear level-j equation, Dirichlet rows included.'''
    m = problem.hierarchy[j].m
    A = problem.jacobian(j, np.zeros(m))
    b = problem.ell() - problem.residual(j, np.zeros(m)) \
        if j == problem.hierarchy.J else None
    return A, b


def test_newton_step_solves_linear_problem():
    problem = linear_plap(J=1)
    j = 1
    lo = np.full(problem.hierarchy[j].m, -inf)
    hi = np.full(problem.hierarchy[j].m, inf)
    base = problem.natural_initial(j, lo, hi)
    c = rs_newton_step(problem, j, problem.ell(), lo, hi, base,
                       np.zeros_like(base), KrylovConfig(method='lu'))
    F = problem.residual(j, base + c) - problem.ell()
    free = ~problem.dirichlet_mask(j)
    assert np.abs(F[free]).max() <= 1e-10


def test_newton_step_cap():
    problem = linear_plap(J=1)
    problem.newton_step_cap = 1e-3
    j = 1
    m = problem.hierarchy[j].m
    lo, hi = np.full(m, -inf), np.full(m, inf)
    base = problem.natural_initial(j, lo, hi)
    c = rs_newton_step(problem, j, problem.ell(), lo, hi, base,
                       np.zeros_like(base), KrylovConfig(method='lu'))
    assert np.abs(c).max() <= 1e-3 + 1e-15


def test_smooth_respects_bounds():
    problem = make_plap1d_problem(
        build_hierarchy(Domain(-3.0, 3.0), 6, 2, element='P1'))
    j = 2
    m = problem.hierarchy[j].m
    rng = np.random.default_rng(33)
    lo = -rng.random(m)
    hi = rng.random(m)
    base = problem.natural_initial(j, *problem.obstacles())
    cfg = SmootherConfig(krylov=KrylovConfig(method='lu'), newton_iters=3)
    c = smooth(problem, j, problem.ell(), lo, hi, base, np.zeros(m), 2, cfg)
    assert np.all(c >= lo) and np.all(c <= hi)


def test_coarse_solve_matches_bruteforce():
    # linear obstacle problem, small enough for active-set enumeration
    problem = linear_plap(J=0, m0=4)
    j = 0
    lo, hi = problem.obstacles()
    A, b = linear_system_of(problem, j)
    x_ref = solve_box_vi_bruteforce(A, b, lo, hi)
    base = problem.natural_initial(j, lo, hi)
    cfg = SmootherConfig()
    from fascd.nodal import ext_sub
    c, its = coarse_solve(problem, j, problem.ell(), ext_sub(lo, base),
                          ext_sub(hi, base), base, np.zeros_like(base), cfg)
    assert its >= 1
    assert np.abs(base + c - x_ref).max() <= 1e-9


def test_coarse_solve_nonlinear_obstacle():
    problem = make_plap1d_problem(
        build_hierarchy(Domain(-3.0, 3.0), 8, 0, element='P1'))
    j = 0
    lo, hi = problem.obstacles()
    base = problem.natural_initial(j, lo, hi)
    from fascd.nodal import ext_sub
    cfg = SmootherConfig(line_search=True)
    c, _ = coarse_solve(problem, j, problem.ell(), ext_sub(lo, base),
                        ext_sub(hi, base), base, np.zeros_like(base), cfg)
    w = base + c
    F = problem.residual(j, w) - problem.ell()
    free = ~problem.dirichlet_mask(j)
    r = fb_residual(F, w, lo, hi)[free]
    assert np.abs(r).max() <= 1e-10
    assert np.all(w >= lo - 1e-14)
