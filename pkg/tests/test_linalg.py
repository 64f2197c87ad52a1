import numpy as np
import pytest
import scipy.sparse as sp

from fascd.linalg import KrylovConfig, linear_solve, ic0, ilu0


def lap1d(n, h=1.0):
    main = np.full(n, 2.0 / h)
    off = np.full(n - 1, -1.0 / h)
    return sp.diags([off, main, off], [-1, 0, 1]).tocsr()


def nonsym(n, seed=0):
    rng = np.random.default_rng(seed)
    A = lap1d(n) + sp.diags([np.full(n - 1, 0.4)], [1])
    A = A + sp.diags(rng.random(n))
    return A.tocsr()


def test_config_validation():
    with pytest.raises(ValueError):
        KrylovConfig(method='qmr')
    with pytest.raises(ValueError):
        KrylovConfig(preconditioner='amg')
    with pytest.raises(ValueError):
        KrylovConfig(method='cg', iters=0)


def test_lu_exact():
    A = lap1d(20)
    rng = np.random.default_rng(1)
    b = rng.standard_normal(20)
    x, info = linear_solve(A, b, KrylovConfig(method='lu'))
    assert np.allclose(A @ x, b, atol=1e-12)
    assert not info['fallback']


def test_ic0_exact_on_tridiagonal():
    # a tridiagonal SPD matrix has no fill-in, so IC0 is a complete
    # Cholesky factorization and the preconditioned solve is exact
    A = lap1d(30)
    rng = np.random.default_rng(2)
    b = rng.standard_normal(30)
    M = ic0(A)
    assert np.allclose(A @ M.apply(b), b, atol=1e-10)
    assert M.shifted == 0


def test_ilu0_exact_on_tridiagonal():
    A = nonsym(25)
    rng = np.random.default_rng(3)
    b = rng.standard_normal(25)
    M = ilu0(A)
    assert np.allclose(A @ M.apply(b), b, atol=1e-10)


def test_cg_one_iteration_with_exact_preconditioner():
    A = lap1d(40)
    b = np.random.default_rng(4).standard_normal(40)
    x, info = linear_solve(A, b, KrylovConfig('cg', 1, 'ic0'))
    assert np.linalg.norm(A @ x - b) <= 1e-9 * np.linalg.norm(b)
    assert info['iters'] == 1


def test_cg_converges_in_n_iterations():
    n = 12
    A = lap1d(n)
    b = np.random.default_rng(5).standard_normal(n)
    x, _ = linear_solve(A, b, KrylovConfig('cg', n, 'none'))
    assert np.linalg.norm(A @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_gmres_reduces_residual():
    A = nonsym(50, seed=6)
    b = np.random.default_rng(6).standard_normal(50)
    x1, _ = linear_solve(A, b, KrylovConfig('gmres', 1, 'none'))
    x3, _ = linear_solve(A, b, KrylovConfig('gmres', 3, 'ilu0'))
    r1 = np.linalg.norm(A @ x1 - b)
    r3 = np.linalg.norm(A @ x3 - b)
    assert r1 < np.linalg.norm(b)
    assert r3 < r1


def test_gmres_exact_at_full_dimension():
    n = 9
    A = nonsym(n, seed=7)
    b = np.random.default_rng(7).standard_normal(n)
    x, _ = linear_solve(A, b, KrylovConfig('gmres', n, 'none'))
    assert np.linalg.norm(A @ x - b) <= 1e-8 * np.linalg.norm(b)


def test_zero_rhs():
    A = lap1d(10)
    for method in ('cg', 'gmres', 'lu'):
        x, _ = linear_solve(A, np.zeros(10), KrylovConfig(method, 2, 'none'))
        assert np.array_equal(x, np.zeros(10))


def test_ic0_shifts_on_indefinite_matrix():
    # indefinite diagonal breaks Cholesky pivots; the factorization must
    # recover via diagonal shifts and still return something usable
    A = lap1d(10).tolil()
    A[5, 5] = -1.0
    A = A.tocsr()
    M = ic0(A)
    assert M.shifted > 0
    out = M.apply(np.ones(10))
    assert np.all(np.isfinite(out))


def test_ilu0_zero_pivot_shift():
    A = sp.csr_matrix((np.array([0.0, 1.0, 1.0, 1.0]),
                       ([0, 0, 1, 1], [0, 1, 0, 1])), shape=(2, 2))
    M = ilu0(A)
    assert M.shifted > 0
    assert np.all(np.isfinite(M.apply(np.array([1.0, 2.0]))))


def test_structurally_zero_diagonal_rejected():
    A = sp.csr_matrix((np.ones(2), ([0, 1], [1, 0])), shape=(2, 2))
    with pytest.raises(ValueError):
        ilu0(A)


def test_singular_lu_fallback_bounded():
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0]]))
    b = np.array([1.0, 2.0])
    x, info = linear_solve(A, b, KrylovConfig(method='lu'))
    assert info['fallback']
    assert np.all(np.isfinite(x))
    assert np.abs(x).max() <= np.abs(b).max()


def test_fallback_with_tiny_diagonal_is_bounded():
    # the damped diagonal step must not blow up on a near-zero diagonal
    A = sp.csr_matrix(np.array([[1.0, 1.0], [1.0, 1.0 + 1e-300]]))
    A = A - sp.diags([0.0, 1e-300])
    b = np.array([1.0, 1.0])
    x, info = linear_solve(A.tocsr(), b, KrylovConfig(method='lu'))
    assert np.all(np.isfinite(x))
    assert np.abs(x).max() <= 1e9 * np.abs(b).max()
