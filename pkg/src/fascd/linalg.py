"""Fixed-iteration Krylov solvers with incomplete-factorization
preconditioners.

CG and GMRES run exactly the configured number of iterations (no
residual-based early exit except on an exactly-zero residual), which keeps
smoother cost per level proportional to the number of unknowns and makes
runs deterministic.  IC0 and ILU0 are zero-fill factorizations on the CSR
pattern of the matrix; kernels are numba-compiled.
"""

import warnings

import numpy as np
import scipy.sparse as sp
from numba import njit

__all__ = ['KrylovConfig', 'linear_solve', 'ic0', 'ilu0']


class KrylovConfig:
    '''method in {"cg", "gmres", "lu"}; iters = fixed iteration count;
    preconditioner in {"ic0", "ilu0", "none"} (ignored for "lu").'''

    def __init__(self, method='gmres', iters=3, preconditioner='ilu0'):
        if method not in ('cg', 'gmres', 'lu'):
            raise ValueError('unknown method %r' % method)
        if preconditioner not in ('ic0', 'ilu0', 'none'):
            raise ValueError('unknown preconditioner %r' % preconditioner)
        if method != 'lu' and iters < 1:
            raise ValueError('need at least one Krylov iteration')
        self.method = method
        self.iters = int(iters)
        self.preconditioner = preconditioner


# -- incomplete factorizations (CSR, zero fill) ---------------------------

@njit(cache=True)
def _ic0_kernel(n, indptr, indices, data, diag_pos):
    # in-place lower-triangular factor in the lower part of data;
    # returns row index of a nonpositive pivot, or -1 on success
    for i in range(n):
        dii = data[diag_pos[i]]
        for kk in range(indptr[i], diag_pos[i]):
            k = indices[kk]
            # data[kk] holds L[i,k] already computed below; subtract
            # sum_m L[i,m] L[k,m] over the shared pattern
            s = data[kk]
            pa = indptr[i]
            pb = indptr[k]
            while pa < kk and pb < diag_pos[k]:
                ca = indices[pa]
                cb = indices[pb]
                if ca == cb:
                    s -= data[pa] * data[pb]
                    pa += 1
                    pb += 1
                elif ca < cb:
                    pa += 1
                else:
                    pb += 1
            lik = s / data[diag_pos[k]]
            data[kk] = lik
            dii -= lik * lik
        if dii <= 0.0:
            return i
        data[diag_pos[i]] = np.sqrt(dii)
    return -1


@njit(cache=True)
def _ilu0_kernel(n, indptr, indices, data, diag_pos):
    # standard ikj ILU(0); returns row of a zero pivot or -1
    for i in range(n):
        for kk in range(indptr[i], diag_pos[i]):
            k = indices[kk]
            piv = data[diag_pos[k]]
            if piv == 0.0:
                return k
            lik = data[kk] / piv
            data[kk] = lik
            # subtract lik * U[k, j] for j > k within row i's pattern
            pa = kk + 1
            pb = diag_pos[k]
            enda = indptr[i + 1]
            endb = indptr[k + 1]
            while pa < enda and pb < endb:
                ca = indices[pa]
                cb = indices[pb]
                if ca == cb:
                    data[pa] -= lik * data[pb]
                    pa += 1
                    pb += 1
                elif ca < cb:
                    pa += 1
                else:
                    pb += 1
        if data[diag_pos[i]] == 0.0:
            return i
    return -1


@njit(cache=True)
def _lsolve_unit(n, indptr, indices, data, diag_pos, b):
    x = b.copy()
    for i in range(n):
        s = x[i]
        for kk in range(indptr[i], diag_pos[i]):
            s -= data[kk] * x[indices[kk]]
        x[i] = s
    return x


@njit(cache=True)
def _usolve(n, indptr, indices, data, diag_pos, b):
    x = b.copy()
    for i in range(n - 1, -1, -1):
        s = x[i]
        for kk in range(diag_pos[i] + 1, indptr[i + 1]):
            s -= data[kk] * x[indices[kk]]
        x[i] = s / data[diag_pos[i]]
    return x


@njit(cache=True)
def _lsolve(n, indptr, indices, data, diag_pos, b):
    x = b.copy()
    for i in range(n):
        s = x[i]
        for kk in range(indptr[i], diag_pos[i]):
            s -= data[kk] * x[indices[kk]]
        x[i] = s / data[diag_pos[i]]
    return x


@njit(cache=True)
def _ltsolve(n, indptr, indices, data, diag_pos, b):
    # solve L^T x = b with L stored row-wise in the lower triangle
    x = b.copy()
    for i in range(n - 1, -1, -1):
        x[i] /= data[diag_pos[i]]
        xi = x[i]
        for kk in range(indptr[i], diag_pos[i]):
            x[indices[kk]] -= data[kk] * xi
    return x


def _diag_positions(A):
    n = A.shape[0]
    pos = np.empty(n, dtype=np.int64)
    for i in range(n):
        row = A.indices[A.indptr[i]:A.indptr[i + 1]]
        k = np.searchsorted(row, i)
        if k == len(row) or row[k] != i:
            raise ValueError('matrix has a structurally-zero diagonal entry')
        pos[i] = A.indptr[i] + k
    return pos


class _IC0:
    def __init__(self, A):
        A = A.tocsr().sorted_indices()
        self.shape = A.shape
        self.indptr, self.indices = A.indptr, A.indices
        self.diag_pos = _diag_positions(A)
        self.shifted = 0
        data = A.data.copy()
        bad = _ic0_kernel(A.shape[0], self.indptr, self.indices, data,
                          self.diag_pos)
        while bad >= 0:
            # pivot breakdown: retry with a diagonal shift
            self.shifted += 1
            shift = 10.0**(self.shifted - 9) * np.abs(A.data[self.diag_pos]).max()
            data = A.data.copy()
            data[self.diag_pos] += shift
            bad = _ic0_kernel(A.shape[0], self.indptr, self.indices, data,
                              self.diag_pos)
            if self.shifted > 12:
                raise RuntimeError('IC0 failed even with diagonal shifts')
        self.data = data

    def apply(self, b):
        n = self.shape[0]
        y = _lsolve(n, self.indptr, self.indices, self.data, self.diag_pos, b)
        return _ltsolve(n, self.indptr, self.indices, self.data,
                        self.diag_pos, y)


class _ILU0:
    def __init__(self, A):
        A = A.tocsr().sorted_indices()
        self.shape = A.shape
        self.indptr, self.indices = A.indptr, A.indices
        self.diag_pos = _diag_positions(A)
        self.shifted = 0
        data = A.data.copy()
        bad = _ilu0_kernel(A.shape[0], self.indptr, self.indices, data,
                           self.diag_pos)
        while bad >= 0:
            self.shifted += 1
            shift = 10.0**(self.shifted - 9) * np.abs(A.data[self.diag_pos]).max()
            data = A.data.copy()
            data[self.diag_pos] += shift
            bad = _ilu0_kernel(A.shape[0], self.indptr, self.indices, data,
                               self.diag_pos)
            if self.shifted > 12:
                raise RuntimeError('ILU0 failed even with diagonal shifts')
        self.data = data

    def apply(self, b):
        n = self.shape[0]
        y = _lsolve_unit(n, self.indptr, self.indices, self.data,
                         self.diag_pos, b)
        return _usolve(n, self.indptr, self.indices, self.data,
                       self.diag_pos, y)


def ic0(A):
    '''Zero-fill incomplete Cholesky; returns an object with .apply(b).'''
    return _IC0(A)


def ilu0(A):
    '''Zero-fill incomplete LU; returns an object with .apply(b).'''
    return _ILU0(A)


# -- Krylov iterations ----------------------------------------------------

def _cg(A, b, M, iters):
    x = np.zeros_like(b)
    r = b.copy()
    if not np.any(r):
        return x, 0
    z = M(r)
    p = z.copy()
    rz = r @ z
    for k in range(iters):
        Ap = A @ p
        pAp = p @ Ap
        if pAp <= 0.0 or not np.isfinite(pAp):
            return x, -1          # breakdown
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        if not np.any(r):
            return x, k + 1
        z = M(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, iters


def _gmres(A, b, M, iters):
    # single-cycle preconditioned GMRES (no restart), modified Gram-Schmidt
    n = b.shape[0]
    r0 = M(b)
    beta = np.linalg.norm(r0)
    if beta == 0.0:
        return np.zeros_like(b), 0
    if not np.isfinite(beta):
        return np.zeros_like(b), -1
    m = min(iters, n)
    V = np.zeros((m + 1, n))
    H = np.zeros((m + 1, m))
    V[0] = r0 / beta
    used = m
    for k in range(m):
        w = M(A @ V[k])
        if not np.all(np.isfinite(w)):
            used = k
            break
        for i in range(k + 1):
            H[i, k] = w @ V[i]
            w -= H[i, k] * V[i]
        H[k + 1, k] = np.linalg.norm(w)
        if H[k + 1, k] < 1e-300:
            used = k + 1
            break
        V[k + 1] = w / H[k + 1, k]
    if used == 0:
        return np.zeros_like(b), -1
    e1 = np.zeros(used + 1)
    e1[0] = beta
    try:
        y, *_ = np.linalg.lstsq(H[:used + 1, :used], e1, rcond=None)
    except np.linalg.LinAlgError:
        return np.zeros_like(b), -1
    return V[:used].T @ y, used


def linear_solve(A, rhs, cfg, precond=None):
    '''Approximately solve A x = rhs with exactly cfg.iters iterations of
    the configured Krylov method (or exactly, for "lu"), deterministic.

    precond may carry a prebuilt preconditioner (object with .apply);
    otherwise one is built here from cfg.preconditioner.  Returns
    (x, info dict).'''
    rhs = np.asarray(rhs, dtype=float)
    info = {'method': cfg.method, 'iters': 0, 'fallback': False,
            'shifted': 0}
    if cfg.method == 'lu':
        with warnings.catch_warnings():
            warnings.simplefilter('ignore', sp.linalg.MatrixRankWarning)
            x = sp.linalg.spsolve(A.tocsc(), rhs)
        if not np.all(np.isfinite(x)):
            # singular reduced matrix: damped diagonal step
            info['fallback'] = True
            x = _diag_step(A, rhs)
        return x, info
    if precond is None:
        if cfg.preconditioner == 'ic0':
            precond = ic0(A)
        elif cfg.preconditioner == 'ilu0':
            precond = ilu0(A)
    if precond is None:
        M = lambda v: v
    else:
        M = precond.apply
        info['shifted'] = getattr(precond, 'shifted', 0)
    if cfg.method == 'cg':
        x, k = _cg(A, rhs, M, cfg.iters)
    else:
        x, k = _gmres(A, rhs, M, cfg.iters)
    if k < 0 or not np.all(np.isfinite(x)):
        info['fallback'] = True
        x = _diag_step(A, rhs)
        k = 0
    info['iters'] = k
    return x, info


def _diag_step(A, rhs):
    '''Damped diagonal (Jacobi-like) step, as a last-resort fallback when
    the configured solver broke down.  Near-zero diagonal entries are
    floored relative to the largest one so the step stays bounded.'''
    rhs = np.where(np.isfinite(rhs), rhs, 0.0)
    d = A.diagonal()
    d = np.where(np.isfinite(d), d, 1.0)
    dmax = np.abs(d).max()
    if dmax == 0.0:
        return np.zeros_like(rhs)
    floor = 1e-8 * dmax
    d = np.where(np.abs(d) > floor, d, np.where(d < 0.0, -floor, floor))
    return 0.5 * rhs / d
