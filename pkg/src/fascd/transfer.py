"""Inter-level transfer operators on a nested structured hierarchy.

Five operators per level pair (j-1, j):
  prolong        P   : coarse primal -> fine primal (nodal interpolation)
  restrict_dual  R   : fine dual -> coarse dual (transpose of P weights)
  inject         R.  : fine primal -> coarse primal (subsampling)
  inject_max     R+  : fine extended-real -> coarse, max over vertex stars
  inject_min     R-  : fine extended-real -> coarse, min over vertex stars

The star of a coarse vertex p is the set of fine vertices where the coarse
nodal basis function of p is positive.  Weights and stars are computed by
evaluating the coarse basis functions at the (exact, half-integer) fine
vertex positions, so one code path serves 1D, P1, and Q1.
"""

import numpy as np
import scipy.sparse as sp

__all__ = ['TransferPlan']


def _basis_weights_1d(nc):
    '''Rows: fine vertex -> [(coarse vertex, weight)] for one axis with nc
    coarse cells.  Even fine index 2i sits on coarse vertex i (weight 1);
    odd index 2i+1 is the midpoint of coarse cell i (weights 1/2, 1/2).'''
    rows = []
    for q in range(2 * nc + 1):
        i, r = divmod(q, 2)
        if r == 0:
            rows.append([(i, 1.0)])
        else:
            rows.append([(i, 0.5), (i + 1, 0.5)])
    return rows


class TransferPlan:
    '''Precomputed transfer structure for a MeshHierarchy.

    Holds, for each level pair, the prolongation weight matrix (CSR), the
    coarse-to-fine injection index map, and the vertex star lists used by
    the monotone injections.  Immutable after construction; all operations
    are pure.
    '''

    def __init__(self, hierarchy):
        self.hierarchy = hierarchy
        self._P = [None]          # indexed by fine level j = 1..J
        self._inj = [None]
        self._star = [None]
        for j in range(1, hierarchy.J + 1):
            P = self._build_P(hierarchy[j - 1], hierarchy[j])
            self._P.append(P)
            self._inj.append(self._build_inj(hierarchy[j - 1], hierarchy[j]))
            self._star.append(self._build_stars(P))

    # -- construction -----------------------------------------------------

    def _build_P(self, coarse, fine):
        dim = coarse.domain.dim
        wx = _basis_weights_1d(coarse.ncells[0])
        rows, cols, vals = [], [], []
        if dim == 1:
            for q, entries in enumerate(wx):
                for i, w in entries:
                    rows.append(q)
                    cols.append(i)
                    vals.append(w)
        else:
            wy = _basis_weights_1d(coarse.ncells[1])
            nvxc = coarse.nverts[0]
            nvxf = fine.nverts[0]
            p1 = coarse.element == 'P1'
            for qy in range(fine.nverts[1]):
                for qx in range(nvxf):
                    q = qy * nvxf + qx
                    if p1 and qx % 2 == 1 and qy % 2 == 1:
                        # center of a split quad: on the LL-UR diagonal, so
                        # only those two corners have positive basis value
                        cx, cy = qx // 2, qy // 2
                        for (ix, iy) in ((cx, cy), (cx + 1, cy + 1)):
                            rows.append(q)
                            cols.append(iy * nvxc + ix)
                            vals.append(0.5)
                        continue
                    for ix, wxv in wx[qx]:
                        for iy, wyv in wy[qy]:
                            rows.append(q)
                            cols.append(iy * nvxc + ix)
                            vals.append(wxv * wyv)
        P = sp.csr_matrix((vals, (rows, cols)), shape=(fine.m, coarse.m))
        P.sum_duplicates()
        return P

    def _build_inj(self, coarse, fine):
        dim = coarse.domain.dim
        if dim == 1:
            return 2 * np.arange(coarse.m)
        nvxc = coarse.nverts[0]
        nvxf = fine.nverts[0]
        ii = np.arange(coarse.m)
        iy, ix = np.divmod(ii, nvxc)
        return 2 * iy * nvxf + 2 * ix

    def _build_stars(self, P):
        # star of coarse p = fine vertices q with psi_p(x_q) > 0, i.e. the
        # column structure of P
        Pc = P.tocsc()
        return Pc.indptr.copy(), Pc.indices.copy()

    # -- operations -------------------------------------------------------

    def _check(self, j):
        if not 1 <= j <= self.hierarchy.J:
            raise IndexError('fine level %d out of range' % j)

    def prolong(self, j, v):
        '''Canonical prolongation from level j-1 to level j.'''
        self._check(j)
        v = np.asarray(v, dtype=float)
        if np.all(np.isfinite(v)):
            return self._P[j] @ v
        return self._prolong_extended(j, v)

    def _prolong_extended(self, j, v):
        # weighted combination under extended-real rules: any +-inf
        # contributor with positive weight dominates; mixing the two signs
        # in one star is rejected (cannot occur for LDCs)
        P = self._P[j]
        vf = np.where(np.isfinite(v), v, 0.0)
        out = P @ vf
        hitpos = (P @ np.isposinf(v).astype(float)) > 0.0
        hitneg = (P @ np.isneginf(v).astype(float)) > 0.0
        if np.any(hitpos & hitneg):
            raise ValueError('prolongation mixes -inf and +inf contributors')
        out[hitpos] = np.inf
        out[hitneg] = -np.inf
        return out

    def restrict_dual(self, j, r):
        '''Canonical dual restriction from level j to level j-1
        (transpose of the prolongation weights, i.e. full weighting).'''
        self._check(j)
        return self._P[j].T @ np.asarray(r, dtype=float)

    def inject(self, j, v):
        '''Nodal injection from level j to level j-1 (subsampling);
        linear and monotone, preserves +-inf entries.'''
        self._check(j)
        return np.asarray(v, dtype=float)[self._inj[j]]

    def inject_max(self, j, v):
        '''Monotone max-injection: coarse value = max of v over the star.'''
        self._check(j)
        ptr, idx = self._star[j]
        out = np.maximum.reduceat(np.asarray(v, dtype=float)[idx], ptr[:-1])
        assert not np.any(np.isnan(out))
        return out

    def inject_min(self, j, v):
        '''Monotone min-injection: coarse value = min of v over the star.'''
        self._check(j)
        ptr, idx = self._star[j]
        out = np.minimum.reduceat(np.asarray(v, dtype=float)[idx], ptr[:-1])
        assert not np.any(np.isnan(out))
        return out

    def prolong_to_finest(self, j, v, top=None):
        '''Repeated prolongation from level j up to level `top` (default:
        the finest level).'''
        if top is None:
            top = self.hierarchy.J
        for jj in range(j + 1, top + 1):
            v = self.prolong(jj, v)
        return v
