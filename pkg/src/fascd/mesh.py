"""Nested structured mesh hierarchies on box domains.

A hierarchy is built by uniform refinement of a coarse grid on an
axis-aligned box, in 1D (intervals) or 2D (Q1 quads, or P1 triangles from
quads split along the lower-left to upper-right diagonal).  Vertices are
indexed row-major with x fastest, and every coarse vertex is a fine vertex
at the bitwise-identical coordinates, because coordinates are always
computed as lo + i*(hi-lo)/N from integer i.
"""

import numpy as np

__all__ = ['Domain', 'MeshLevel', 'MeshHierarchy', 'build_hierarchy',
           'coarse_to_fine_vertex']


class Domain:
    '''Axis-aligned box domain: dim in {1,2}, lo < hi per axis.'''

    def __init__(self, lo, hi):
        lo = tuple(float(c) for c in np.atleast_1d(lo))
        hi = tuple(float(c) for c in np.atleast_1d(hi))
        if len(lo) != len(hi) or len(lo) not in (1, 2):
            raise ValueError('domain must be 1D or 2D')
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError('domain requires lo < hi on every axis')
        self.lo = lo
        self.hi = hi
        self.dim = len(lo)

    def __repr__(self):
        return 'Domain(lo=%r, hi=%r)' % (self.lo, self.hi)


class MeshLevel:
    '''One level of a structured hierarchy.

    Stores per-axis cell counts, the element kind ('P1' or 'Q1'; in 1D both
    degenerate to intervals), and the Dirichlet boundary classification of
    vertices.  Vertex coordinates are implicit.
    '''

    def __init__(self, domain, j, ncells, element, dirichlet_spec=None):
        self.domain = domain
        self.j = j
        self.ncells = tuple(int(n) for n in ncells)    # cells per axis
        self.nverts = tuple(n + 1 for n in self.ncells)
        self.element = element
        self.m = int(np.prod(self.nverts))
        self.h = tuple((hi - lo) / n for lo, hi, n in
                       zip(domain.lo, domain.hi, self.ncells))
        self._dirichlet = self._classify(dirichlet_spec)

    # -- geometry ---------------------------------------------------------

    def axis_coords(self, axis):
        '''Vertex coordinates along one axis, computed from integer index.'''
        lo, hi = self.domain.lo[axis], self.domain.hi[axis]
        i = np.arange(self.nverts[axis], dtype=np.float64)
        return lo + i * (hi - lo) / self.ncells[axis]

    def coords(self):
        '''(m, dim) array of vertex coordinates, row-major, x fastest.'''
        if self.domain.dim == 1:
            return self.axis_coords(0)[:, None]
        x = self.axis_coords(0)
        y = self.axis_coords(1)
        X, Y = np.meshgrid(x, y)       # Y slow, X fast
        return np.column_stack([X.ravel(), Y.ravel()])

    def vertex_id(self, ix, iy=None):
        if self.domain.dim == 1:
            return ix
        return iy * self.nverts[0] + ix

    # -- connectivity -----------------------------------------------------

    def cells(self):
        '''Element connectivity: (ncell, nodes-per-cell) vertex ids.

        1D: intervals (i, i+1).  Q1: quads ordered LL, LR, UL, UR.
        P1: two triangles per quad, split LL-UR.
        '''
        if self.domain.dim == 1:
            n = self.ncells[0]
            return np.column_stack([np.arange(n), np.arange(1, n + 1)])
        nx, ny = self.ncells
        nvx = self.nverts[0]
        cx, cy = np.meshgrid(np.arange(nx), np.arange(ny))
        ll = (cy * nvx + cx).ravel()
        lr, ul, ur = ll + 1, ll + nvx, ll + nvx + 1
        if self.element == 'Q1':
            return np.column_stack([ll, lr, ul, ur])
        # P1: diagonal from LL to UR in every quad
        tri1 = np.column_stack([ll, lr, ur])
        tri2 = np.column_stack([ll, ur, ul])
        return np.vstack([tri1, tri2])

    # -- boundary ---------------------------------------------------------

    def boundary_mask(self):
        mask = np.zeros(self.m, dtype=bool)
        if self.domain.dim == 1:
            mask[0] = mask[-1] = True
            return mask
        nvx, nvy = self.nverts
        g = mask.reshape(nvy, nvx)
        g[0, :] = g[-1, :] = True
        g[:, 0] = g[:, -1] = True
        return mask

    def _classify(self, spec):
        bnd = self.boundary_mask()
        if spec is None:
            return bnd
        xy = self.coords()
        out = bnd.copy()
        idx = np.nonzero(bnd)[0]
        keep = np.array([bool(spec(xy[i])) for i in idx])
        out[idx] = keep
        return out

    @property
    def dirichlet_mask(self):
        '''Boolean mask of Dirichlet boundary vertices.'''
        return self._dirichlet


class MeshHierarchy:
    '''Ordered mesh levels 0..J from nested uniform refinement.'''

    def __init__(self, levels):
        self.levels = levels
        self.J = len(levels) - 1
        self.element = levels[0].element
        self.domain = levels[0].domain

    def __getitem__(self, j):
        return self.levels[j]

    def __len__(self):
        return len(self.levels)

    @property
    def dims(self):
        return self.domain.dim

    def dof_counts(self):
        return [lev.m for lev in self.levels]


def build_hierarchy(domain, coarse_cells_per_axis, J, element='P1',
                    dirichlet_spec=None):
    '''Build the nested hierarchy with J uniform refinements of the coarse
    grid (J+1 levels total).  coarse_cells_per_axis is an int or per-axis
    tuple of cell counts, all >= 1.'''
    ncoarse = np.atleast_1d(coarse_cells_per_axis).astype(int)
    if len(ncoarse) == 1 and domain.dim == 2:
        ncoarse = np.repeat(ncoarse, 2)
    if len(ncoarse) != domain.dim:
        raise ValueError('cell counts do not match domain dimension')
    if np.any(ncoarse < 1):
        raise ValueError('need at least one coarse cell per axis')
    if J < 0:
        raise ValueError('J must be >= 0')
    if element not in ('P1', 'Q1'):
        raise ValueError('element must be P1 or Q1')
    levels = [MeshLevel(domain, j, ncoarse * 2**j, element, dirichlet_spec)
              for j in range(J + 1)]
    return MeshHierarchy(levels)


def coarse_to_fine_vertex(hierarchy, j, k):
    '''Fine (level j+1) vertex id of coarse (level j) vertex k.'''
    if not 0 <= j < hierarchy.J:
        raise IndexError('level out of range')
    coarse, fine = hierarchy[j], hierarchy[j + 1]
    if not 0 <= k < coarse.m:
        raise IndexError('vertex id out of range')
    if hierarchy.dims == 1:
        return 2 * k
    nvx = coarse.nverts[0]
    iy, ix = divmod(k, nvx)
    return fine.vertex_id(2 * ix, 2 * iy)
