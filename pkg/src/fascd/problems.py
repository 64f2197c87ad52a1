"""VI problem definitions on structured hierarchies.

Each problem supplies per-level residual and Jacobian assembly, the finest
obstacles, Dirichlet data, and the source functional.  Residual entry p is
the dual pairing of the operator with the nodal basis function at vertex
p, computed by element loops with degree-2-exact quadrature; Dirichlet
rows are replaced by the boundary equation u_p - g_p (residual) or an
identity row (Jacobian).

Problems: 'ball' and 'spiral' classical Laplacian obstacle problems,
a 1D p-Laplacian obstacle problem, a box-constrained advection-diffusion
problem, and the shallow-ice surface elevation problem (doubly nonlinear,
operator defined only on admissible iterates).
"""

import numpy as np
import scipy.sparse as sp

from .nodal import clamp, check_obstacle_pair

__all__ = ['VIProblem', 'InadmissibleIterateError',
           'make_ball_problem', 'make_spiral_problem',
           'make_plap1d_problem', 'make_advdiff2d_problem',
           'make_sia_problem', 'ball_exact_solution',
           'dome_profile', 'dome_smb', 'SIA_SECPERA',
           'rediscretization_gap']


class InadmissibleIterateError(RuntimeError):
    '''Raised when assembly receives an iterate violating a constraint the
    operator formula requires (shallow ice: surface below bedrock).'''


# -- small FE helpers -----------------------------------------------------

GAUSS2 = (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]),
          np.array([0.5, 0.5]))      # on [0,1]


def _tri_geometry(mesh):
    '''For P1 levels: connectivity (ne,3), constant basis gradients
    (ne,3,2), element area (uniform).'''
    conn = mesh.cells()
    hx, hy = mesh.h
    ne = conn.shape[0]
    half = ne // 2
    grads = np.empty((ne, 3, 2))
    # lower triangle (LL, LR, UR) and upper triangle (LL, UR, UL) of each
    # quad, diagonal LL-UR
    grads[:half] = np.array([[-1.0 / hx, 0.0],
                             [1.0 / hx, -1.0 / hy],
                             [0.0, 1.0 / hy]])
    grads[half:] = np.array([[0.0, -1.0 / hy],
                             [1.0 / hx, 0.0],
                             [-1.0 / hx, 1.0 / hy]])
    area = 0.5 * hx * hy
    return conn, grads, area


def _quad_geometry(mesh):
    '''For Q1 levels: connectivity (ne,4), basis values (nq,4) and physical
    gradients (nq,4,2) at the 2x2 Gauss points, quadrature weights.'''
    conn = mesh.cells()
    hx, hy = mesh.h
    gx, gw = GAUSS2
    pts = [(a, b) for b in gx for a in gx]
    N = np.array([[(1 - a) * (1 - b), a * (1 - b), (1 - a) * b, a * b]
                  for (a, b) in pts])
    dN = np.array([[[-(1 - b) / hx, -(1 - a) / hy],
                    [(1 - b) / hx, -a / hy],
                    [-b / hx, (1 - a) / hy],
                    [b / hx, a / hy]] for (a, b) in pts])
    wq = np.array([wa * wb * hx * hy for wb in gw for wa in gw])
    return conn, N, dN, wq


def _tri_midpoints(mesh, conn):
    '''Edge-midpoint quadrature points (ne,3,2) for P1 triangles; the rule
    with weight area/3 at each midpoint is degree-2 exact.'''
    xy = mesh.coords()
    v = xy[conn]                       # (ne,3,2)
    return 0.5 * (v + np.roll(v, -1, axis=1))


def _scatter(conn, contrib, m):
    r = np.zeros(m)
    np.add.at(r, conn.ravel(), contrib.ravel())
    return r


def _coo_from_blocks(conn, blocks, m):
    nn = conn.shape[1]
    rows = np.repeat(conn, nn, axis=1).ravel()
    cols = np.tile(conn, (1, nn)).ravel()
    A = sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(m, m))
    A.sum_duplicates()
    return A


def _dirichlet_rows_matrix(A, mask):
    '''Replace Dirichlet rows by identity (in CSR, keeping it simple).'''
    A = A.tolil()
    idx = np.nonzero(mask)[0]
    for i in idx:
        A.rows[i] = [i]
        A.data[i] = [1.0]
    return A.tocsr()


# -- problem base ---------------------------------------------------------

class VIProblem:
    '''Base: hierarchy plus per-level Dirichlet data and mass matrices.

    Subclasses implement _operator(j, u) and _operator_jacobian(j, u)
    for the interior equations; this class handles Dirichlet rows,
    admissibility enforcement, and caching.  Immutable after construction.
    '''

    name = 'problem'
    linear = False
    admissibility_required = False
    initial_kind = 'psi_plus'    # 'psi_plus' | 'zero' | 'lower'
    symmetric = False

    def __init__(self, hierarchy):
        self.hierarchy = hierarchy
        self._mass = {}
        self._dirvals = {}
        self.lower = None       # finest obstacles, set by subclass
        self.upper = None
        self._ell = None

    # subclass hooks
    def _operator(self, j, u):
        raise NotImplementedError

    def _operator_jacobian(self, j, u):
        raise NotImplementedError

    def _dirichlet_function(self, xy):
        '''Dirichlet values at coordinates xy (n,dim); default zero.'''
        return np.zeros(xy.shape[0])

    # public surface
    def ell(self):
        '''Finest-level source functional (zero on Dirichlet rows).'''
        return self._ell.copy()

    def obstacles(self):
        return self.lower.copy(), self.upper.copy()

    def dirichlet_mask(self, j):
        return self.hierarchy[j].dirichlet_mask

    def dirichlet_values(self, j):
        if j not in self._dirvals:
            mesh = self.hierarchy[j]
            g = np.zeros(mesh.m)
            mask = mesh.dirichlet_mask
            if np.any(mask):
                g[mask] = self._dirichlet_function(mesh.coords()[mask])
            self._dirvals[j] = g
        return self._dirvals[j]

    def residual(self, j, u):
        u = np.asarray(u, dtype=float)
        r = self._operator(j, u)
        mask = self.dirichlet_mask(j)
        r[mask] = u[mask] - self.dirichlet_values(j)[mask]
        return r

    def jacobian(self, j, u):
        A = self._operator_jacobian(j, np.asarray(u, dtype=float))
        return _dirichlet_rows_matrix(A, self.dirichlet_mask(j))

    def natural_initial(self, j, lo, hi):
        '''Admissible initial iterate at level j for given bounds.'''
        mesh = self.hierarchy[j]
        if self.initial_kind == 'zero':
            w = np.zeros(mesh.m)
        elif self.initial_kind == 'lower':
            w = np.where(np.isfinite(lo), lo, 0.0)
        else:
            w = np.maximum(np.where(np.isfinite(lo), lo, -np.inf), 0.0)
            w[~np.isfinite(w)] = 0.0
        mask = mesh.dirichlet_mask
        w[mask] = self.dirichlet_values(j)[mask]
        return clamp(w, lo, hi)

    def without_obstacles(self):
        '''Copy of this problem with the inequality constraints removed.'''
        import copy
        p = copy.copy(self)
        p.lower = np.full(self.hierarchy[self.hierarchy.J].m, -np.inf)
        p.upper = np.full(self.hierarchy[self.hierarchy.J].m, np.inf)
        return p

    # L2 machinery
    def mass_matrix(self, j):
        if j not in self._mass:
            self._mass[j] = self._assemble_mass(j)
        return self._mass[j]

    def _assemble_mass(self, j):
        mesh = self.hierarchy[j]
        if mesh.domain.dim == 1:
            h = mesh.h[0]
            conn = mesh.cells()
            Me = h / 6.0 * np.array([[2.0, 1.0], [1.0, 2.0]])
        elif mesh.element == 'P1':
            conn, _, area = _tri_geometry(mesh)
            Me = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
        else:
            conn, N, _, wq = _quad_geometry(mesh)
            Me = np.einsum('q,qa,qb->ab', wq, N, N)
        blocks = np.broadcast_to(Me, (conn.shape[0],) + Me.shape)
        return _coo_from_blocks(conn, blocks, mesh.m)

    def l2_norm(self, j, v):
        M = self.mass_matrix(j)
        return float(np.sqrt(max(v @ (M @ v), 0.0)))


# -- classical Laplacian obstacle problems (ball, spiral) -----------------

class _LaplaceObstacle(VIProblem):
    linear = True
    symmetric = True

    def __init__(self, hierarchy):
        super().__init__(hierarchy)
        if hierarchy.dims != 2 or hierarchy.element != 'P1':
            raise ValueError('%s problem needs a 2D P1 hierarchy'
                             % self.name)
        self._K = {}
        J = hierarchy.J
        xy = hierarchy[J].coords()
        self.lower = self._obstacle_function(xy)
        self.upper = np.full(hierarchy[J].m, np.inf)
        check_obstacle_pair(self.lower, self.upper)
        self._ell = np.zeros(hierarchy[J].m)

    def _obstacle_function(self, xy):
        raise NotImplementedError

    def _stiffness(self, j):
        if j not in self._K:
            mesh = self.hierarchy[j]
            conn, grads, area = _tri_geometry(mesh)
            blocks = area * np.einsum('eak,ebk->eab', grads, grads)
            self._K[j] = _coo_from_blocks(conn, blocks, mesh.m)
        return self._K[j]

    def _operator(self, j, u):
        return self._stiffness(j) @ u

    def _operator_jacobian(self, j, u):
        return self._stiffness(j).copy()


def ball_exact_solution():
    '''Radial exact solution of the hemisphere ("ball") obstacle problem on
    the disk of radius 2 with zero boundary value: u = -A log r + A log 2
    outside the contact disk of radius afree, u = psi inside.  afree solves
    the transcendental matching condition (bisection).'''
    def mismatch(a):
        A = a * a / np.sqrt(1.0 - a * a)
        return A * np.log(2.0 / a) - np.sqrt(1.0 - a * a)
    lo, hi = 0.1, 0.9999
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mismatch(lo) * mismatch(mid) <= 0.0:
            hi = mid
        else:
            lo = mid
    afree = 0.5 * (lo + hi)
    A = afree**2 / np.sqrt(1.0 - afree**2)
    B = A * np.log(2.0)

    def u(r):
        r = np.asarray(r, dtype=float)
        out = -A * np.log(np.maximum(r, 1e-12)) + B
        inside = r <= afree
        out = np.where(inside, _hemisphere(r), out)
        return out
    return afree, A, B, u


def _hemisphere(r, r0=0.9):
    '''Upper hemisphere obstacle, extended by its tangent line for r > r0.'''
    r = np.asarray(r, dtype=float)
    psi0 = np.sqrt(1.0 - r0 * r0)
    dpsi0 = -r0 / psi0
    return np.where(r <= r0,
                    np.sqrt(np.maximum(1.0 - r * r, 0.0)),
                    psi0 + dpsi0 * (r - r0))


class _BallProblem(_LaplaceObstacle):
    name = 'ball'

    def __init__(self, hierarchy):
        self._exact = ball_exact_solution()
        super().__init__(hierarchy)

    def _obstacle_function(self, xy):
        return _hemisphere(np.hypot(xy[:, 0], xy[:, 1]))

    def _dirichlet_function(self, xy):
        return self._exact[3](np.hypot(xy[:, 0], xy[:, 1]))

    def exact(self, xy):
        return self._exact[3](np.hypot(xy[:, 0], xy[:, 1]))

    @property
    def free_radius(self):
        return self._exact[0]


def _spiral_obstacle(xy):
    # spiral obstacle in polar coordinates, from the classical benchmark;
    # capped by 10*(1-r) so the obstacle is below the zero boundary data on
    # the square (the benchmark's own domain is the unit disk)
    x, y = xy[:, 0], xy[:, 1]
    r = np.hypot(x, y)
    th = np.arctan2(y, x)
    rs = np.maximum(r, 1e-12)
    psi = (np.sin(2.0 * np.pi / rs + 0.5 * np.pi - th)
           * (rs * (rs + 1.0)) / (rs - 2.0) - 3.0 * rs + 3.6)
    psi = np.where(r < 1e-12, 3.6, psi)
    return np.minimum(psi, 10.0 * (1.0 - r))


class _SpiralProblem(_LaplaceObstacle):
    name = 'spiral'

    def _obstacle_function(self, xy):
        return _spiral_obstacle(xy)


def make_ball_problem(hierarchy):
    '''Hemisphere-obstacle Laplacian problem on (-2,2)^2, Dirichlet data
    from the radial exact solution, ell = 0.'''
    return _BallProblem(hierarchy)


def make_spiral_problem(hierarchy):
    '''Spiral-obstacle Laplacian problem on (-1,1)^2, zero Dirichlet data,
    ell = 0.'''
    return _SpiralProblem(hierarchy)


# -- 1D p-Laplacian obstacle problem --------------------------------------

class _PLaplace1D(VIProblem):
    name = 'plap1d'
    symmetric = True

    def __init__(self, hierarchy, p):
        super().__init__(hierarchy)
        if hierarchy.dims != 1:
            raise ValueError('plap1d needs a 1D hierarchy')
        if p <= 1.0:
            raise ValueError('exponent must satisfy p > 1')
        self.p = float(p)
        self.jac_delta = 1e-10    # gradient regularization, Jacobian only
        J = hierarchy.J
        mesh = hierarchy[J]
        x = mesh.coords()[:, 0]
        self.lower = -0.2 * np.abs(x)
        self.upper = np.full(mesh.m, np.inf)
        self._ell = self._assemble_source(J)
        self._ell[mesh.dirichlet_mask] = 0.0

    def _dirichlet_function(self, xy):
        return -0.2 * np.abs(xy[:, 0])    # contact at the boundary

    def _source_g(self, x):
        return np.where(np.abs(x) < 1.0, 1.0, -1.0)

    def _assemble_source(self, j):
        mesh = self.hierarchy[j]
        h = mesh.h[0]
        x = mesh.coords()[:, 0]
        xmid = 0.5 * (x[:-1] + x[1:])
        gmid = self._source_g(xmid)
        ell = np.zeros(mesh.m)
        np.add.at(ell, np.arange(mesh.m - 1), 0.5 * h * gmid)
        np.add.at(ell, np.arange(1, mesh.m), 0.5 * h * gmid)
        return ell

    def _flux(self, du):
        # |u'|^{p-2} u' with the limit value 0 at u' = 0
        adu = np.abs(du)
        out = np.zeros_like(du)
        nz = adu > 0.0
        out[nz] = adu[nz]**(self.p - 2.0) * du[nz]
        return out

    def _operator(self, j, u):
        h = self.hierarchy[j].h[0]
        du = np.diff(u) / h
        F = self._flux(du)
        r = np.zeros_like(u)
        r[:-1] -= F
        r[1:] += F
        return r

    def _operator_jacobian(self, j, u):
        h = self.hierarchy[j].h[0]
        du = np.diff(u) / h
        k = (self.p - 1.0) * (du * du + self.jac_delta**2)**(0.5 * (self.p - 2.0)) / h
        n = u.shape[0]
        main = np.zeros(n)
        main[:-1] += k
        main[1:] += k
        return sp.diags([-k, main, -k], [-1, 0, 1], format='csr')


def make_plap1d_problem(hierarchy, p=1.5):
    '''1D p-Laplacian obstacle problem on (-3,3): obstacle -0.2|x|, source
    +1 on |x|<1 and -1 on |x|>1, Dirichlet u(+-3) = -0.6.'''
    return _PLaplace1D(hierarchy, p)


# -- 2D box-constrained advection-diffusion -------------------------------

class _AdvDiff2D(VIProblem):
    name = 'advdiff2d'
    linear = True
    initial_kind = 'zero'

    def __init__(self, hierarchy, eps):
        super().__init__(hierarchy)
        if hierarchy.dims != 2 or hierarchy.element != 'P1':
            raise ValueError('advdiff2d needs a 2D P1 hierarchy')
        self.eps = float(eps)
        self._A = {}
        self._phi = {}
        J = hierarchy.J
        m = hierarchy[J].m
        self.lower = np.zeros(m)
        self.upper = np.ones(m)
        self._ell = np.zeros(m)

    def wind(self, xy):
        return np.stack([7.0 + 5.0 * xy[..., 1], -5.0 * xy[..., 0]], axis=-1)

    def source_phi(self, xy):
        # +2 inside three radius-0.2 disks in the left half, -1 on the
        # right half
        x, y = xy[..., 0], xy[..., 1]
        out = np.where(x > 0.0, -1.0, 0.0)
        for (cx, cy) in ((-0.5, 0.6), (-0.6, 0.0), (-0.5, -0.6)):
            out = np.where((x - cx)**2 + (y - cy)**2 < 0.2**2, 2.0, out)
        return out

    def _matrices(self, j):
        if j not in self._A:
            mesh = self.hierarchy[j]
            conn, grads, area = _tri_geometry(mesh)
            K = area * np.einsum('eak,ebk->eab', grads, grads)
            mid = _tri_midpoints(mesh, conn)       # (ne,3,2)
            Xq = self.wind(mid)
            # int (X.grad u) v with the 3-midpoint rule; basis a has value
            # 1/2 at the two midpoints of its adjacent edges, 0 opposite
            Nmid = np.array([[0.5, 0.0, 0.5],
                             [0.5, 0.5, 0.0],
                             [0.0, 0.5, 0.5]]).T   # [q, a]: value of a at mid q
            C = (area / 3.0) * np.einsum('eqk,ebk,qa->eab', Xq, grads, Nmid)
            blocks = self.eps * K + C
            self._A[j] = _coo_from_blocks(conn, blocks, mesh.m)
            phiq = self.source_phi(mid)            # (ne,3)
            contrib = (area / 3.0) * np.einsum('eq,qa->ea', phiq, Nmid)
            self._phi[j] = _scatter(conn, contrib, mesh.m)
        return self._A[j], self._phi[j]

    def _operator(self, j, u):
        A, phi = self._matrices(j)
        return A @ u - phi

    def _operator_jacobian(self, j, u):
        A, _ = self._matrices(j)
        return A.copy()


def make_advdiff2d_problem(hierarchy, eps=0.1):
    '''Box-constrained (0 <= u <= 1) linear advection-diffusion problem on
    (-1,1)^2 with rotational wind (7+5y, -5x) and zero Dirichlet data.'''
    return _AdvDiff2D(hierarchy, eps)


# -- shallow ice approximation --------------------------------------------

SIA_SECPERA = 31556926.0
SIA_N = 3.0
SIA_A = 1.0e-16                 # Pa^-3 a^-1
SIA_RHO = 910.0                 # kg m^-3
SIA_G = 9.81                    # m s^-2


def default_sia_gamma(n=SIA_N):
    return 2.0 * SIA_A * (SIA_RHO * SIA_G)**n / (n + 2.0)


def dome_profile(r, n=SIA_N, H0=3600.0, L=750.0e3):
    '''Steady flat-bed dome surface elevation at radius r (similarity
    solution of the steady shallow ice equation; zero outside r = L).'''
    r = np.asarray(r, dtype=float)
    p1 = n / (2.0 * n + 2.0)
    q1 = 1.0 + 1.0 / n
    Z = H0 / (1.0 - 1.0 / n)**p1
    s = np.clip(r / L, 0.0, 1.0)
    t = q1 * s - 1.0 / n + (1.0 - s)**q1 - s**q1
    return np.where(s < 1.0, Z * np.maximum(t, 0.0)**p1, 0.0)


def dome_smb(r, n=SIA_N, H0=3600.0, L=750.0e3, gamma=None):
    '''Surface mass balance (m/a) making the dome profile an exact steady
    state: a = -div(flux) of the profile, radial, extended past the margin
    by its limiting (negative) value.'''
    if gamma is None:
        gamma = default_sia_gamma(n)
    r = np.asarray(r, dtype=float)
    p1 = n / (2.0 * n + 2.0)
    q1 = 1.0 + 1.0 / n
    Z = H0 / (1.0 - 1.0 / n)**p1
    C = gamma * Z**(2.0 * n + 2.0) * (p1 / L)**n
    eps = 1e-8
    s = np.clip(r / L, eps, 1.0 - eps)
    tp = q1 * (1.0 - (1.0 - s)**(1.0 / n) - s**(1.0 / n))
    tpp = (q1 / n) * ((1.0 - s)**(1.0 / n - 1.0) - s**(1.0 / n - 1.0))
    u = np.abs(tp)**(n - 1.0) * tp
    return -C * (u / (L * s) + (n / L) * np.abs(tp)**(n - 1.0) * tpp)


class _SIAProblem(VIProblem):
    name = 'sia2d'
    admissibility_required = True
    initial_kind = 'lower'

    def __init__(self, hierarchy, n, gamma, bed, smb):
        super().__init__(hierarchy)
        if hierarchy.dims != 2 or hierarchy.element != 'Q1':
            raise ValueError('sia2d needs a 2D Q1 hierarchy')
        if n <= 1.0 or gamma <= 0.0:
            raise ValueError('need Glen exponent n > 1 and rate factor > 0')
        self.n = float(n)
        self.gamma = float(gamma)
        self.jac_delta = 1e-10
        # growing an ice sheet from the zero-ice state needs damped Newton:
        # cap surface-elevation steps at a physical scale (meters)
        self.newton_step_cap = 1.0e4
        J = hierarchy.J
        mesh = hierarchy[J]
        bed = np.asarray(bed, dtype=float)
        if bed.shape != (mesh.m,):
            raise ValueError('bed must be a finest-level nodal vector')
        self._bed = {J: bed}
        self.lower = bed.copy()
        self.upper = np.full(mesh.m, np.inf)
        self._geom = {}
        self._ell = self.mass_matrix(J) @ np.asarray(smb, dtype=float)
        self._ell[mesh.dirichlet_mask] = 0.0

    def bed(self, j):
        '''Bedrock at level j, coarsened by nodal injection.'''
        J = self.hierarchy.J
        if j not in self._bed:
            b = self._bed[J]
            for jj in range(J, j, -1):
                # subsample: same construction as transfer nodal injection
                b = self._subsample(jj, b)
                self._bed[jj - 1] = b
        return self._bed[j]

    def _subsample(self, j, v):
        coarse = self.hierarchy[j - 1]
        fine = self.hierarchy[j]
        nvxc = coarse.nverts[0]
        nvxf = fine.nverts[0]
        ii = np.arange(coarse.m)
        iy, ix = np.divmod(ii, nvxc)
        return v[2 * iy * nvxf + 2 * ix]

    def dirichlet_values(self, j):
        # surface pinned to bedrock on the outer boundary (no ice there)
        if j not in self._dirvals:
            g = np.zeros(self.hierarchy[j].m)
            mask = self.hierarchy[j].dirichlet_mask
            g[mask] = self.bed(j)[mask]
            self._dirvals[j] = g
        return self._dirvals[j]

    def _geometry(self, j):
        if j not in self._geom:
            self._geom[j] = _quad_geometry(self.hierarchy[j])
        return self._geom[j]

    def _check_admissible(self, j, s):
        b = self.bed(j)
        scale = 1.0 + np.abs(b).max()
        if np.any(s - b < -1e-9 * scale):
            raise InadmissibleIterateError(
                'shallow ice operator evaluated at surface below bedrock '
                '(level %d, worst violation %.3e)' % (j, (s - b).min()))

    def _qp_fields(self, j, s):
        conn, N, dN, wq = self._geometry(j)
        b = self.bed(j)
        He = (s - b)[conn]                       # (ne,4)
        Hq = np.maximum(He @ N.T, 0.0)           # (ne,nq) thickness at qp
        se = s[conn]
        gq = np.einsum('ea,qak->eqk', se, dN)    # (ne,nq,2) surface gradient
        return conn, N, dN, wq, Hq, gq

    def _operator(self, j, s):
        if self.admissibility_required:
            self._check_admissible(j, s)
        conn, N, dN, wq, Hq, gq = self._qp_fields(j, s)
        n = self.n
        g2 = np.einsum('eqk,eqk->eq', gq, gq)
        coeff = self.gamma * Hq**(n + 2.0) * g2**(0.5 * (n - 1.0))
        flux = coeff[..., None] * gq             # (ne,nq,2)
        contrib = np.einsum('q,eqk,qak->ea', wq, flux, dN)
        return _scatter(conn, contrib, self.hierarchy[j].m)

    def _operator_jacobian(self, j, s):
        if self.admissibility_required:
            self._check_admissible(j, s)
        conn, N, dN, wq, Hq, gq = self._qp_fields(j, s)
        n = self.n
        d2 = self.jac_delta**2
        g2 = np.einsum('eqk,eqk->eq', gq, gq) + d2
        w1 = self.gamma * Hq**(n + 2.0) * g2**(0.5 * (n - 1.0))
        w2 = self.gamma * (n + 2.0) * Hq**(n + 1.0) * g2**(0.5 * (n - 1.0))
        w3 = self.gamma * Hq**(n + 2.0) * (n - 1.0) * g2**(0.5 * (n - 3.0))
        # dflux/ds_b = w2 N_b g + w1 dN_b + w3 (g . dN_b) g
        gdNb = np.einsum('eqk,qbk->eqb', gq, dN)
        term = (np.einsum('eq,qb,eqk->eqbk', w2, N, gq)
                + np.einsum('eq,qbk->eqbk', w1, dN)
                + np.einsum('eq,eqb,eqk->eqbk', w3, gdNb, gq))
        blocks = np.einsum('q,eqbk,qak->eab', wq, term, dN)
        return _coo_from_blocks(conn, blocks, self.hierarchy[j].m)


def default_sia_bed(xy, L=1800.0e3):
    '''Bumpy synthetic bedrock, C^1, elevation range 1800 m.'''
    x, y = xy[:, 0] / L, xy[:, 1] / L
    b = (400.0 * np.sin(4.0 * np.pi * x) * np.sin(3.0 * np.pi * y)
         + 300.0 * np.sin(6.0 * np.pi * x + 0.7) * np.sin(5.0 * np.pi * y + 1.1)
         + 200.0 * np.sin(10.0 * np.pi * x) * np.cos(8.0 * np.pi * y))
    return b


def make_sia_problem(hierarchy, n=SIA_N, gamma=None, bed=None, smb=None):
    '''Steady shallow-ice surface elevation problem on a 2D Q1 hierarchy.

    bed: finest-level nodal bedrock (default: bumpy synthetic map).
    smb: finest-level nodal surface mass balance in m/a (default: the
    radial dome function centered in the domain); turned into a dual
    vector with the mass matrix.'''
    if gamma is None:
        gamma = default_sia_gamma(n)
    xy = hierarchy[hierarchy.J].coords()
    if bed is None:
        Lx = hierarchy.domain.hi[0] - hierarchy.domain.lo[0]
        bed = default_sia_bed(xy, L=Lx)
    if smb is None:
        cx = 0.5 * (hierarchy.domain.lo[0] + hierarchy.domain.hi[0])
        cy = 0.5 * (hierarchy.domain.lo[1] + hierarchy.domain.hi[1])
        r = np.hypot(xy[:, 0] - cx, xy[:, 1] - cy)
        smb = dome_smb(r, n=n, gamma=gamma)
    return _SIAProblem(hierarchy, n, gamma, bed, smb)


# -- diagnostics ----------------------------------------------------------

def rediscretization_gap(problem, plan, j, u):
    '''Two-level consistency diagnostic: compare the restricted fine
    residual R f^j(u) with the re-discretized coarse residual
    f^{j-1}(injected u), on non-Dirichlet rows.  Returned (reported, not
    asserted) as a relative max-norm gap.'''
    rf = plan.restrict_dual(j, problem.residual(j, u))
    rc = problem.residual(j - 1, plan.inject(j, u))
    free = ~problem.dirichlet_mask(j - 1)
    scale = max(np.abs(rf[free]).max(), np.abs(rc[free]).max(), 1e-300)
    return float(np.abs(rf[free] - rc[free]).max() / scale)
