"""Reduced-space Newton smoother and coarse-level solver.

The smoother acts on a correction variable c with box bounds lo <= c <= hi
around a frozen base iterate: the level equation is
F(c) = f^j(base + c) - ell = 0 subject to the bounds.  One smoothing
application is one projected reduced-space Newton step: classify each
unknown as active (at a bound with the residual pushing outward) or
inactive, solve the Jacobian system with active rows and columns masked to
the identity by a fixed small number of preconditioned Krylov iterations,
and project the update back into the bounds.  Dirichlet vertices are
permanently active with zero correction.

The coarse-level solver is the same Newton iteration with sparse direct
linear solves, run to convergence of the semi-smooth residual.
"""

import numpy as np
import scipy.sparse as sp

from .linalg import KrylovConfig, linear_solve, ic0, ilu0
from .nodal import clamp

__all__ = ['SmootherConfig', 'fb_residual', 'active_sets',
           'rs_newton_step', 'smooth', 'coarse_solve']


class SmootherConfig:
    '''Settings shared by the level smoothers and the coarse solver.

    krylov: KrylovConfig for level smoothing (default: 3 iterations,
    CG+IC0 for symmetric problems is chosen by the caller via `method`).
    newton_iters: projected Newton steps per smoother application.
    line_search: projected backtracking on the Newton step (for the
    strongly nonlinear problems; off by default).
    coarse_newton_max / coarse_rtol: coarse-level Newton controls.
    '''

    def __init__(self, krylov=None, newton_iters=1, line_search=False,
                 coarse_newton_max=50, coarse_rtol=1e-12):
        self.krylov = krylov if krylov is not None else KrylovConfig()
        self.newton_iters = int(newton_iters)
        if self.newton_iters < 1:
            raise ValueError('need at least one Newton step per smooth')
        self.line_search = bool(line_search)
        self.coarse_newton_max = int(coarse_newton_max)
        self.coarse_rtol = float(coarse_rtol)


def fb_residual(F, x, lo, hi):
    '''Semi-smooth residual of the box VI "F(x) = 0 subject to
    lo <= x <= hi": the larger of the two Fischer-Burmeister values
    phi(x - lo, F) and phi(hi - x, -F), with phi(a, b) = a + b -
    sqrt(a^2 + b^2).  Entrywise zero exactly at points satisfying the
    complementarity conditions.  An infinite bound reduces its side to
    the plain residual (the a -> +inf limit of phi).'''
    F = np.asarray(F, dtype=float)
    x = np.asarray(x, dtype=float)
    has_lo = np.isfinite(lo)
    has_hi = np.isfinite(hi)
    side_lo = F.copy()
    if np.any(has_lo):
        a = x[has_lo] - lo[has_lo]
        Fl = F[has_lo]
        side_lo[has_lo] = a + Fl - np.sqrt(a * a + Fl * Fl)
    side_hi = -F
    if np.any(has_hi):
        b = hi[has_hi] - x[has_hi]
        Fh = F[has_hi]
        side_hi[has_hi] = b - Fh - np.sqrt(b * b + Fh * Fh)
    return np.maximum(side_lo, side_hi)


def active_sets(F, x, lo, hi, dirichlet_mask=None):
    '''Bound-active classification: lower-active where x sits on the lower
    bound and F pushes upward (F > 0 would hold at a solution there),
    upper-active dually.  Comparisons are exact: iterates are projected
    onto the bounds, so active entries equal them bitwise.  Dirichlet
    vertices are always counted active.'''
    lower = (x <= lo) & (F > 0.0)
    upper = (x >= hi) & (F < 0.0)
    active = lower | upper
    if dirichlet_mask is not None:
        active = active | dirichlet_mask
    return active, lower, upper


def _masked_system(A, active):
    '''Mask active rows and columns to the identity: D_i A D_i + D_a with
    D_i = diag(inactive), D_a = diag(active).  Preserves symmetry of the
    inactive block and keeps a structurally-nonzero diagonal.'''
    inact = (~active).astype(float)
    Di = sp.diags(inact)
    Am = (Di @ A @ Di).tocsr() + sp.diags(active.astype(float))
    # degenerate operators (e.g. zero ice thickness) can leave an inactive
    # row identically zero; give it a unit diagonal so the Newton step
    # there reduces to a plain residual step
    zero_diag = (Am.diagonal() == 0.0)
    if np.any(zero_diag):
        Am = Am + sp.diags(zero_diag.astype(float))
    return Am.tocsr()


def _level_residual(problem, j, ell, base, c):
    return problem.residual(j, base + c) - ell


def rs_newton_step(problem, j, ell, lo, hi, base, c, kcfg,
                   line_search=False):
    '''One projected reduced-space Newton step on the correction c.
    Returns the updated (projected, in-bounds) correction.'''
    F = _level_residual(problem, j, ell, base, c)
    dmask = problem.dirichlet_mask(j)
    active, _, _ = active_sets(F, c, lo, hi, dmask)
    A = problem.jacobian(j, base + c)
    Am = _masked_system(A, active)
    rhs = np.where(active, 0.0, -F)
    d, _ = linear_solve(Am, rhs, kcfg)
    # doubly-degenerate operators (zero ice thickness) produce Newton
    # directions many orders of magnitude too long for any backtracking
    # schedule to recover; problems declare a physical per-step cap and the
    # direction is rescaled to it (plain damped Newton / trust region)
    cap = getattr(problem, 'newton_step_cap', None)
    if cap is not None:
        dmax = np.abs(d).max()
        if dmax > cap:
            d = d * (cap / dmax)
    full = clamp(c + d, lo, hi)
    if not line_search:
        return full
    # projected quadratic backtracking with an Armijo decrease demand on
    # the semi-smooth residual (the raw residual stays legitimately
    # nonzero on bound-active rows, so it is not a valid merit function
    # near a constrained solution)
    fnorm = np.linalg.norm(fb_residual(F, c, lo, hi))
    t = 1.0
    trial = full
    best = None
    best_norm = np.inf
    for k in range(10):
        Ft = _level_residual(problem, j, ell, base, trial)
        tnorm = np.linalg.norm(fb_residual(Ft, trial, lo, hi))
        if np.all(np.isfinite(Ft)):
            if tnorm <= (1.0 - 1e-4 * t) * fnorm:
                return trial
            if tnorm < best_norm:
                best, best_norm = trial, tnorm
        t *= 0.5
        trial = clamp(c + t * d, lo, hi)
    # no damped step met the Armijo decrease.  Pure backtracking stagnates
    # on degenerate operators (the residual can rise before Newton's fast
    # local phase kicks in), so allow a bounded nonmonotone step: the best
    # trial seen, as long as it does not grow the residual by more than a
    # fixed factor; a runaway direction makes no step at all.
    if best_norm <= 10.0 * fnorm:
        return best
    return c


def smooth(problem, j, ell, lo, hi, base, c, sweeps, cfg):
    '''Apply the reduced-space Newton smoother `sweeps` times (each
    application is cfg.newton_iters projected Newton steps).'''
    for _ in range(sweeps * cfg.newton_iters):
        c = rs_newton_step(problem, j, ell, lo, hi, base, c, cfg.krylov,
                           line_search=cfg.line_search)
    return c


def coarse_solve(problem, j, ell, lo, hi, base, c, cfg):
    '''Solve the level-j correction VI to convergence: projected Newton
    with sparse direct linear solves, stopping when the semi-smooth
    residual drops by coarse_rtol (or below a tiny absolute floor).
    Returns (c, iterations).'''
    lu = KrylovConfig(method='lu')
    F = _level_residual(problem, j, ell, base, c)
    dmask = problem.dirichlet_mask(j)
    free = ~dmask
    r0 = np.linalg.norm(fb_residual(F, c, lo, hi)[free])
    tol = max(cfg.coarse_rtol * r0, 1e-50)
    it = 0
    while it < cfg.coarse_newton_max:
        if np.linalg.norm(fb_residual(F, c, lo, hi)[free]) <= tol:
            break
        c = rs_newton_step(problem, j, ell, lo, hi, base, c, lu,
                           line_search=cfg.line_search)
        F = _level_residual(problem, j, ell, base, c)
        it += 1
    return c, it
