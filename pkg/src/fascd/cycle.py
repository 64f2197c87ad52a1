"""Multilevel constraint-decomposition cycles.

One V-cycle on a box-constrained VI: build the defect-constraint ladder
from the current (admissible) iterate, smooth downward corrections y^j in
the ladder's difference bounds while generating coarser states and sources
by full-approximation restriction, solve the coarsest correction VI, then
accumulate upward corrections z^j = y^j + P z^{j-1} smoothed in the
ladder's cumulative bounds.  Every level iterate stays admissible; the
finest update is w <- w + z^J.

Drivers: `solve` (repeated V-cycles with a three-clause stopping test on
the semi-smooth residual and the iterate increment) and `fmg` (nested
iteration: exact coarsest solve, then prolong-project and a fixed number
of V-cycles per new level).
"""

import os

import numpy as np

from .constraints import finest_defects, build_ladder, check_ordering
from .linalg import KrylovConfig
from .nodal import clamp, ext_sub
from .smoother import (SmootherConfig, smooth, coarse_solve, fb_residual)
from .transfer import TransferPlan

__all__ = ['CycleConfig', 'SolveStats', 'fas_source', 'vcycle', 'solve',
           'rs_solve', 'fmg', 'semi_smooth_norm', 'default_config']

DEBUG_ASSERT = bool(os.environ.get('FASCD_DEBUG_ASSERT'))


class CycleConfig:
    '''V-cycle and solver settings.

    down / up: smoother applications per level on the way down / up.
    max_cycles: V-cycle cap for `solve`.
    atol / rtol: absolute / relative tolerance on the 2-norm of the
    semi-smooth residual; stol: relative tolerance on the L2 norm of the
    iterate increment against the iterate.
    smoother: SmootherConfig (Krylov settings, line search, coarse solve).
    '''

    def __init__(self, down=1, up=1, max_cycles=100,
                 atol=1e-50, rtol=1e-8, stol=1e-8, smoother=None):
        if down < 0 or up < 0 or down + up == 0:
            raise ValueError('need down >= 0, up >= 0, down + up >= 1')
        self.down = int(down)
        self.up = int(up)
        self.max_cycles = int(max_cycles)
        self.atol = float(atol)
        self.rtol = float(rtol)
        self.stol = float(stol)
        self.smoother = smoother if smoother is not None else SmootherConfig()


def default_config(problem, down=1, up=1, krylov_iters=3, **kw):
    '''CycleConfig with the Krylov method matched to the problem:
    CG with incomplete Cholesky for symmetric Jacobians, otherwise GMRES
    with incomplete LU; line search for problems whose operator requires
    admissible iterates.'''
    if problem.symmetric:
        kcfg = KrylovConfig('cg', krylov_iters, 'ic0')
    else:
        kcfg = KrylovConfig('gmres', krylov_iters, 'ilu0')
    sm = SmootherConfig(krylov=kcfg,
                        line_search=problem.admissibility_required)
    return CycleConfig(down=down, up=up, smoother=sm, **kw)


class SolveStats:
    '''Per-solve record: residual-norm history, cycle count, stopping
    reason, asymptotic rate estimate, and the peak number of nodal-vector
    floats held by a cycle (vectors only; matrices are not counted).'''

    def __init__(self):
        self.residual_norms = []
        self.increments = []
        self.cycles = 0
        self.converged = False
        self.reason = 'max-cycles'
        self.coarse_iterations = []
        self.peak_vector_floats = 0
        self.post_ramp_cycles = 0

    @property
    def rate(self):
        '''Geometric mean residual reduction per cycle.'''
        r = self.residual_norms
        if len(r) < 2 or r[0] == 0.0:
            return 0.0
        k = len(r) - 1
        return float((r[-1] / r[0]) ** (1.0 / k))


def semi_smooth_norm(problem, w, ell, lo, hi, top=None):
    '''2-norm of the semi-smooth residual of the finest-level VI.'''
    j = problem.hierarchy.J if top is None else top
    F = problem.residual(j, w) - ell
    return float(np.linalg.norm(fb_residual(F, w, lo, hi)))


def fas_source(problem, plan, j, u, ell):
    '''Full-approximation coarse state and source from the level-j iterate
    u = w^j + y^j: w^{j-1} = injection of u, and the coarse source carries
    the restricted fine residual so that the coarse equation reproduces u
    when the fine residual vanishes.  Dirichlet rows are zeroed (the
    coarse correction is pinned to zero there).'''
    wc = plan.inject(j, u)
    ellc = problem.residual(j - 1, wc) + \
        plan.restrict_dual(j, ell - problem.residual(j, u))
    ellc[problem.dirichlet_mask(j - 1)] = 0.0
    return wc, ellc


def _count_floats(arrays):
    return sum(a.size for a in arrays if a is not None
               and isinstance(a, np.ndarray))


def vcycle(problem, plan, ell, gamma_lo, gamma_hi, w, cfg, top=None,
           stats=None):
    '''One V-cycle from admissible iterate w on level `top` (default:
    finest).  Returns the updated iterate.'''
    J = plan.hierarchy.J if top is None else top
    sm = cfg.smoother
    chi_lo, chi_hi = finest_defects(gamma_lo, gamma_hi, w)
    ladder = build_ladder(plan, chi_lo, chi_hi, debug_check=DEBUG_ASSERT,
                          top=J)
    ws = [None] * (J + 1)
    ells = [None] * (J + 1)
    ys = [None] * (J + 1)
    ws[J] = w
    ells[J] = ell

    def snapshot():
        if stats is None:
            return
        held = (ladder.chi_lo + ladder.chi_hi + ladder.phi_lo[1:]
                + ladder.phi_hi[1:] + ws + ells + ys
                + [gamma_lo, gamma_hi])
        stats.peak_vector_floats = max(stats.peak_vector_floats,
                                       _count_floats(held))

    # down phase; the difference bounds phi^j are dead after level j's
    # smoothing and are released to respect the storage bound
    for j in range(J, 0, -1):
        y = np.zeros_like(ws[j])
        y = smooth(problem, j, ells[j], ladder.phi_lo[j], ladder.phi_hi[j],
                   ws[j], y, cfg.down, sm)
        ys[j] = y
        snapshot()
        ladder.phi_lo[j] = None
        ladder.phi_hi[j] = None
        ws[j - 1], ells[j - 1] = fas_source(problem, plan, j, ws[j] + y,
                                            ells[j])
    snapshot()
    # coarsest correction VI in the cumulative bounds
    z = np.zeros_like(ws[0])
    z, its = coarse_solve(problem, 0, ells[0], ladder.chi_lo[0],
                          ladder.chi_hi[0], ws[0], z, sm)
    if stats is not None:
        stats.coarse_iterations.append(its)
    # up phase
    for j in range(1, J + 1):
        z = ys[j] + plan.prolong(j, z)
        # rounding safety: the exact-arithmetic containment y + P z in the
        # cumulative bounds can be off by an ulp
        z = clamp(z, ladder.chi_lo[j], ladder.chi_hi[j])
        ys[j] = None
        z = smooth(problem, j, ells[j], ladder.chi_lo[j], ladder.chi_hi[j],
                   ws[j], z, cfg.up, sm)
    wnew = w + z
    wnew = clamp(wnew, gamma_lo, gamma_hi)
    if DEBUG_ASSERT:
        from .nodal import admissible
        assert admissible(wnew, gamma_lo, gamma_hi)
    return wnew


def solve(problem, plan=None, w0=None, cfg=None, gamma_lo=None,
          gamma_hi=None, ell=None, r_ref=None, min_cycles=0):
    '''Repeated V-cycles on the finest level until the three-clause
    stopping test passes.  The relative residual clause compares against
    the initial residual, or against r_ref when given (nested iteration
    passes the natural-initial-iterate residual so that it targets the
    same accuracy as a from-scratch solve).  Returns (w, SolveStats).'''
    if plan is None:
        plan = TransferPlan(problem.hierarchy)
    if cfg is None:
        cfg = default_config(problem)
    J = problem.hierarchy.J
    if gamma_lo is None or gamma_hi is None:
        gamma_lo, gamma_hi = problem.obstacles()
    if ell is None:
        ell = problem.ell()
    if w0 is None:
        w = problem.natural_initial(J, gamma_lo, gamma_hi)
    else:
        w = np.asarray(w0, dtype=float).copy()
    stats = SolveStats()
    r0 = semi_smooth_norm(problem, w, ell, gamma_lo, gamma_hi)
    stats.residual_norms.append(r0)
    rr = r0 if r_ref is None else float(r_ref)
    for k in range(cfg.max_cycles):
        met = r0 <= cfg.atol or r0 <= cfg.rtol * rr
        if k >= min_cycles and met:
            stats.converged = True
            stats.reason = 'atol' if r0 <= cfg.atol else 'rtol'
            break
        wnew = vcycle(problem, plan, ell, gamma_lo, gamma_hi, w, cfg,
                      stats=stats)
        stats.cycles += 1
        rk = semi_smooth_norm(problem, wnew, ell, gamma_lo, gamma_hi)
        if met and rk > r0:
            # this cycle was only run to satisfy min_cycles and it moved
            # away from an iterate that already met the stopping test
            # (possible for degenerate operators); keep the better iterate
            stats.residual_norms.append(r0)
            stats.increments.append(0.0)
            stats.converged = True
            stats.reason = 'atol' if r0 <= cfg.atol else 'rtol'
            break
        stats.residual_norms.append(rk)
        dwn = problem.l2_norm(J, wnew - w)
        wn = problem.l2_norm(J, wnew)
        stats.increments.append(dwn)
        w = wnew
        r0 = rk
        if rk <= cfg.atol:
            stats.converged, stats.reason = True, 'atol'
            break
        if rk <= cfg.rtol * rr:
            stats.converged, stats.reason = True, 'rtol'
            break
        if wn > 0.0 and dwn <= cfg.stol * wn:
            stats.converged, stats.reason = True, 'stol'
            break
    return w, stats


def rs_solve(problem, cfg=None, w0=None):
    '''Single-level comparison solver: projected reduced-space Newton with
    sparse direct linear solves on the finest level, run under the same
    stopping test as `solve`.  Returns (w, SolveStats) with one "cycle"
    per Newton step.'''
    from .smoother import rs_newton_step
    if cfg is None:
        cfg = default_config(problem)
    J = problem.hierarchy.J
    g_lo, g_hi = problem.obstacles()
    ell = problem.ell()
    if w0 is None:
        w = problem.natural_initial(J, g_lo, g_hi)
    else:
        w = np.asarray(w0, dtype=float).copy()
    lu = KrylovConfig(method='lu')
    stats = SolveStats()
    r0 = semi_smooth_norm(problem, w, ell, g_lo, g_hi)
    stats.residual_norms.append(r0)
    for k in range(cfg.max_cycles):
        if stats.residual_norms[-1] <= cfg.atol:
            stats.converged, stats.reason = True, 'atol'
            break
        c = rs_newton_step(problem, J, ell, ext_sub(g_lo, w),
                           ext_sub(g_hi, w), w, np.zeros_like(w), lu,
                           line_search=cfg.smoother.line_search)
        wnew = clamp(w + c, g_lo, g_hi)
        stats.cycles += 1
        rk = semi_smooth_norm(problem, wnew, ell, g_lo, g_hi)
        stats.residual_norms.append(rk)
        dwn = problem.l2_norm(J, wnew - w)
        wn = problem.l2_norm(J, wnew)
        stats.increments.append(dwn)
        w = wnew
        if rk <= cfg.atol:
            stats.converged, stats.reason = True, 'atol'
            break
        if rk <= cfg.rtol * stats.residual_norms[0]:
            stats.converged, stats.reason = True, 'rtol'
            break
        if wn > 0.0 and dwn <= cfg.stol * wn:
            stats.converged, stats.reason = True, 'stol'
            break
    return w, stats


def fmg(problem, plan=None, cfg=None, rampv=1, final_to_tolerance=True):
    '''Nested iteration: solve the coarsest VI exactly, then on each finer
    level prolong, project into the injected obstacles, and run `rampv`
    V-cycles per intermediate level.  Coarse-level obstacles come from
    monotone injection of the finest ones and coarse sources from repeated
    canonical restriction.

    Ramp obstacles are coarsened by plain nodal injection (the coarse
    sets must be nonempty full-solution sets, so prolonged iterates are
    projected into the bounds rather than kept admissible by
    construction).  On the finest level the iterate is polished by
    ordinary V-cycling to the stopping test of `solve` (unless
    final_to_tolerance is False, in which case rampv cycles are run there
    too); the number of finest-level cycles is reported in
    stats.post_ramp_cycles.  Returns (w, SolveStats) with one residual
    norm recorded per level reached.'''
    if plan is None:
        plan = TransferPlan(problem.hierarchy)
    if cfg is None:
        cfg = default_config(problem)
    if rampv < 1:
        raise ValueError('rampv must be >= 1')
    J = problem.hierarchy.J
    g_lo, g_hi = problem.obstacles()
    ells = [None] * (J + 1)
    glo = [None] * (J + 1)
    ghi = [None] * (J + 1)
    ells[J], glo[J], ghi[J] = problem.ell(), g_lo, g_hi
    for j in range(J, 0, -1):
        ells[j - 1] = plan.restrict_dual(j, ells[j])
        ells[j - 1][problem.dirichlet_mask(j - 1)] = 0.0
        glo[j - 1] = plan.inject(j, glo[j])
        ghi[j - 1] = plan.inject(j, ghi[j])
    stats = SolveStats()
    # coarsest: solve the VI itself (as a correction from the natural
    # admissible initial iterate)
    base = problem.natural_initial(0, glo[0], ghi[0])
    c, its = coarse_solve(problem, 0, ells[0], ext_sub(glo[0], base),
                          ext_sub(ghi[0], base), base, np.zeros_like(base),
                          cfg.smoother)
    stats.coarse_iterations.append(its)
    w = base + c
    stats.residual_norms.append(
        semi_smooth_norm(problem, w, ells[0], glo[0], ghi[0], top=0))
    for j in range(1, J + 1):
        w = clamp(plan.prolong(j, w), glo[j], ghi[j])
        mask = problem.dirichlet_mask(j)
        w[mask] = problem.dirichlet_values(j)[mask]
        w = clamp(w, glo[j], ghi[j])
        if j == J and final_to_tolerance:
            break
        for _ in range(rampv):
            w = vcycle(problem, plan, ells[j], glo[j], ghi[j], w, cfg,
                       top=j, stats=stats)
            stats.cycles += 1
        stats.residual_norms.append(
            semi_smooth_norm(problem, w, ells[j], glo[j], ghi[j], top=j))
    if final_to_tolerance:
        # target the accuracy a from-scratch solve would reach: relative
        # tolerance against the natural initial iterate's residual, and at
        # least one polishing cycle
        wnat = problem.natural_initial(J, g_lo, g_hi)
        r_ref = semi_smooth_norm(problem, wnat, ells[J], g_lo, g_hi)
        w, tail = solve(problem, plan=plan, w0=w, cfg=cfg, r_ref=r_ref,
                        min_cycles=1)
        stats.residual_norms.extend(tail.residual_norms)
        stats.cycles += tail.cycles
        stats.post_ramp_cycles = tail.cycles
        stats.coarse_iterations.extend(tail.coarse_iterations)
        stats.converged, stats.reason = tail.converged, tail.reason
        stats.peak_vector_floats = max(stats.peak_vector_floats,
                                       tail.peak_vector_floats)
    else:
        stats.post_ramp_cycles = rampv
        stats.converged = True
        stats.reason = 'ramp'
    return w, stats
