"""Nodal coefficient vectors and the small algebra the cycles need.

Primal iterates and dual vectors are plain numpy arrays of finite values,
one entry per vertex.  Obstacles are extended-real arrays where -inf/+inf
mark absent bounds.  Differences of extended values never go through raw
floating-point subtraction; ext_sub resolves the inf - inf forms by
explicit branching (finite-or-larger minus -inf is +inf, -inf minus
anything is -inf, and dually).
"""

import numpy as np

__all__ = ['clamp', 'admissible', 'ext_sub', 'check_obstacle_pair']


def clamp(v, lo, hi):
    '''Nodewise projection of v into [lo, hi]; entries already inside are
    returned unchanged.  lo, hi may contain +-inf.'''
    v, lo, hi = np.asarray(v), np.asarray(lo), np.asarray(hi)
    if v.shape != lo.shape or v.shape != hi.shape:
        raise ValueError('level mismatch: %s vs %s, %s'
                         % (v.shape, lo.shape, hi.shape))
    return np.minimum(np.maximum(v, lo), hi)


def admissible(v, lo, hi, dirichlet_mask=None, dirichlet_values=None,
               tol=0.0):
    '''True iff lo - tol <= v <= hi + tol nodewise, and |v - g| <= tol on
    Dirichlet vertices when a mask/value pair is given.'''
    v = np.asarray(v)
    ok = np.all(v >= lo - tol) and np.all(v <= hi + tol)
    if ok and dirichlet_mask is not None:
        ok = bool(np.all(np.abs(v[dirichlet_mask]
                                - dirichlet_values[dirichlet_mask]) <= tol))
    return bool(ok)


def ext_sub(a, b):
    '''Extended-real a - b with explicit branching:
        a - (-inf) = +inf for finite or +inf a,
        (-inf) - b = -inf for any b,
    and the dual rules for +inf.  The two indeterminate forms take the
    value of the a operand (-inf - (-inf) = -inf, +inf - +inf = +inf),
    which is the rule the defect-constraint ladder needs; no NaN can be
    produced.'''
    a, b = np.broadcast_arrays(np.asarray(a, dtype=float),
                               np.asarray(b, dtype=float))
    aneg, apos = np.isneginf(a), np.isposinf(a)
    bneg, bpos = np.isneginf(b), np.isposinf(b)
    fin = ~(aneg | apos | bneg | bpos)
    out = np.empty(a.shape)
    out[fin] = a[fin] - b[fin]
    out[bneg] = np.inf
    out[bpos] = -np.inf
    out[aneg] = -np.inf
    out[apos] = np.inf
    return out


def check_obstacle_pair(lo, hi):
    '''Validate an obstacle pair: lo < +inf, hi > -inf, lo <= hi nodewise.'''
    lo, hi = np.asarray(lo), np.asarray(hi)
    if np.any(np.isposinf(lo)) or np.any(np.isneginf(hi)):
        raise ValueError('lower obstacle must be < +inf and upper > -inf')
    if np.any(lo > hi):
        raise ValueError('obstacles must satisfy lo <= hi nodewise')
