"""Defect constraints and the level-defect-constraint (LDC) ladder.

From an admissible finest-level iterate w, the finest defects are
chi_lo = gamma_lo - w and chi_hi = gamma_hi - w.  Coarser LDCs come from
the monotone injections (max for lower, min for upper), and the LDC
differences phi^j = chi^j - P chi^{j-1} bound the downward corrections.
The chain chi_lo^J <= ... <= chi_lo^0 <= 0 <= chi_hi^0 <= ... <= chi_hi^J
holds by construction and is checked exactly (tolerance zero).
"""

import numpy as np

from .nodal import ext_sub

__all__ = ['DefectLadder', 'finest_defects', 'build_ladder', 'check_ordering']


class DefectLadder:
    '''Per-level bound pairs for one V-cycle.

    chi_lo[j], chi_hi[j] bound the upward corrections z^j (sets U^j);
    phi_lo[j], phi_hi[j] bound the downward corrections y^j (sets D^j) for
    j >= 1.  phi^0 is identically chi^0 and is not stored separately.
    Built once per V-cycle; read-only afterwards.
    '''

    def __init__(self, chi_lo, chi_hi, phi_lo, phi_hi):
        self.chi_lo = chi_lo
        self.chi_hi = chi_hi
        self.phi_lo = phi_lo      # phi_lo[0] is chi_lo[0] (same array)
        self.phi_hi = phi_hi

    @property
    def nlevels(self):
        return len(self.chi_lo)


def finest_defects(gamma_lo, gamma_hi, w):
    '''Finest-level defect constraints (gamma_lo - w, gamma_hi - w), with
    the infinity conventions gamma=-inf => chi_lo=-inf and
    gamma=+inf => chi_hi=+inf.  Requires w admissible.'''
    w = np.asarray(w, dtype=float)
    if np.any(w < gamma_lo) or np.any(w > gamma_hi):
        raise ValueError('iterate is not admissible for the given obstacles')
    chi_lo = ext_sub(gamma_lo, w)
    chi_hi = ext_sub(gamma_hi, w)
    return chi_lo, chi_hi


def build_ladder(plan, chi_lo_J, chi_hi_J, debug_check=False, top=None):
    '''Build the LDC ladder from the defects at level `top` (default: the
    finest level) by descending monotone injection, with
    phi^j = chi^j - P chi^{j-1} (infinite chi^j entries propagate to phi^j
    regardless of the coarser value).'''
    J = plan.hierarchy.J if top is None else top
    chi_lo = [None] * (J + 1)
    chi_hi = [None] * (J + 1)
    phi_lo = [None] * (J + 1)
    phi_hi = [None] * (J + 1)
    chi_lo[J], chi_hi[J] = chi_lo_J, chi_hi_J
    for j in range(J, 0, -1):
        chi_lo[j - 1] = plan.inject_max(j, chi_lo[j])
        chi_hi[j - 1] = plan.inject_min(j, chi_hi[j])
        phi_lo[j] = ext_sub(chi_lo[j], plan.prolong(j, chi_lo[j - 1]))
        phi_hi[j] = ext_sub(chi_hi[j], plan.prolong(j, chi_hi[j - 1]))
    phi_lo[0] = chi_lo[0]
    phi_hi[0] = chi_hi[0]
    ladder = DefectLadder(chi_lo, chi_hi, phi_lo, phi_hi)
    if debug_check:
        assert check_ordering(plan, ladder), 'LDC ordering violated'
    return ladder


def check_ordering(plan, ladder):
    '''True iff the ordering chain holds nodally, comparing coarser LDCs
    after prolongation to the ladder's top level.  Exact comparison: all
    the operations involved are max/min and monotone-rounded weighted
    means of shared values.'''
    J = ladder.nlevels - 1
    lo_prev = None
    hi_prev = None
    for j in range(J, -1, -1):
        lo = plan.prolong_to_finest(j, ladder.chi_lo[j], top=J)
        hi = plan.prolong_to_finest(j, ladder.chi_hi[j], top=J)
        if np.any(lo > 0.0) or np.any(hi < 0.0):
            return False
        if lo_prev is not None and (np.any(lo < lo_prev) or
                                    np.any(hi > hi_prev)):
            return False
        lo_prev, hi_prev = lo, hi
    return True
