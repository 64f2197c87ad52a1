"""Multilevel full-approximation constraint-decomposition solver for
box-constrained variational inequalities on structured grids."""

from .mesh import Domain, MeshLevel, MeshHierarchy, build_hierarchy
from .nodal import clamp, admissible, ext_sub
from .transfer import TransferPlan
from .constraints import (DefectLadder, finest_defects, build_ladder,
                          check_ordering)
from .linalg import KrylovConfig, linear_solve, ic0, ilu0
from .smoother import SmootherConfig, fb_residual, active_sets, smooth, \
    coarse_solve
from .cycle import (CycleConfig, SolveStats, vcycle, solve, rs_solve, fmg,
                    fas_source, semi_smooth_norm, default_config)
from .problems import (VIProblem, InadmissibleIterateError,
                       make_ball_problem, make_spiral_problem,
                       make_plap1d_problem, make_advdiff2d_problem,
                       make_sia_problem, ball_exact_solution,
                       dome_profile, dome_smb)

__version__ = '0.1.0'
