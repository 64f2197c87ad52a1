"""Experiment command line: run the example problems over a range of
levels and write iteration statistics, a run manifest, and optional field
exports.

Examples:
    fascd --problem plap1d --levels 3-10 --mode fmg
    fascd --problem ball --levels 8 --mode vcycle --rtol 1e-12 \
          --atol 1e-12 --stol 1e-12
    fascd --preset plap1d-bench --out-dir out/

Outputs in --out-dir: iterations.csv (one row per level: level, unknowns,
cycle count, final semi-smooth residual norm, rate, wall time), manifest.txt
(flat key=value echo of every resolved setting), and per-level field files
when --export is csv-grid or vtk-legacy.
"""

import argparse
import csv
import os
import sys
import time

import numpy as np

from . import cycle as _cycle
from .linalg import KrylovConfig
from .mesh import Domain, build_hierarchy
from .smoother import SmootherConfig, fb_residual, active_sets
from .transfer import TransferPlan
from . import problems as _problems

__all__ = ['main', 'run_experiment', 'export_fields']

PROBLEMS = ('ball', 'spiral', 'plap1d', 'advdiff2d', 'sia2d')
MODES = ('vcycle', 'fmg', 'rs-only', 'v10', 'v01')

_DOMAINS = {
    'ball': (Domain((-2.0, -2.0), (2.0, 2.0)), 'P1', 5),
    'spiral': (Domain((-1.0, -1.0), (1.0, 1.0)), 'P1', 5),
    'plap1d': (Domain(-3.0, 3.0), 'P1', 6),
    'advdiff2d': (Domain((-1.0, -1.0), (1.0, 1.0)), 'P1', 15),
    'sia2d': (Domain((0.0, 0.0), (1.8e6, 1.8e6)), 'Q1', 20),
}

PRESETS = {
    'plap1d-bench': ['--problem', 'plap1d', '--levels', '3-10', '--mode', 'fmg',
               '--newton-iters', '3', '--krylov-method', 'lu',
               '--line-search', 'on', '--rtol', '1e-6',
               '--atol', '1e-12', '--stol', '1e-12'],
    'ball-bench': ['--problem', 'ball', '--levels', '5-8',
                    '--mode', 'vcycle', '--atol', '1e-12',
                    '--rtol', '1e-12', '--stol', '1e-12'],
    'spiral-bench': ['--problem', 'spiral', '--levels', '8',
                      '--mode', 'vcycle', '--atol', '1e-12',
                      '--rtol', '1e-12', '--stol', '1e-12'],
    'advdiff-bench': ['--problem', 'advdiff2d', '--levels', '1-5',
               '--mode', 'fmg', '--newton-iters', '2',
               '--rtol', '1e-5', '--atol', '1e-9', '--stol', '1e-9'],
    'sia': ['--problem', 'sia2d', '--levels', '4', '--mode', 'fmg',
            '--newton-iters', '4', '--line-search', 'on',
            '--coarse-newton-max', '400',
            '--rtol', '2e-4', '--atol', '1e-8', '--stol', '1e-8'],
}


def _parse_levels(text):
    text = text.replace('..', '-')
    if '-' in text:
        a, b = text.split('-', 1)
        lo, hi = int(a), int(b)
        if lo > hi:
            raise argparse.ArgumentTypeError('bad level range %r' % text)
        return list(range(lo, hi + 1))
    return [int(text)]


def read_raster(path):
    '''Nodal raster file: header line with per-axis vertex counts
    ("nx ny" or "nx,ny"), then row-major values (any whitespace/comma
    separation).'''
    with open(path) as fh:
        header = fh.readline().replace(',', ' ').split()
        counts = [int(c) for c in header]
        body = fh.read().replace(',', ' ')
    vals = np.fromiter((float(v) for v in body.split()), dtype=float)
    n = int(np.prod(counts))
    if vals.size != n:
        raise ValueError('raster %s: %d values, header promises %d'
                         % (path, vals.size, n))
    return counts, vals


def build_problem(name, J, coarse=None, bed_file=None, smb_file=None):
    domain, element, default_coarse = _DOMAINS[name]
    nc = default_coarse if coarse is None else coarse
    hier = build_hierarchy(domain, nc, J, element=element)
    if name == 'ball':
        return _problems.make_ball_problem(hier)
    if name == 'spiral':
        return _problems.make_spiral_problem(hier)
    if name == 'plap1d':
        return _problems.make_plap1d_problem(hier)
    if name == 'advdiff2d':
        return _problems.make_advdiff2d_problem(hier)
    bed = smb = None
    m = hier[J].m
    if bed_file is not None:
        counts, bed = read_raster(bed_file)
        if bed.size != m:
            raise ValueError('bed raster does not match the finest mesh '
                             '(%d values, need %d)' % (bed.size, m))
    if smb_file is not None:
        counts, smb = read_raster(smb_file)
        if smb.size != m:
            raise ValueError('smb raster does not match the finest mesh')
    return _problems.make_sia_problem(hier, bed=bed, smb=smb)


def mcp_labels(problem, w, ell):
    '''Nodewise mixed-complementarity classification of a solution:
    0 inactive, 1 lower-active, 2 upper-active, 3 pinched (both bounds),
    4 Dirichlet.'''
    J = problem.hierarchy.J
    lo, hi = problem.obstacles()
    F = problem.residual(J, w) - ell
    _, lower, upper = active_sets(F, w, lo, hi)
    pinched = np.isfinite(lo) & np.isfinite(hi) & (lo == hi)
    labels = np.zeros(w.shape[0], dtype=int)
    labels[lower] = 1
    labels[upper] = 2
    labels[pinched] = 3
    labels[problem.dirichlet_mask(J)] = 4
    return labels


def export_fields(problem, w, path_base, fmt):
    '''Write nodal solution, obstacles, active-set labels, and the
    semi-smooth residual.  csv-grid: one CSV per run with a geometry
    header; vtk-legacy: ASCII structured-points VTK (2D only).'''
    J = problem.hierarchy.J
    mesh = problem.hierarchy[J]
    lo, hi = problem.obstacles()
    ell = problem.ell()
    F = problem.residual(J, w) - ell
    rss = fb_residual(F, w, lo, hi)
    labels = mcp_labels(problem, w, ell)
    fields = [('solution', w), ('lower', lo), ('upper', hi),
              ('label', labels.astype(float)), ('rss', rss)]
    dim = problem.hierarchy.dims
    nx = mesh.nverts[0]
    ny = mesh.nverts[1] if dim == 2 else 1
    x0 = mesh.domain.lo[0]
    y0 = mesh.domain.lo[1] if dim == 2 else 0.0
    dx = mesh.h[0]
    dy = mesh.h[1] if dim == 2 else 0.0
    written = []
    if fmt == 'csv-grid':
        path = path_base + '.csv'
        with open(path, 'w', newline='') as fh:
            wtr = csv.writer(fh)
            wtr.writerow(['nx', 'ny', 'x0', 'y0', 'dx', 'dy'])
            wtr.writerow([nx, ny, repr(x0), repr(y0), repr(dx), repr(dy)])
            wtr.writerow([name for name, _ in fields])
            for i in range(mesh.m):
                wtr.writerow([repr(float(arr[i])) for _, arr in fields])
        written.append(path)
    elif fmt == 'vtk-legacy':
        if dim != 2:
            raise ValueError('vtk-legacy export is 2D only')
        path = path_base + '.vtk'
        with open(path, 'w') as fh:
            fh.write('# vtk DataFile Version 3.0\n')
            fh.write('box-constrained VI solution\n')
            fh.write('ASCII\nDATASET STRUCTURED_POINTS\n')
            fh.write('DIMENSIONS %d %d 1\n' % (nx, ny))
            fh.write('ORIGIN %r %r 0\n' % (x0, y0))
            fh.write('SPACING %r %r 1\n' % (dx, dy))
            fh.write('POINT_DATA %d\n' % mesh.m)
            for name, arr in fields:
                fh.write('SCALARS %s double 1\nLOOKUP_TABLE default\n'
                         % name)
                finite = np.where(np.isfinite(arr), arr,
                                  np.sign(arr) * 1e300)
                fh.write('\n'.join(repr(float(v)) for v in finite))
                fh.write('\n')
        written.append(path)
    elif fmt != 'none':
        raise ValueError('unknown export format %r' % fmt)
    return written


def _config_from_args(args, problem):
    iters = args.krylov_iters
    method = args.krylov_method
    if method == 'auto':
        method = 'cg' if problem.symmetric else 'gmres'
    precond = {'cg': 'ic0', 'gmres': 'ilu0', 'lu': 'none'}[method]
    kcfg = KrylovConfig(method, iters, precond)
    if args.line_search == 'auto':
        ls = problem.admissibility_required
    else:
        ls = args.line_search == 'on'
    sm = SmootherConfig(krylov=kcfg, newton_iters=args.newton_iters,
                        line_search=ls,
                        coarse_newton_max=args.coarse_newton_max)
    down, up = args.down, args.up
    if args.mode == 'v10':
        down, up = 1, 0
    elif args.mode == 'v01':
        down, up = 0, 1
    return _cycle.CycleConfig(down=down, up=up, max_cycles=args.max_cycles,
                              atol=args.atol, rtol=args.rtol,
                              stol=args.stol, smoother=sm)


def run_experiment(args):
    '''Run one experiment over the requested levels; returns (exit status,
    list of per-level row dicts).'''
    os.makedirs(args.out_dir, exist_ok=True)
    rows = []
    manifest = {
        'problem': args.problem, 'mode': args.mode,
        'levels': ','.join(str(j) for j in args.levels),
        'coarse': args.coarse if args.coarse is not None
        else _DOMAINS[args.problem][2],
        'down': args.down, 'up': args.up, 'rampv': args.rampv,
        'atol': args.atol, 'rtol': args.rtol, 'stol': args.stol,
        'max_cycles': args.max_cycles, 'krylov_iters': args.krylov_iters,
        'newton_iters': args.newton_iters,
        'export': args.export, 'seed': args.seed,
        'quadrature': '2pt-gauss-1d/3-midpoint-tri/2x2-gauss-quad',
    }
    status = 0
    for J in args.levels:
        problem = build_problem(args.problem, J, coarse=args.coarse,
                                bed_file=args.bed, smb_file=args.smb)
        cfg = _config_from_args(args, problem)
        manifest.setdefault('krylov_method', cfg.smoother.krylov.method)
        manifest.setdefault('preconditioner',
                            cfg.smoother.krylov.preconditioner)
        manifest.setdefault('line_search', cfg.smoother.line_search)
        manifest.setdefault('coarse_newton_max',
                            cfg.smoother.coarse_newton_max)
        manifest.setdefault('coarse_rtol', cfg.smoother.coarse_rtol)
        t0 = time.perf_counter()
        if args.mode == 'fmg':
            w, stats = _cycle.fmg(problem, cfg=cfg, rampv=args.rampv)
            cycles = stats.post_ramp_cycles
        elif args.mode == 'rs-only':
            w, stats = _cycle.rs_solve(problem, cfg=cfg)
            cycles = stats.cycles
        else:
            w, stats = _cycle.solve(problem, cfg=cfg)
            cycles = stats.cycles
        wall = time.perf_counter() - t0
        if not stats.converged:
            status = 1
        row = {
            'level': J,
            'unknowns': problem.hierarchy[J].m,
            'cycles': cycles,
            'final_rss': stats.residual_norms[-1],
            'rate': stats.rate,
            'converged': int(stats.converged),
            'wall_seconds': wall,
        }
        rows.append(row)
        if args.export != 'none':
            base = os.path.join(args.out_dir, 'fields_%s_level%d'
                                % (args.problem, J))
            export_fields(problem, w, base, args.export)
    csv_path = os.path.join(args.out_dir, 'iterations.csv')
    with open(csv_path, 'w', newline='') as fh:
        wtr = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        wtr.writeheader()
        for row in rows:
            out = dict(row)
            out['final_rss'] = repr(row['final_rss'])
            out['rate'] = repr(row['rate'])
            out['wall_seconds'] = '%.3f' % row['wall_seconds']
            wtr.writerow(out)
    with open(os.path.join(args.out_dir, 'manifest.txt'), 'w') as fh:
        for key in sorted(manifest):
            fh.write('%s=%s\n' % (key, manifest[key]))
    return status, rows


def make_parser():
    ap = argparse.ArgumentParser(
        prog='fascd',
        description='Multilevel constraint-decomposition experiments on '
                    'box-constrained variational inequalities.')
    ap.add_argument('--problem', choices=PROBLEMS, default='ball')
    ap.add_argument('--levels', type=_parse_levels, default=[4],
                    help='refinement level or range, e.g. 5 or 3-10')
    ap.add_argument('--coarse', type=int, default=None,
                    help='coarse cells per axis (problem default if unset)')
    ap.add_argument('--mode', choices=MODES, default='vcycle')
    ap.add_argument('--down', type=int, default=1)
    ap.add_argument('--up', type=int, default=1)
    ap.add_argument('--rampv', type=int, default=1,
                    help='V-cycles per intermediate level in fmg mode')
    ap.add_argument('--atol', type=float, default=1e-50)
    ap.add_argument('--rtol', type=float, default=1e-8)
    ap.add_argument('--stol', type=float, default=1e-8)
    ap.add_argument('--max-cycles', type=int, default=100)
    ap.add_argument('--krylov-iters', type=int, default=3)
    ap.add_argument('--krylov-method',
                    choices=('auto', 'cg', 'gmres', 'lu'), default='auto')
    ap.add_argument('--newton-iters', type=int, default=1,
                    help='reduced-space Newton steps per smoother call')
    ap.add_argument('--line-search', choices=('auto', 'on', 'off'),
                    default='auto')
    ap.add_argument('--coarse-newton-max', type=int, default=50,
                    help='Newton iteration cap for the coarsest-level solve')
    ap.add_argument('--preset', choices=sorted(PRESETS), default=None)
    ap.add_argument('--out-dir', default='fascd-out')
    ap.add_argument('--export', choices=('none', 'csv-grid', 'vtk-legacy'),
                    default='none')
    ap.add_argument('--seed', type=int, default=0)
    ap.add_argument('--bed', default=None, help='SIA bedrock raster file')
    ap.add_argument('--smb', default=None,
                    help='SIA surface mass balance raster file')
    return ap


def main(argv=None):
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = make_parser()
    # a preset expands to a flag list, overridable by explicit flags later
    # on the command line
    pre = ap.parse_args(argv)
    if pre.preset is not None:
        argv = PRESETS[pre.preset] + argv
    args = ap.parse_args(argv)
    np.random.seed(args.seed)
    status, rows = run_experiment(args)
    for row in rows:
        print('level %2d  m=%-8d cycles=%-4d rate=%.3g  |r_ss|=%.3e  %s'
              % (row['level'], row['unknowns'], row['cycles'],
                 row['rate'], row['final_rss'],
                 'converged' if row['converged'] else 'NOT CONVERGED'))
    return status


if __name__ == '__main__':
    sys.exit(main())
