import os

import numpy as np
import pytest

from fascd.cli import (main, make_parser, run_experiment, build_problem,
                       read_raster, export_fields, mcp_labels, _parse_levels,
                       PRESETS)


def run_args(tmp_path, extra):
    ap = make_parser()
    return ap.parse_args(extra + ['--out-dir', str(tmp_path)])


def test_parse_levels():
    assert _parse_levels('4') == [4]
    assert _parse_levels('3-6') == [3, 4, 5, 6]
    assert _parse_levels('3..5') == [3, 4, 5]
    with pytest.raises(Exception):
        _parse_levels('6-3')


def test_read_raster_roundtrip(tmp_path):
    path = tmp_path / 'bed.txt'
    vals = np.arange(12.0)
    path.write_text('4 3\n' + '\n'.join(str(v) for v in vals))
    counts, out = read_raster(str(path))
    assert counts == [4, 3]
    assert np.array_equal(out, vals)
    # comma-separated works too
    path.write_text('4,3\n' + ','.join(str(v) for v in vals))
    counts, out = read_raster(str(path))
    assert np.array_equal(out, vals)
    path.write_text('4 4\n' + ' '.join(str(v) for v in vals))
    with pytest.raises(ValueError):
        read_raster(str(path))


def test_run_experiment_outputs(tmp_path):
    args = run_args(tmp_path, ['--problem', 'plap1d', '--levels', '2',
                               '--mode', 'vcycle', '--rtol', '1e-8',
                               '--krylov-method', 'lu'])
    status, rows = run_experiment(args)
    assert status == 0
    assert rows[0]['converged'] == 1
    assert (tmp_path / 'iterations.csv').exists()
    manifest = (tmp_path / 'manifest.txt').read_text()
    settings = dict(line.split('=', 1)
                    for line in manifest.strip().splitlines())
    for key in ('problem', 'mode', 'levels', 'coarse', 'down', 'up',
                'rampv', 'atol', 'rtol', 'stol', 'max_cycles',
                'krylov_iters', 'krylov_method', 'preconditioner',
                'newton_iters', 'line_search', 'coarse_newton_max',
                'coarse_rtol', 'export', 'seed', 'quadrature'):
        assert key in settings, key
    assert settings['problem'] == 'plap1d'
    assert settings['krylov_method'] == 'lu'


def test_run_experiment_deterministic(tmp_path):
    argv = ['--problem', 'ball', '--levels', '1-2', '--mode', 'vcycle',
            '--rtol', '1e-8']
    outs = []
    for sub in ('a', 'b'):
        d = tmp_path / sub
        status, rows = run_experiment(run_args(d, argv))
        assert status == 0
        lines = (d / 'iterations.csv').read_text().splitlines()
        # every field except wall time must be bit-identical across runs
        outs.append([','.join(ln.split(',')[:-1]) for ln in lines])
    assert outs[0] == outs[1]


def test_export_csv_grid(tmp_path):
    args = run_args(tmp_path, ['--problem', 'ball', '--levels', '2',
                               '--rtol', '1e-8', '--export', 'csv-grid'])
    status, _ = run_experiment(args)
    assert status == 0
    path = tmp_path / 'fields_ball_level2.csv'
    lines = path.read_text().splitlines()
    nx, ny = [int(v) for v in lines[1].split(',')[:2]]
    assert lines[2].split(',') == ['solution', 'lower', 'upper', 'label',
                                   'rss']
    assert len(lines) == 3 + nx * ny


def test_export_vtk(tmp_path):
    args = run_args(tmp_path, ['--problem', 'spiral', '--levels', '1',
                               '--rtol', '1e-8', '--export', 'vtk-legacy'])
    status, _ = run_experiment(args)
    assert status == 0
    text = (tmp_path / 'fields_spiral_level1.vtk').read_text()
    assert 'STRUCTURED_POINTS' in text
    assert 'SCALARS solution double 1' in text


def test_vtk_rejects_1d():
    problem = build_problem('plap1d', 1)
    w = problem.natural_initial(1, *problem.obstacles())
    with pytest.raises(ValueError):
        export_fields(problem, w, '/tmp/nope', 'vtk-legacy')


def test_mcp_labels():
    from fascd.cycle import solve, default_config
    problem = build_problem('ball', 2)
    w, st = solve(problem, cfg=default_config(problem, rtol=1e-10))
    assert st.converged
    labels = mcp_labels(problem, w, problem.ell())
    assert set(np.unique(labels)) <= {0, 1, 2, 3, 4}
    assert np.any(labels == 1)          # contact region exists
    J = problem.hierarchy.J
    assert np.all(labels[problem.dirichlet_mask(J)] == 4)


def test_preset_expansion_and_override(tmp_path):
    # presets expand to flags; explicit flags afterwards win
    ap = make_parser()
    argv = PRESETS['advdiff-bench'] + ['--levels', '1']
    args = ap.parse_args(argv)
    assert args.problem == 'advdiff2d'
    assert args.mode == 'fmg'
    assert args.levels == [1]


def test_main_end_to_end(tmp_path, capsys):
    status = main(['--problem', 'plap1d', '--levels', '2', '--mode', 'fmg',
                   '--krylov-method', 'lu', '--rtol', '1e-8',
                   '--out-dir', str(tmp_path)])
    assert status == 0
    out = capsys.readouterr().out
    assert 'level  2' in out and 'converged' in out


def test_sia_bed_raster(tmp_path):
    # a custom flat bed supplied as a raster file
    from fascd.mesh import Domain, build_hierarchy
    hier = build_hierarchy(Domain((0.0, 0.0), (1.8e6, 1.8e6)), 20, 1,
                           element='Q1')
    n = hier[1].nverts[0]
    path = tmp_path / 'bed.txt'
    path.write_text('%d %d\n' % (n, n)
                    + '\n'.join(['0.0'] * hier[1].m))
    problem = build_problem('sia2d', 1, bed_file=str(path))
    assert np.all(problem.bed(1) == 0.0)
    with pytest.raises(ValueError):
        build_problem('sia2d', 2, bed_file=str(path))
