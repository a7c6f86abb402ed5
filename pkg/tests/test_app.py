import csv
import json

import pytest

from app import build_parser, config_from_args, main
from src.errors import ConfigInvalid


def _read(path):
    return path.read_bytes()


def _rows(path):
    with open(path, newline='') as handle:
        return list(csv.reader(handle))


@pytest.fixture
def simulate_args(chain_path):
    return ['simulate', '--chain', str(chain_path('three_cycle')), '--seed', '42', '--n', '30', '--paths', '25']


def test_simulate_is_reproducible_across_workers(tmp_path, simulate_args):
    assert main(simulate_args + ['--out', str(tmp_path / 'a'), '--workers', '1']) == 0
    assert main(simulate_args + ['--out', str(tmp_path / 'b'), '--workers', '3']) == 0
    assert _read(tmp_path / 'a' / 'paths.csv') == _read(tmp_path / 'b' / 'paths.csv')
    first = json.loads((tmp_path / 'a' / 'manifest.json').read_text())
    second = json.loads((tmp_path / 'b' / 'manifest.json').read_text())
    assert first['config_hash'] == second['config_hash']
    assert first['verdict'] == 'pass'
    assert len(_rows(tmp_path / 'a' / 'paths.csv')) == 26


def test_manifest_replay_reproduces_outputs(tmp_path, simulate_args):
    assert main(simulate_args + ['--out', str(tmp_path / 'a')]) == 0
    assert main(['simulate', '--config', str(tmp_path / 'a' / 'manifest.json'), '--out', str(tmp_path / 'c')]) == 0
    assert _read(tmp_path / 'a' / 'paths.csv') == _read(tmp_path / 'c' / 'paths.csv')


def test_full_trajectories(tmp_path, simulate_args):
    assert main(simulate_args + ['--full', '--out', str(tmp_path / 'full')]) == 0
    rows = _rows(tmp_path / 'full' / 'trajectories.csv')
    assert rows[0] == ['seed', 'k', 'state', 'sum']
    assert len(rows) == 1 + 25 * 31


def test_flags_override_config_file(tmp_path, chain_path):
    config = tmp_path / 'config.json'
    config.write_text(json.dumps({'chain_file': str(chain_path('coin')), 'seed': 3, 'n': 5, 'paths': 10}))
    args = build_parser().parse_args(['simulate', '--config', str(config), '--n', '7', '--out', str(tmp_path / 'o')])
    experiment = config_from_args(args)
    assert experiment.n == 7
    assert experiment.paths == 10
    assert experiment.seed == 3


def test_missing_seed_is_invalid(tmp_path, chain_path):
    args = build_parser().parse_args(['simulate', '--chain', str(chain_path('coin')), '--out', str(tmp_path / 'o')])
    with pytest.raises(ConfigInvalid, match='seed'):
        config_from_args(args)
    assert main(['simulate', '--chain', str(chain_path('coin')), '--out', str(tmp_path / 'o')]) == 1


def test_existing_output_directory_is_an_error(tmp_path, simulate_args):
    (tmp_path / 'taken').mkdir()
    assert main(simulate_args + ['--out', str(tmp_path / 'taken')]) == 1


def test_invalid_chain_exits_with_input_error(tmp_path):
    chain = tmp_path / 'periodic.json'
    chain.write_text(json.dumps({'states': [0, 1], 'transition': [[0.0, 1.0], [1.0, 0.0]], 'initial': [1.0, 0.0]}))
    assert main(['simulate', '--chain', str(chain), '--seed', '1', '--out', str(tmp_path / 'o')]) == 1


def test_analyze_coin(tmp_path, chain_path):
    out = tmp_path / 'analyze'
    code = main(['analyze', '--chain', str(chain_path('coin')), '--seed', '1', '--out', str(out),
                 '--t-step', '0.05', '--sigma-mc-n', '400', '--sigma-mc-paths', '2000'])
    aperiodicity = json.loads((out / 'aperiodicity.json').read_text())
    assert aperiodicity['is_strongly_aperiodic'] is False
    assert aperiodicity['witness_t'] == pytest.approx(3.141592653589793, abs=1e-6)
    assert aperiodicity['exact_certificate']['strongly_aperiodic'] is False
    analysis = json.loads((out / 'analysis.json').read_text())
    sigma2 = analysis['sigma2']
    assert sigma2['curvature'] == pytest.approx(1.0, rel=1e-6)
    assert 0 < sigma2['monte_carlo_stderr'] < 0.1
    assert (sigma2['monte_carlo_n'], sigma2['monte_carlo_paths']) == (400, 2000)
    assert code == (0 if sigma2['max_relative_deviation'] <= 0.02 else 2)
    assert analysis['period_structure']['period'] == 2
    header = _rows(out / 'eigen_curve.csv')[0]
    assert header == ['t', 're_lambda', 'im_lambda', 'abs_lambda', 'gap', 'proj_deviation']


def test_analyze_defaults_to_full_variance_sample(tmp_path, chain_path):
    args = build_parser().parse_args(['analyze', '--chain', str(chain_path('coin')), '--seed', '1',
                                      '--out', str(tmp_path / 'a')])
    config = config_from_args(args)
    assert config.sigma_mc_n == 10_000
    assert config.sigma_mc_paths == 10_000


def test_analyze_outputs_do_not_depend_on_workers(tmp_path, chain_path):
    args = ['analyze', '--chain', str(chain_path('three_cycle')), '--seed', '5', '--t-step', '0.05',
            '--sigma-mc-n', '40', '--sigma-mc-paths', '100']
    first = main(args + ['--out', str(tmp_path / 'a'), '--workers', '1'])
    second = main(args + ['--out', str(tmp_path / 'b'), '--workers', '2'])
    assert first == second
    for name in ('eigen_curve.csv', 'aperiodicity.json', 'analysis.json'):
        assert _read(tmp_path / 'a' / name) == _read(tmp_path / 'b' / name)


def test_analyze_skips_variance_for_drifting_chain(tmp_path, chain_path):
    out = tmp_path / 'biased'
    assert main(['analyze', '--chain', str(chain_path('biased')), '--seed', '1', '--out', str(out),
                 '--t-step', '0.05']) == 0
    analysis = json.loads((out / 'analysis.json').read_text())
    assert 'sigma2' not in analysis
    assert analysis['drift'] == pytest.approx(-2 / 3)


def test_verify_rejects_coin(tmp_path, chain_path, caplog):
    assert main(['verify', '--chain', str(chain_path('coin')), '--seed', '1', '--out', str(tmp_path / 'v')]) == 1
    message = next(r.getMessage() for r in caplog.records if r.levelname == 'ERROR')
    assert message.startswith("NotStronglyAperiodic in 'verify'")
    assert 'Lemma "Aperiodicity"' in message


def test_verify_three_cycle(tmp_path, chain_path):
    out = tmp_path / 'verify'
    code = main(['verify', '--chain', str(chain_path('three_cycle')), '--seed', '5', '--out', str(out),
                 '--llt-n-max', '200', '--kernel-steps', '500', '--kernel-max-distance', '5',
                 '--fourier-n-max', '10', '--moment-exact-n', '4', '6', '--moment-mc-n', '16',
                 '--moment-paths', '1000', '--moment-max-distance', '2'])
    assert code in (0, 2)
    for name in ('llt.csv', 'kernel.csv', 'moment4.csv', 'fourier.csv', 'chebyshev.csv', 'reports.json'):
        assert (out / name).is_file()
    assert len(_rows(out / 'llt.csv')) == 201
    assert _rows(out / 'kernel.csv')[0] == ['x', 'y', 'partial_sum', 'ratio']
    reports = json.loads((out / 'reports.json').read_text())
    assert [r['lemma_id'] for r in reports] == ['llt', 'potential_kernel', 'fourth_moment']
    assert all(float(row[1]) < 1e-8 for row in _rows(out / 'fourier.csv')[1:])


def test_converge_three_cycle(tmp_path, chain_path):
    out = tmp_path / 'converge'
    code = main(['converge', '--chain', str(chain_path('three_cycle')), '--seed', '3', '--out', str(out),
                 '--n-values', '16', '36', '--paths', '200', '--reference-paths', '200',
                 '--occupation-paths', '200', '--mesh', '1000',
                 '--eps', '0.05', '--deltas', '0.1', '0.2', '--tail-levels', '1.0'])
    assert code in (0, 2)
    summary = json.loads((out / 'converge.json').read_text())
    assert summary['occupation_violations'] == 0
    assert len(_rows(out / 'ks.csv')) == 1 + 2 * 3
    assert len(_rows(out / 'tightness.csv')) == 1 + 2 * 2


def test_report_merges_runs(tmp_path, simulate_args):
    assert main(simulate_args + ['--out', str(tmp_path / 'a')]) == 0
    assert main(simulate_args + ['--out', str(tmp_path / 'b'), '--n', '10']) == 0
    code = main(['report', str(tmp_path / 'a'), str(tmp_path / 'b'), '--seed', '1', '--out', str(tmp_path / 'r')])
    assert code == 0
    merged = json.loads((tmp_path / 'r' / 'merged.json').read_text())
    assert set(merged) == {str(tmp_path / 'a'), str(tmp_path / 'b')}
    summary = (tmp_path / 'r' / 'summary.txt').read_text().splitlines()
    assert summary[0].split() == ['run', 'command', 'verdict', 'config_hash']
    assert len(summary) == 3


def test_converge_defaults_to_acceptance_scale(tmp_path, chain_path):
    base = ['--chain', str(chain_path('three_cycle')), '--seed', '1', '--out', str(tmp_path / 'x')]
    converge = config_from_args(build_parser().parse_args(['converge'] + base))
    assert converge.paths == 20_000
    assert converge.occupation_paths == 10_000
    assert config_from_args(build_parser().parse_args(['simulate'] + base)).paths == 1000
    explicit = config_from_args(build_parser().parse_args(['converge'] + base + ['--paths', '300']))
    assert explicit.paths == 300
