import json

import pytest

from src.validators import validate_chain_document, validate_config_document


@pytest.fixture
def run_config(tmp_path, chain_path):
    return {'command': 'analyze', 'chain_file': str(chain_path('coin')), 'seed': 7, 'out': str(tmp_path / 'run')}


def test_valid_chain_document():
    is_valid, error = validate_chain_document({'states': [-1, 1], 'transition': [[0.5, 0.5], [0.5, 0.5]],
                                               'initial': [0.5, 0.5]})
    assert is_valid
    assert error is None


@pytest.mark.parametrize('document, fragment', [
    ([], 'JSON object'),
    ({'states': [0], 'transition': [[1.0]]}, "'initial'"),
    ({'states': [], 'transition': [], 'initial': []}, 'nonempty'),
    ({'states': [0.5], 'transition': [[1.0]], 'initial': [1.0]}, 'integers'),
    ({'states': [True], 'transition': [[1.0]], 'initial': [1.0]}, 'integers'),
    ({'states': [0, 1], 'transition': [[1.0]], 'initial': [1.0, 0.0]}, 'rows'),
    ({'states': [0, 1], 'transition': [[1.0, 0.0], [0.5]], 'initial': [1.0, 0.0]}, 'row 1'),
    ({'states': [0], 'transition': [['a']], 'initial': [1.0]}, 'numbers'),
    ({'states': [0], 'transition': [[1.0]], 'initial': [1.0, 0.0]}, 'Initial'),
])
def test_invalid_chain_documents(document, fragment):
    is_valid, error = validate_chain_document(document)
    assert not is_valid
    assert fragment in error


def test_valid_config(run_config):
    assert validate_config_document(run_config) == (True, None)


def test_config_requires_seed(run_config):
    del run_config['seed']
    is_valid, error = validate_config_document(run_config)
    assert not is_valid
    assert 'seed' in error


@pytest.mark.parametrize('seed', [-1, 2 ** 64, 1.5])
def test_config_rejects_out_of_range_seed(run_config, seed):
    run_config['seed'] = seed
    assert not validate_config_document(run_config)[0]


def test_config_rejects_unknown_command(run_config):
    run_config['command'] = 'serve'
    is_valid, error = validate_config_document(run_config)
    assert not is_valid
    assert 'serve' in error


def test_config_rejects_missing_chain_file(run_config, tmp_path):
    run_config['chain_file'] = str(tmp_path / 'nope.json')
    assert not validate_config_document(run_config)[0]


def test_config_rejects_empty_lists(run_config):
    run_config['deltas'] = []
    is_valid, error = validate_config_document(run_config)
    assert not is_valid
    assert 'deltas' in error


def test_config_ignores_empty_inputs_outside_report(run_config):
    run_config['inputs'] = []
    assert validate_config_document(run_config)[0]


def test_report_config_needs_manifests(tmp_path):
    run_dir = tmp_path / 'run'
    run_dir.mkdir()
    document = {'command': 'report', 'seed': 1, 'out': str(tmp_path / 'merged'), 'inputs': [str(run_dir)]}
    assert not validate_config_document(document)[0]
    (run_dir / 'manifest.json').write_text(json.dumps({'command': 'analyze'}))
    assert validate_config_document(document)[0]
