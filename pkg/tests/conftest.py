from pathlib import Path

import pytest

from src.chain_model import load_chain, validate_chain

CHAINS = Path(__file__).resolve().parent.parent / 'chains'


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: acceptance-size sweeps; deselect with -m "not slow"')


@pytest.fixture
def chain_path():
    return lambda name: CHAINS / f'{name}.json'


@pytest.fixture
def coin():
    return load_chain(CHAINS / 'coin.json')


@pytest.fixture
def three_cycle():
    return load_chain(CHAINS / 'three_cycle.json')


@pytest.fixture
def iid_uniform():
    return load_chain(CHAINS / 'iid_uniform.json')


@pytest.fixture
def even_labels():
    return load_chain(CHAINS / 'even_labels.json')


@pytest.fixture
def biased():
    return load_chain(CHAINS / 'biased.json')


@pytest.fixture
def lazy_walk():
    """Centered, strongly aperiodic chain with unequal rows"""
    return validate_chain(
        [-1, 0, 1],
        [[0.2, 0.5, 0.3], [0.4, 0.2, 0.4], [0.3, 0.5, 0.2]],
        [1 / 3, 1 / 3, 1 / 3],
    )
