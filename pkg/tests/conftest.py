import pytest
import torch

from jumpctl.utils.config import parse_config


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False, help='run the long training reproductions')

def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: long training reproduction, needs --runslow')

def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def generator():
    return torch.Generator().manual_seed(0)

## a few iterations on a short grid; enough to exercise every code path
SMALL_TRAIN = {
    'n_steps': 20,
    'n_paths': 8,
    'n_iterations': 2,
    'k_actor': 5,
    'k_critic': 5,
    'eval_freq': 2,
    'save_freq': 1,
    'log_freq': 1,
}

SMALL_NETWORK = {
    'critic_width': 8,
    'critic_depth': 1,
    'actor_width': 8,
    'actor_depth': 1,
}

@pytest.fixture
def small_config():
    def make(problem='lq-homogeneous', **sections):
        document = {'problem': problem, 'train': dict(SMALL_TRAIN), 'network': dict(SMALL_NETWORK)}
        for key, val in sections.items():
            if isinstance(val, dict) and isinstance(document.get(key), dict):
                document[key].update(val)
            else:
                document[key] = val
        return parse_config(document)
    return make
