import copy

from jumpctl.utils.config import resolve_common, validate_common, require, broadcast
from . import common

#------------------------ base ------------------------#

## per-agent entries accept a number (shared) or a list with one entry per agent
profile_keys = ()

_agent_keys = ('b', 'eta', 'sigma', 'alpha', 'xi', 'lambdas', 'varrho', 'varpi')

base = {
    'problem': 'game',
    **copy.deepcopy(common.top),
    'dim': 2,                   # number of agents

    'model': {
        ## agent 1 faces its own market, agents 2..n are homogeneous;
        ## None -> [first] + [rest] * (n - 1)
        'b': None,
        'eta': None,
        'sigma': None,
        'alpha': 0.2,
        'xi': 0.2,
        'lambdas': 0.2,
        'lambda0': 0.25,
        'varrho': None,
        'varpi': 0.2,
        'beta': 1.0,
        'gamma': 0.0,
        'x0': 0.0,
    },

    'train': copy.deepcopy(common.train),
    'network': copy.deepcopy(common.network),

    'benchmark': {
        'damping': 0.5,
        'newton_tol': 1e-12,
        'tol': 1e-12,
        'max_outer': 200,
    },

    'evaluate': copy.deepcopy(common.evaluate),

    'table': {
        'cells': [{'dim': 2}],
    },
}

## (first agent, remaining agents)
heterogeneous = {
    'b': (0.05, 0.02),
    'eta': (0.08, 0.05),
    'sigma': (0.5, 0.4),
    'varrho': (1.5, 2.0),
}

#------------------------ overrides ------------------------#

game = {
    'train': {
        'delta_t': 0.02,
        'n_steps': 100,
        'n_paths': 100,
        'n_iterations': 1000,
        'k_actor': 30,
        'k_critic': 10,
    },
}

#------------------------ resolution ------------------------#

def resolve(params):
    n = params['dim']
    model = params['model']
    for key in _agent_keys:
        if model[key] is None:
            first, rest = heterogeneous[key]
            model[key] = [first] + [rest] * (n - 1)
        else:
            model[key] = broadcast(model[key], n, f'model.{key}')
    model['x0'] = broadcast(model['x0'], n, 'model.x0')
    return resolve_common(params)

def validate(params):
    validate_common(params)
    nonnegative = lambda v: all(x >= 0 for x in v)
    require(params, 'model.varrho', lambda v: all(x > 0 for x in v), 'risk tolerances must be positive')
    require(params, 'model.eta', lambda v: all(x != 0 for x in v), 'idiosyncratic volatilities must be nonzero')
    require(params, 'model.lambdas', nonnegative, 'intensities must be non-negative')
    require(params, 'model.lambda0', lambda v: v >= 0, 'must be non-negative')
    require(params, 'model.varpi', lambda v: all(0 <= x <= 1 for x in v), 'competition weights must lie in [0, 1]')
    require(params, 'model.alpha', lambda v: all(x > -1 for x in v), 'jump sizes must exceed -1')
    require(params, 'benchmark.damping', lambda v: 0 < v <= 1, 'must lie in (0, 1]')
