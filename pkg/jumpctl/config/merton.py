import copy

from jumpctl.utils.config import resolve_common, validate_common, require
from jumpctl.utils.errors import ConfigError
from . import common

#------------------------ base ------------------------#

profile_keys = ()

base = {
    'problem': 'merton-standard',
    **copy.deepcopy(common.top),

    'model': {
        ## dX = (r + u(mu - r)) X dt + sigma u X dW + alpha u X dM ;  f = X^p / p
        'mu': 0.05,
        'r': 0.03,
        'sigma': 0.4,
        'lam': 0.2,
        'alpha': 0.3,
        'p': 0.5,
        'beta': 1.0,
        'gamma': 0.0,
        'x0': 1.0,
        ## investment fraction bounds, enforced by the squashing map
        'u_low': 0.0,
        'u_high': 1.0,
        'squash': True,
    },

    'train': copy.deepcopy(common.train),
    'network': copy.deepcopy(common.network),

    'benchmark': {
        ## root bracket starts at -1/alpha + root_eps
        'root_eps': 1e-9,
        ## entropy-regularized grid solve
        'x_min': 0.2,
        'x_max': 3.0,
        'n_x': 500,
        'n_u': 400,
        'damping': 0.5,
        'tol': 1e-8,
        'max_iter': 500,
    },

    'evaluate': copy.deepcopy(common.evaluate),

    'table': {
        'cells': [{'dim': 1}],
    },
}

#------------------------ overrides ------------------------#

merton_standard = {
    'train': {
        'n_iterations': 2000,
        'n_steps': 1000,
        'n_paths': 500,
    },
}

merton_entropy = {
    'model': {
        'mu': 0.1,
        'r': 0.05,
        'lam': 0.3,
        'alpha': 0.1,
        'gamma': 0.05,
    },
    'train': {
        'delta_t': 0.05,
        'n_steps': 200,
        'n_paths': 200,
        'n_iterations': 2000,
        'actor_lr': 6e-5,
        'flow_lr': 1e-5,
        'actor_schedule': 'cosine-warmup',
    },
    'network': {
        'flow': True,
    },
}

#------------------------ resolution ------------------------#

def resolve(params):
    return resolve_common(params)

def validate(params):
    validate_common(params)
    positive = lambda v: v > 0
    require(params, 'dim', lambda v: v == 1, 'the portfolio problem has a single wealth coordinate')
    require(params, 'model.p', lambda v: 0 < v < 1, 'must lie in (0, 1)')
    require(params, 'model.sigma', positive, 'must be positive')
    require(params, 'model.lam', lambda v: v >= 0, 'must be non-negative')
    require(params, 'model.alpha', lambda v: v > -1, 'must exceed -1')
    require(params, 'model.x0', positive, 'must be positive')
    require(params, 'model.u_high', lambda v: v > params['model']['u_low'], 'must exceed u_low')
    require(params, 'benchmark.x_min', positive, 'must be positive')
    require(params, 'benchmark.x_max', lambda v: v > params['benchmark']['x_min'], 'must exceed x_min')
    require(params, 'benchmark.n_x', lambda v: isinstance(v, int) and v >= 5, 'must be an integer >= 5')
    require(params, 'benchmark.n_u', lambda v: isinstance(v, int) and v >= 3, 'must be an integer >= 3')
    require(params, 'benchmark.damping', lambda v: 0 < v <= 1, 'must lie in (0, 1]')
    if params['problem'] == 'merton-entropy' and params['model']['gamma'] <= 0:
        raise ConfigError('model.gamma', 'the entropy-regularized problem needs gamma > 0')
    if params['network']['flow'] and not params['model']['squash']:
        raise ConfigError('network.flow', 'the spline flow is only wired for the squashed policy')
