import copy
import math
import numpy as np

from jumpctl.utils.config import resolve_common, validate_common, require, broadcast
from jumpctl.utils.errors import ConfigError
from . import common

#------------------------ base ------------------------#

## entries that accept a number, a per-coordinate list or a time profile
profile_keys = ('model.b', 'model.sigma', 'model.alpha', 'model.lambdas')

## entries that accept a number (times the identity) or a dim x dim matrix
matrix_keys = ('model.R', 'model.Q')

base = {
    'problem': 'lq-homogeneous',
    **copy.deepcopy(common.top),

    'model': {
        ## dX = B u dt + Sigma dW + sum_i alpha_i e_i dM_i ;  f = -(u'Ru + x'Qx)
        'b': 0.5,
        'sigma': 0.3,
        'alpha': None,          # None -> linspace(0.3, 0.2, dim)
        'lambdas': None,        # None -> linspace(0.2, 0.3, dim)
        'R': 5.0,
        'Q': 0.5,
        'beta': 1.0,
        'gamma': 0.05,
        'x0': None,             # None -> (1, ..., 1) / sqrt(dim)
    },

    'train': copy.deepcopy(common.train),
    'network': copy.deepcopy(common.network),

    'benchmark': {
        'ode_dt': 1e-3,
        'ode_method': 'dop853',     # 'dop853' | 'euler'
        'ode_rtol': 1e-11,
        'ode_atol': 1e-12,
        'horizon_factor': 3.0,      # T_inf = horizon_factor * T
        'shooting_tol': 1e-10,
        'shooting_max_iter': 200,
    },

    'evaluate': copy.deepcopy(common.evaluate),

    'table': {
        'cells': [{'dim': 1}, {'dim': 5}],
    },
}

#------------------------ overrides ------------------------#

lq_homogeneous = {}

_inhomogeneous = {
    'model': {
        'lambdas': 0.2,
        'R': 2.0,
        'Q': 0.1,
    },
    'train': {
        'n_steps': 2000,
        'n_iterations': 3000,
        'k_actor': 15,
        'actor_lr': 5e-4,
    },
    'table': {
        'cells': [{'dim': 1}],
    },
}

lq_convergent = copy.deepcopy(_inhomogeneous)
lq_convergent['model'].update({
    'b': {'kind': 'convergent', 'v0': 0.6, 'v_inf': 0.5, 'kappa': 1.0},
    'sigma': {'kind': 'convergent', 'v0': 0.3, 'v_inf': 0.2, 'kappa': 1.0},
    'alpha': {'kind': 'convergent', 'v0': 0.3, 'v_inf': 0.2, 'kappa': 1.0},
    'gamma': 0.0,
})

lq_periodic = copy.deepcopy(_inhomogeneous)
lq_periodic['model'].update({
    'b': {'kind': 'periodic', 'v_bar': 0.12, 'v_amp': 0.06, 'period': 10.0, 'phase': 0.0},
    'sigma': {'kind': 'periodic', 'v_bar': 0.2, 'v_amp': 0.1, 'period': 10.0, 'phase': 0.0},
    'alpha': {'kind': 'periodic', 'v_bar': 0.2, 'v_amp': 0.1, 'period': 10.0, 'phase': 0.0},
    'gamma': 0.05,
})

#------------------------ resolution ------------------------#

def resolve(params):
    dim = params['dim']
    model = params['model']
    if model['alpha'] is None:
        model['alpha'] = np.linspace(0.3, 0.2, dim).tolist()
    if model['lambdas'] is None:
        model['lambdas'] = np.linspace(0.2, 0.3, dim).tolist()
    if model['x0'] is None:
        model['x0'] = [1. / math.sqrt(dim)] * dim
    return resolve_common(params)

def _kinds(val):
    if isinstance(val, dict):
        return {(val['kind'], val.get('period'))}
    if isinstance(val, list):
        return set().union(*[_kinds(v) for v in val]) if val else set()
    return set()

def validate(params):
    validate_common(params)
    dim = params['dim']
    model = params['model']

    for key in ['b', 'sigma', 'alpha', 'lambdas']:
        if isinstance(model[key], list):
            broadcast(model[key], dim, f'model.{key}')
    broadcast(model['x0'], dim, 'model.x0')

    for key in ['R', 'Q']:
        val = model[key]
        if isinstance(val, list):
            if len(val) != dim or any(not isinstance(row, list) or len(row) != dim for row in val):
                raise ConfigError(f'model.{key}', f'expected a number or a {dim} x {dim} matrix')
            matrix = np.asarray(val, dtype=np.float64)
        else:
            matrix = float(val) * np.eye(dim)
        if not np.allclose(matrix, matrix.T):
            raise ConfigError(f'model.{key}', 'must be symmetric')
        eigs = np.linalg.eigvalsh(matrix)
        if key == 'R' and eigs.min() <= 0:
            raise ConfigError('model.R', 'must be positive definite')
        if key == 'Q' and eigs.min() < 0:
            raise ConfigError('model.Q', 'must be positive semi-definite')

    require(params, 'model.lambdas', lambda v: np.min(_constant_values(v)) >= 0, 'intensities must be non-negative')

    kinds = set()
    for key in ['b', 'sigma', 'alpha', 'lambdas']:
        kinds |= _kinds(model[key])
    families = {kind for kind, _ in kinds} - {'constant'}
    if len(families) > 1:
        raise ConfigError('model', f'cannot mix convergent and periodic profiles, got {sorted(families)}')
    periods = {period for kind, period in kinds if kind == 'periodic'}
    if len(periods) > 1:
        raise ConfigError('model', f'periodic profiles must share one period, got {sorted(periods)}')

def _constant_values(val):
    if isinstance(val, dict):
        if val['kind'] == 'constant':
            return [val['value']]
        if val['kind'] == 'convergent':
            return [val['v0'], val['v_inf']]
        return [val['v_bar'] - abs(val['v_amp'])]
    if isinstance(val, list):
        return [x for v in val for x in _constant_values(v)] or [0.]
    return [val]
