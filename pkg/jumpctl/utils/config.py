import copy
import json
import hashlib
import importlib
import numbers
from collections.abc import Mapping

from .errors import ConfigError

## problem tag -> (defaults module under jumpctl.config, override dictionary)
PROBLEMS = {
    'lq-homogeneous': ('lq', 'lq_homogeneous'),
    'lq-convergent': ('lq', 'lq_convergent'),
    'lq-periodic': ('lq', 'lq_periodic'),
    'merton-standard': ('merton', 'merton_standard'),
    'merton-entropy': ('merton', 'merton_entropy'),
    'game': ('game', 'game'),
}


class ExperimentConfig(Mapping):
    '''
        read-only view of a validated config tree;
        nested sections are exposed as attributes, e.g. `config.train.delta_t`
    '''

    def __init__(self, params, source=None):
        object.__setattr__(self, '_dict', params)
        ## the document before dimension-dependent defaults were filled in
        object.__setattr__(self, '_source', source if source is not None else params)

    def __repr__(self):
        string = f'\n[ utils/config ] Config: {self._dict.get("problem", "section")}\n'
        for key in sorted(self._dict.keys()):
            string += f'    {key}: {self._dict[key]}\n'
        return string

    def __iter__(self):
        return iter(self._dict)

    def __getitem__(self, item):
        val = self._dict[item]
        if isinstance(val, dict):
            return ExperimentConfig(val)
        return val

    def __len__(self):
        return len(self._dict)

    def __getattr__(self, attr):
        try:
            return self[attr]
        except KeyError:
            raise AttributeError(attr)

    def __setattr__(self, attr, val):
        raise AttributeError('ExperimentConfig is read-only; use `replace`')

    def __eq__(self, other):
        if isinstance(other, ExperimentConfig):
            return self.to_dict() == other.to_dict()
        return NotImplemented

    def to_dict(self):
        return copy.deepcopy(self._dict)

    def dumps(self, indent=2):
        return json.dumps(self._dict, indent=indent, sort_keys=True)

    def content_hash(self):
        '''
            sha1 of the canonical json; identifies a run together with its seed
        '''
        canonical = json.dumps(self._dict, sort_keys=True, separators=(',', ':'))
        return hashlib.sha1(canonical.encode('utf-8')).hexdigest()

    def replace(self, **overrides):
        '''
            re-parse with top-level or section overrides, e.g.
            `config.replace(seed=3, train={'n_iterations': 10})`
        '''
        params = copy.deepcopy(self._source)
        _deep_update(params, copy.deepcopy(overrides))
        return parse_config(params)


#-----------------------------------------------------------------------------#
#---------------------------------- parsing ----------------------------------#
#-----------------------------------------------------------------------------#

def load_defaults(problem):
    if problem not in PROBLEMS:
        raise ConfigError('problem', f'unknown problem tag {problem!r}; expected one of {sorted(PROBLEMS)}')
    family, name = PROBLEMS[problem]
    module = importlib.import_module(f'jumpctl.config.{family}')
    params = copy.deepcopy(module.base)
    _deep_update(params, copy.deepcopy(getattr(module, name)))
    params['problem'] = problem
    return module, params


def parse_config(document):
    '''
        document : mapping or json text
        returns a validated ExperimentConfig with every default filled in
    '''
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as e:
            raise ConfigError('', f'malformed json: {e}')
    if not isinstance(document, Mapping):
        raise ConfigError('', 'config document must be a json object')
    if 'problem' not in document:
        raise ConfigError('problem', f'missing problem tag; expected one of {sorted(PROBLEMS)}')

    module, params = load_defaults(document['problem'])
    source = copy.deepcopy(dict(document))
    _merge_checked(params, copy.deepcopy(source), '', getattr(module, 'profile_keys', ()),
        getattr(module, 'matrix_keys', ()))
    params = module.resolve(params)
    module.validate(params)
    return ExperimentConfig(params, source)


def load_config(loadpath):
    with open(loadpath, 'r') as f:
        text = f.read()
    return parse_config(text)


def _deep_update(params, overrides):
    for key, val in overrides.items():
        if isinstance(val, dict) and isinstance(params.get(key), dict):
            _deep_update(params[key], val)
        else:
            params[key] = val
    return params


def _merge_checked(params, document, prefix, profile_keys, matrix_keys=()):
    for key, val in document.items():
        path = f'{prefix}{key}'
        if key not in params:
            raise ConfigError(path, 'unknown key')
        default = params[key]
        if path in profile_keys:
            _check_profile_value(path, val)
            params[key] = val
        elif path in matrix_keys:
            _check_matrix_value(path, val)
            params[key] = val
        elif isinstance(default, dict):
            if not isinstance(val, Mapping):
                raise ConfigError(path, f'expected a section, got {type(val).__name__}')
            _merge_checked(default, val, f'{path}.', profile_keys, matrix_keys)
        else:
            _check_type(path, default, val)
            params[key] = val


def _is_number(val):
    return isinstance(val, numbers.Real) and not isinstance(val, bool)


def _check_type(path, default, val):
    if default is None or val is None:
        return
    if isinstance(default, bool):
        ok = isinstance(val, bool)
    elif isinstance(default, int):
        ok = isinstance(val, int) and not isinstance(val, bool)
    elif isinstance(default, float):
        ok = _is_number(val)
    elif isinstance(default, str):
        ok = isinstance(val, str)
    elif isinstance(default, list):
        ok = isinstance(val, list)
    else:
        ok = isinstance(val, type(default))
    if not ok:
        raise ConfigError(path, f'type mismatch: expected {type(default).__name__}, got {type(val).__name__}')


PROFILE_FIELDS = {
    'constant': {'kind', 'value'},
    'convergent': {'kind', 'v0', 'v_inf', 'kappa'},
    'periodic': {'kind', 'v_bar', 'v_amp', 'period', 'phase'},
}


def _check_matrix_value(path, val):
    '''
        a number or a list of rows of numbers; the family module checks the shape
    '''
    if _is_number(val):
        return
    if isinstance(val, list) and val and all(isinstance(row, list) for row in val):
        if all(_is_number(x) for row in val for x in row):
            return
    raise ConfigError(path, f'expected a number or a matrix (list of rows), got {val!r}')


def _check_profile_value(path, val):
    '''
        coefficient entries accept a number, a list (one entry per channel
        or coordinate), or a time profile {'kind': ..., ...}
    '''
    if _is_number(val):
        return
    if isinstance(val, list):
        for i, item in enumerate(val):
            _check_profile_value(f'{path}[{i}]', item)
        return
    if isinstance(val, Mapping):
        kind = val.get('kind')
        if kind not in PROFILE_FIELDS:
            raise ConfigError(f'{path}.kind', f'expected one of {sorted(PROFILE_FIELDS)}, got {kind!r}')
        required = PROFILE_FIELDS[kind]
        optional = {'phase'} if kind == 'periodic' else set()
        missing = required - optional - set(val)
        unknown = set(val) - required
        if missing:
            raise ConfigError(path, f'missing profile fields {sorted(missing)}')
        if unknown:
            raise ConfigError(f'{path}.{sorted(unknown)[0]}', 'unknown key')
        for key in required - {'kind'}:
            if key in val and not _is_number(val[key]):
                raise ConfigError(f'{path}.{key}', 'expected a number')
        if kind == 'convergent' and val['kappa'] < 0:
            raise ConfigError(f'{path}.kappa', 'must be non-negative')
        if kind == 'periodic' and val['period'] <= 0:
            raise ConfigError(f'{path}.period', 'must be positive')
        return
    raise ConfigError(path, f'expected a number, list or profile, got {type(val).__name__}')


def resolve_common(params):
    '''
        fills the dimension- and gamma-dependent network defaults
    '''
    network = params['network']
    width = params['dim'] + 10
    for key in ['critic_width', 'actor_width']:
        if network[key] is None:
            network[key] = width
    if network['fixed_std'] is None and params['model']['gamma'] == 0:
        network['fixed_std'] = 0.1
    return params


def broadcast(val, n, path):
    '''
        number -> list of n copies; list must already have n entries
    '''
    if isinstance(val, list):
        if len(val) != n:
            raise ConfigError(path, f'expected {n} entries, got {len(val)}')
        return list(val)
    return [val] * n


#-----------------------------------------------------------------------------#
#-------------------------------- constraints --------------------------------#
#-----------------------------------------------------------------------------#

def require(params, path, predicate, message):
    '''
        checks `predicate(value)` for the value at dotted `path`
    '''
    val = params
    for key in path.split('.'):
        val = val[key]
    try:
        ok = predicate(val)
    except TypeError:
        ok = False
    if not ok:
        raise ConfigError(path, f'{message} (got {val!r})')


def validate_common(params):
    '''
        constraints shared by every problem family
    '''
    positive = lambda v: _is_number(v) and v > 0
    positive_int = lambda v: isinstance(v, int) and not isinstance(v, bool) and v > 0

    require(params, 'dim', positive_int, 'must be a positive integer')
    require(params, 'seed', lambda v: isinstance(v, int) and v >= 0, 'must be a non-negative integer')
    require(params, 'seeds', lambda v: all(isinstance(s, int) and s >= 0 for s in v), 'must list non-negative integers')
    require(params, 'model.beta', positive, 'must be positive')
    require(params, 'model.gamma', lambda v: _is_number(v) and v >= 0, 'must be non-negative')

    for key in ['delta_t', 'rho_c', 'actor_lr', 'critic_lr', 'flow_lr', 'max_grad_norm',
                'divergence_bound', 'state_bound', 'decay']:
        require(params, f'train.{key}', positive, 'must be positive')
    for key in ['n_steps', 'n_paths', 'k_actor', 'k_critic', 'eval_freq', 'save_freq', 'log_freq']:
        require(params, f'train.{key}', positive_int, 'must be a positive integer')
    require(params, 'train.n_iterations', lambda v: isinstance(v, int) and v >= 0, 'must be a non-negative integer')
    require(params, 'train.rho_c', lambda v: 0 < v <= 1, 'must lie in (0, 1]')
    require(params, 'train.warmup', lambda v: 0 <= v < 1, 'must lie in [0, 1)')
    require(params, 'train.min_lr_factor', lambda v: 0 < v <= 1, 'must lie in (0, 1]')
    require(params, 'train.milestones', lambda v: all(0 < m < 1 for m in v), 'fractions must lie in (0, 1)')
    for key in ['actor_schedule', 'critic_schedule']:
        require(params, f'train.{key}', lambda v: v in ('constant', 'multi-step', 'cosine-warmup'),
            'must be constant, multi-step or cosine-warmup')

    for key in ['critic_depth', 'actor_depth', 'conditioner_depth']:
        require(params, f'network.{key}', lambda v: isinstance(v, int) and v >= 0, 'must be a non-negative integer')
    for key in ['critic_width', 'actor_width', 'conditioner_width', 'n_bins', 'freeze_updates']:
        require(params, f'network.{key}', positive_int, 'must be a positive integer')
    require(params, 'network.tail_bound', positive, 'must be positive')
    require(params, 'network.tau_start', positive, 'must be positive')
    require(params, 'network.tau_end', positive, 'must be positive')
    require(params, 'network.fixed_std', lambda v: v is None or (_is_number(v) and v > 0), 'must be positive or null')

    require(params, 'evaluate.n_paths', positive_int, 'must be a positive integer')
    require(params, 'evaluate.n_u_grid', lambda v: isinstance(v, int) and v >= 3, 'must be an integer >= 3')
    require(params, 'evaluate.horizon', lambda v: v is None or (_is_number(v) and v > 0), 'must be positive or null')
    for key in ['eps_x', 'eps_v', 'eps_u']:
        require(params, f'evaluate.{key}', positive, 'must be positive')
    require(params, 'evaluate.policy_source', lambda v: v in ('checkpoint', 'benchmark'),
        'must be checkpoint or benchmark')
    require(params, 'table.cells', lambda v: all(isinstance(c, dict) for c in v), 'must be a list of objects')
