import math
from collections.abc import Mapping

import numpy as np
import torch

from jumpctl.utils.arrays import DTYPE

KINDS = ('constant', 'convergent', 'periodic')


class CoefProfile:
    '''
        scalar coefficient of time:
            constant    v(t) = value
            convergent  v(t) = v_inf + (v0 - v_inf) exp(-kappa t)
            periodic    v(t) = v_bar + v_amp sin(2 pi t / period + phase)
    '''

    def __init__(self, kind='constant', value=0., v0=None, v_inf=None, kappa=None,
            v_bar=None, v_amp=None, period=None, phase=0.):
        if kind not in KINDS:
            raise ValueError(f'[ dynamics/profiles ] unknown profile kind: {kind}')
        if kind == 'convergent' and kappa < 0:
            raise ValueError(f'[ dynamics/profiles ] convergence rate must be non-negative, got {kappa}')
        if kind == 'periodic' and not period > 0:
            raise ValueError(f'[ dynamics/profiles ] period must be positive, got {period}')
        self.kind = kind
        self.value = float(value)
        self.v0, self.v_inf, self.kappa = v0, v_inf, kappa
        self.v_bar, self.v_amp, self.period, self.phase = v_bar, v_amp, period, phase

    @classmethod
    def from_config(cls, spec):
        if isinstance(spec, Mapping):
            return cls(**dict(spec))
        return cls('constant', value=float(spec))

    def __call__(self, t):
        if torch.is_tensor(t):
            lib = torch
            t = t.to(DTYPE)
        else:
            lib = np
            t = np.asarray(t, dtype=np.float64)

        if self.kind == 'constant':
            out = self.value + 0. * t
        elif self.kind == 'convergent':
            out = self.v_inf + (self.v0 - self.v_inf) * lib.exp(-self.kappa * t)
        else:
            out = self.v_bar + self.v_amp * lib.sin(2 * math.pi * t / self.period + self.phase)

        if lib is np and out.ndim == 0:
            return float(out)
        return out

    @property
    def is_constant(self):
        return self.kind == 'constant' or \
            (self.kind == 'periodic' and self.v_amp == 0) or \
            (self.kind == 'convergent' and (self.v0 == self.v_inf or self.kappa == 0))

    @property
    def stationary_value(self):
        '''
            long-run value for convergent profiles, period mean for periodic ones
        '''
        if self.kind == 'constant':
            return self.value
        if self.kind == 'convergent':
            return self.v0 if self.kappa == 0 else self.v_inf
        return self.v_bar

    def to_dict(self):
        if self.kind == 'constant':
            return {'kind': 'constant', 'value': self.value}
        if self.kind == 'convergent':
            return {'kind': 'convergent', 'v0': self.v0, 'v_inf': self.v_inf, 'kappa': self.kappa}
        return {'kind': 'periodic', 'v_bar': self.v_bar, 'v_amp': self.v_amp,
            'period': self.period, 'phase': self.phase}

    def __repr__(self):
        args = ', '.join(f'{k}={v}' for k, v in self.to_dict().items() if k != 'kind')
        return f'CoefProfile({self.kind}, {args})'


def eval_profile(profile, t):
    if not torch.is_tensor(t) and np.any(np.asarray(t) < 0):
        raise ValueError(f'[ dynamics/profiles ] profiles are defined for t >= 0, got {t}')
    return profile(t)


class ProfileVector:
    '''
        one CoefProfile per coordinate; a single number or profile is
        shared by every coordinate
    '''

    def __init__(self, profiles):
        self.profiles = list(profiles)

    @classmethod
    def from_config(cls, spec, n):
        if isinstance(spec, (list, tuple)):
            if len(spec) != n:
                raise ValueError(f'[ dynamics/profiles ] expected {n} entries, got {len(spec)}')
            return cls([CoefProfile.from_config(s) for s in spec])
        return cls([CoefProfile.from_config(spec)] * n)

    def __len__(self):
        return len(self.profiles)

    def __call__(self, t):
        '''
            float t -> [ n ] float64 array
        '''
        return np.array([p(t) for p in self.profiles], dtype=np.float64)

    def torch(self, t):
        return torch.as_tensor(self(t), dtype=DTYPE)

    @property
    def kinds(self):
        return {p.kind for p in self.profiles if not p.is_constant} or {'constant'}

    @property
    def is_constant(self):
        return all(p.is_constant for p in self.profiles)

    @property
    def period(self):
        periods = {p.period for p in self.profiles if p.kind == 'periodic' and not p.is_constant}
        return periods.pop() if len(periods) == 1 else None

    @property
    def stationary_value(self):
        return np.array([p.stationary_value for p in self.profiles], dtype=np.float64)

    def to_list(self):
        return [p.to_dict() for p in self.profiles]
