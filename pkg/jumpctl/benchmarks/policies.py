'''
    benchmark policies and value functions behind the same interfaces as
    FlowPolicy and the learned critic, so they can drive rollouts and be
    installed in a CriticPair
'''

import numpy as np
import torch
import torch.nn as nn
from torch.distributions import MultivariateNormal, Normal
from scipy.integrate import cumulative_trapezoid

from jumpctl.utils.arrays import DTYPE, to_np, to_torch
from jumpctl.policy import PolicySample


def _row_times(t, batch_size):
    '''
        None for a shared scalar time, otherwise a [ batch_size ] array
    '''
    if torch.is_tensor(t):
        if t.dim() == 0:
            return None
        t = to_np(t).reshape(-1)
        if np.all(t == t[0]):
            return None
        return t
    return None

def _scalar_time(t):
    if torch.is_tensor(t):
        return float(t.reshape(-1)[0])
    return float(t)


#-----------------------------------------------------------------------------#
#--------------------------------- policies ----------------------------------#
#-----------------------------------------------------------------------------#

class BenchmarkPolicy:

    action_dim = 1

    def mean_sample(self, t, obs):
        return self.sample(t, obs, eps=torch.zeros(obs.shape[0], self.action_dim, dtype=DTYPE))

    def mean_action(self, t, obs):
        return self.mean_sample(t, obs).action

    def advance(self):
        pass

    def eval(self):
        return self

    def _eps(self, obs, generator, eps):
        if eps is None:
            eps = torch.randn(obs.shape[0], self.action_dim, dtype=DTYPE, generator=generator)
        return eps


class LqFeedbackPolicy(BenchmarkPolicy):
    '''
        N(R^-1 B' H(t) x, gamma/2 R^-1); the deterministic feedback when gamma = 0
    '''

    def __init__(self, benchmark):
        self.benchmark = benchmark
        self.action_dim = benchmark.model.control_dim
        self.gamma = benchmark.model.entropy_weight
        if self.gamma > 0:
            self.scale_tril = to_torch(np.linalg.cholesky(benchmark.covariance))

    def gaussian(self, t, obs):
        '''
            (mean [ B x m ], covariance [ m x m ])
        '''
        rows = _row_times(t, obs.shape[0])
        if rows is None:
            gain = to_torch(self.benchmark.gain(_scalar_time(t)))
            mean = obs.to(DTYPE) @ gain.T
        else:
            gain = to_torch(np.stack([self.benchmark.gain(s) for s in rows]))
            mean = torch.einsum('bij,bj->bi', gain, obs.to(DTYPE))
        return mean, to_torch(self.benchmark.covariance)

    def sample(self, t, obs, generator=None, eps=None):
        mean, _ = self.gaussian(t, obs)
        if self.gamma == 0:
            zeros = torch.zeros(obs.shape[0], dtype=DTYPE)
            return PolicySample(mean, zeros, mean, mean)
        eps = self._eps(obs, generator, eps)
        u = mean + eps @ self.scale_tril.T
        log_density = MultivariateNormal(mean, scale_tril=self.scale_tril).log_prob(u)
        return PolicySample(u, log_density, u, u)

    def log_prob(self, t, obs, u):
        if self.gamma == 0:
            raise ValueError('[ benchmarks/policies ] deterministic feedback has no density')
        mean, _ = self.gaussian(t, obs)
        return MultivariateNormal(mean, scale_tril=self.scale_tril).log_prob(u.to(DTYPE))


class ConstantPolicy(BenchmarkPolicy):
    '''
        deterministic constant control (merton fraction, equilibrium investment)
    '''

    def __init__(self, value):
        self.value = to_torch(np.atleast_1d(value))
        self.action_dim = len(self.value)

    def sample(self, t, obs, generator=None, eps=None):
        u = self.value.expand(obs.shape[0], self.action_dim).clone()
        return PolicySample(u, torch.zeros(obs.shape[0], dtype=DTYPE), u, u)

    def log_prob(self, t, obs, u):
        raise ValueError('[ benchmarks/policies ] constant policy has no density')


class GibbsGridPolicy(BenchmarkPolicy):
    '''
        samples the grid Gibbs density by inverse-cdf interpolation;
        eps is mapped through the normal cdf, so eps = 0 gives the median
    '''

    def __init__(self, benchmark):
        self.benchmark = benchmark
        self.u = benchmark.u
        self.action_dim = 1

    def densities(self, obs):
        return self.benchmark.density_at(to_np(obs[:, 0]))

    def sample(self, t, obs, generator=None, eps=None):
        eps = self._eps(obs, generator, eps)
        levels = to_np(Normal(0., 1.).cdf(eps[:, 0]))
        density = self.densities(obs)
        cdf = cumulative_trapezoid(density, self.u, axis=-1, initial=0)
        cdf = cdf / cdf[:, -1:]
        u = np.array([np.interp(level, row, self.u) for level, row in zip(levels, cdf)])
        log_density = np.log(np.array([np.interp(a, self.u, row) for a, row in zip(u, density)]))
        u = to_torch(u[:, None])
        return PolicySample(u, to_torch(log_density), u, u)

    def log_prob(self, t, obs, u):
        density = self.densities(obs)
        u = to_np(u[:, 0])
        values = np.array([np.interp(a, self.u, row) for a, row in zip(u, density)])
        return to_torch(np.log(np.maximum(values, 1e-300)))


#-----------------------------------------------------------------------------#
#---------------------------------- values -----------------------------------#
#-----------------------------------------------------------------------------#

class LqValue(nn.Module):
    '''
        V(t, x) = x' H(t) x + g(t)
    '''

    def __init__(self, benchmark):
        super().__init__()
        self.benchmark = benchmark

    def forward(self, t, obs):
        obs = obs.to(DTYPE)
        solution = self.benchmark.solution
        rows = _row_times(t, obs.shape[0])
        if rows is None:
            s = _scalar_time(t)
            H, g = to_torch(solution.H_at(s)), solution.g_at(s)
            return torch.einsum('bi,ij,bj->b', obs, H, obs) + g
        H = to_torch(np.stack([solution.H_at(s) for s in rows]))
        g = to_torch(np.array([solution.g_at(s) for s in rows]))
        return torch.einsum('bi,bij,bj->b', obs, H, obs) + g


class MertonValue(nn.Module):
    '''
        V(x) = (h* / p) x^p
    '''

    def __init__(self, h_star, p, floor=1e-8):
        super().__init__()
        self.h_star, self.p, self.floor = float(h_star), float(p), floor

    def forward(self, t, obs):
        x = obs[:, 0].to(DTYPE).clamp(min=self.floor)
        return self.h_star / self.p * x ** self.p


class GridValue(nn.Module):
    '''
        piecewise-linear interpolation of grid values on a uniform x-grid,
        extrapolated linearly from the end segments
    '''

    def __init__(self, x, V):
        super().__init__()
        self.register_buffer('x', to_torch(x))
        self.register_buffer('V', to_torch(V))

    def forward(self, t, obs):
        x = obs[:, 0].to(DTYPE)
        h = self.x[1] - self.x[0]
        idx = torch.floor((x - self.x[0]) / h).long().clamp(0, len(self.x) - 2)
        theta = (x - self.x[idx]) / h
        return (1 - theta) * self.V[idx] + theta * self.V[idx + 1]


class GameValue(nn.Module):
    '''
        V^i(x, y) = -exp(-chi_i x + rho_i y) / (beta - Lambda_i*)
    '''

    def __init__(self, chi, rho, denominator):
        super().__init__()
        self.chi, self.rho, self.denominator = float(chi), float(rho), float(denominator)

    def forward(self, t, obs):
        obs = obs.to(DTYPE)
        return -torch.exp(-self.chi * obs[:, 0] + self.rho * obs[:, 1]) / self.denominator
