import math
from collections import namedtuple

import numpy as np
import torch
from torch.distributions import MultivariateNormal, kl_divergence
from scipy.integrate import trapezoid

from jumpctl.dynamics import TimeGrid, sample_noise, rollout_batch
from jumpctl.utils.arrays import DTYPE, to_np, to_torch
from jumpctl.utils.errors import NumericalError

## shared u-grid [ n_u ]; benchmark and learned densities on it [ B x n_u ]
DensityPair = namedtuple('DensityPair', 'u benchmark learned')

REPORT_FIELDS = ('E_X', 'E_V', 'E_u', 'T_eval', 'eps_x', 'eps_v', 'eps_u', 'control_metric')


class MetricReport:

    def __init__(self, E_X, E_V, E_u, T_eval, eps_x, eps_v, eps_u, control_metric='rmse', per_agent=None):
        self.E_X = float(E_X)
        self.E_V = float(E_V)
        self.E_u = float(E_u)
        self.T_eval = float(T_eval)
        self.eps_x, self.eps_v, self.eps_u = eps_x, eps_v, eps_u
        self.control_metric = control_metric
        self.per_agent = per_agent or []
        for key in ('E_X', 'E_V', 'E_u'):
            value = getattr(self, key)
            if not math.isfinite(value) or value < -1e-9:
                raise NumericalError(f'metric {key} = {value} is not a finite non-negative number')

    def to_row(self):
        return {key: getattr(self, key) for key in REPORT_FIELDS}

    def to_dict(self):
        return {**self.to_row(), 'per_agent': self.per_agent}

    def __repr__(self):
        return f'MetricReport(E_X={self.E_X:.4e}, E_V={self.E_V:.4e}, E_u={self.E_u:.4e}, ' \
            f'{self.control_metric}, T_eval={self.T_eval:g})'

#-----------------------------------------------------------------------------#
#------------------------------ relative errors ------------------------------#
#-----------------------------------------------------------------------------#

def _squared_norms(values, time_axis):
    '''
        squares summed over every axis but time -> [ K+1 ]
    '''
    moved = np.moveaxis(np.asarray(values, dtype=np.float64) ** 2, time_axis, 0)
    return moved.reshape(moved.shape[0], -1).sum(axis=-1)

def relative_error(estimate, reference, times, eps, time_axis=-1):
    '''
        int |estimate - reference|^2 dt / (int |reference|^2 dt + eps) by the trapezoid rule
    '''
    estimate, reference = np.asarray(estimate, dtype=np.float64), np.asarray(reference, dtype=np.float64)
    times = np.asarray(times, dtype=np.float64)
    if estimate.shape != reference.shape:
        raise ValueError(f'[ metrics ] shape mismatch {estimate.shape} vs {reference.shape}')
    if estimate.shape[time_axis] != len(times):
        raise ValueError(f'[ metrics ] {estimate.shape[time_axis]} time points but a grid of {len(times)}')
    numerator = trapezoid(_squared_norms(estimate - reference, time_axis), times)
    denominator = trapezoid(_squared_norms(reference, time_axis), times) + eps
    return float(numerator / denominator)

def rmse_state(learned, benchmark, times, eps_x=1e-8):
    '''
        learned, benchmark : states on a shared grid, [ K+1 ], [ K+1 x d ] or [ L x K+1 x d ]
    '''
    if np.shape(learned) != np.shape(benchmark):
        raise ValueError(f'[ metrics ] paths are on different grids: {np.shape(learned)} vs {np.shape(benchmark)}')
    time_axis = -2 if np.ndim(learned) >= 2 else -1
    return relative_error(learned, benchmark, times, eps_x, time_axis)

def rmse_value(learned_values, benchmark_values, times, eps_v=1e-8):
    '''
        learned critic on the learned path vs benchmark value on the benchmark path,
        [ K+1 ] or [ L x K+1 ]
    '''
    return relative_error(learned_values, benchmark_values, times, eps_v, time_axis=-1)

def control_error(learned_controls, benchmark_controls, times, eps_u=1e-8):
    '''
        relative error of feedback controls, [ K+1 x m ] or [ L x K+1 x m ]
    '''
    return relative_error(learned_controls, benchmark_controls, times, eps_u, time_axis=-2)

def occupation_mass(beta, grid):
    '''
        sum_{k < K} exp(-beta t_k) dt, which tends to 1 / beta
    '''
    if not beta > 0:
        raise ValueError(f'[ metrics ] discount must be positive, got {beta}')
    times = grid.times[:-1]
    return float(np.sum(np.exp(-beta * times)) * grid.delta_t)

#-----------------------------------------------------------------------------#
#------------------------------------- kl ------------------------------------#
#-----------------------------------------------------------------------------#

def gaussian_params(policy, t, obs):
    '''
        (mean [ B x m ], covariance [ (B x) m x m ]) when the policy is an
        unsquashed Gaussian, else None
    '''
    if hasattr(policy, 'gaussian'):
        if getattr(policy, 'gamma', 1.) == 0:
            return None
        return policy.gaussian(t, obs)
    if getattr(policy, 'flow', 'missing') is None and getattr(policy, 'squash', 'missing') is None:
        mean, std = policy.base(policy.condition(t, obs))
        return mean, torch.diag_embed(std ** 2)
    return None

def gaussian_kl(p, q):
    mean_p, cov_p = p
    mean_q, cov_q = q
    return kl_divergence(
        MultivariateNormal(mean_p, covariance_matrix=cov_p),
        MultivariateNormal(mean_q, covariance_matrix=cov_q),
    )

def action_grid(policy, benchmark_policy, n_u):
    squash = getattr(policy, 'squash', None)
    if squash is not None:
        low, high = squash.low, squash.high
    elif hasattr(benchmark_policy, 'u'):
        low, high = float(benchmark_policy.u[0]), float(benchmark_policy.u[-1])
    else:
        return None
    ## keep the grid off the squash bounds
    margin = 1e-6 * (high - low)
    return np.linspace(low + margin, high - margin, n_u)

def density_pair(benchmark_policy, policy, t, obs, u_grid):
    '''
        both densities on u_grid at every row of obs; one-dimensional actions
    '''
    B, n_u = obs.shape[0], len(u_grid)
    obs_rep = obs.repeat_interleave(n_u, dim=0)
    u_rep = to_torch(np.tile(u_grid, B))[:, None]
    bench = torch.exp(benchmark_policy.log_prob(t, obs_rep, u_rep)).reshape(B, n_u)
    learned = torch.exp(policy.log_prob(t, obs_rep, u_rep)).reshape(B, n_u)
    pair = DensityPair(u_grid, to_np(bench), to_np(learned))
    mass = trapezoid(pair.benchmark, u_grid, axis=-1)
    if np.abs(mass - 1).max() > 1e-3:
        raise NumericalError(f'benchmark density integrates to {mass.min():.4f}..{mass.max():.4f} on the KL grid')
    ## the learned density may put mass off the grid; KL only weighs it where the benchmark lives
    mass = trapezoid(pair.learned, u_grid, axis=-1)
    if np.abs(mass - 1).max() > 1e-3:
        print(f'[ metrics ] Warning: learned density integrates to {mass.min():.4f}..{mass.max():.4f} '
            'on the KL grid', flush=True)
    return pair

def grid_kl(pair):
    '''
        KL(benchmark || learned) per row by trapezoid quadrature
    '''
    p, q = pair.benchmark, pair.learned
    integrand = np.where(p > 0, p * (np.log(np.maximum(p, 1e-300)) - np.log(np.maximum(q, 1e-300))), 0.)
    return trapezoid(integrand, pair.u, axis=-1)

def monte_carlo_kl(benchmark_policy, policy, t, obs, n_samples=1000, generator=None):
    B = obs.shape[0]
    obs_rep = obs.repeat_interleave(n_samples, dim=0)
    sample = benchmark_policy.sample(t, obs_rep, generator=generator)
    log_ratio = sample.log_density - policy.log_prob(t, obs_rep, sample.action)
    return to_np(log_ratio.reshape(B, n_samples).mean(dim=-1))

@torch.no_grad()
def policy_kl(benchmark_policy, policy, t, obs, n_u_grid=2001, generator=None):
    '''
        KL(pi* || pi-hat) at each row of obs [ B ]: closed form between
        Gaussians, grid quadrature for scalar actions, Monte Carlo otherwise
    '''
    p, q = gaussian_params(benchmark_policy, t, obs), gaussian_params(policy, t, obs)
    if p is not None and q is not None:
        return to_np(gaussian_kl(p, q))
    if policy.action_dim == 1:
        u_grid = action_grid(policy, benchmark_policy, n_u_grid)
        if u_grid is None and p is not None:
            mean, cov = p
            std = float(torch.sqrt(cov.reshape(-1)[0]))
            center = to_np(mean[:, 0])
            u_grid = np.linspace(center.min() - 10 * std, center.max() + 10 * std, n_u_grid)
        if u_grid is not None:
            return grid_kl(density_pair(benchmark_policy, policy, t, obs, u_grid))
    return monte_carlo_kl(benchmark_policy, policy, t, obs, generator=generator)

#-----------------------------------------------------------------------------#
#--------------------------------- evaluation --------------------------------#
#-----------------------------------------------------------------------------#

class RunTrace:
    '''
        learned and benchmark trajectories under common random numbers, with
        per-agent values and controls on the shared grid
            states   [ L x K+1 x d ]
            values   [ n_agents x L x K+1 ]
            controls [ n_agents x L x K+1 x m_agent ]
    '''

    def __init__(self, grid, learned_states, benchmark_states, learned_values, benchmark_values,
            learned_controls, benchmark_controls, kl=None):
        self.grid = grid
        self.times = grid.times
        self.learned_states = learned_states
        self.benchmark_states = benchmark_states
        self.learned_values = learned_values
        self.benchmark_values = benchmark_values
        self.learned_controls = learned_controls
        self.benchmark_controls = benchmark_controls
        self.kl = kl


def evaluation_grid(train, evaluate):
    horizon = evaluate['horizon'] or train['n_steps'] * train['delta_t']
    return TimeGrid(int(round(horizon / train['delta_t'])), train['delta_t'])

@torch.no_grad()
def trace_run(model, policies, critics, benchmark, grid, n_paths=1, seed=0, n_u_grid=2001, state_bound=1e6):
    '''
        replays one noise realization under the learned and the benchmark
        policies (deterministic actions) and records everything the metrics need
    '''
    bench_policies = benchmark.policies()
    bench_values = benchmark.values()
    noise = sample_noise(model, grid, n_paths, seed)
    learned = rollout_batch(model, grid, policies, n_paths, seed, deterministic=True, noise=noise,
        state_bound=state_bound)
    reference = rollout_batch(model, grid, bench_policies, n_paths, seed, deterministic=True, noise=noise,
        state_bound=state_bound)

    n_agents = model.n_agents
    values = np.zeros((2, n_agents, n_paths, grid.n_steps + 1))
    controls = np.zeros((2, n_agents, n_paths, grid.n_steps + 1, model.agent_action_dim))
    kl = np.zeros((n_agents, n_paths, grid.n_steps + 1)) if model.entropy_weight > 0 else None
    generator = torch.Generator().manual_seed(seed)

    for k, t in enumerate(grid.times):
        obs_learned = model.observe(learned.states[:, k])
        obs_bench = model.observe(reference.states[:, k])
        for i in range(n_agents):
            critic = critics[i]
            online = critic.online if hasattr(critic, 'online') else critic
            values[0, i, :, k] = to_np(online(t, obs_learned[:, i]))
            values[1, i, :, k] = to_np(bench_values[i](t, obs_bench[:, i]))
            controls[0, i, :, k] = to_np(policies[i].mean_action(t, obs_learned[:, i]))
            controls[1, i, :, k] = to_np(bench_policies[i].mean_action(t, obs_bench[:, i]))
            if kl is not None:
                kl[i, :, k] = policy_kl(bench_policies[i], policies[i], t, obs_learned[:, i], n_u_grid, generator)

    return RunTrace(grid, to_np(learned.states), to_np(reference.states), values[0], values[1],
        controls[0], controls[1], kl)

def report_from_trace(trace, gamma, eps_x=1e-8, eps_v=1e-8, eps_u=1e-8):
    times = trace.times
    T_eval = float(times[-1] - times[0])
    E_X = rmse_state(trace.learned_states, trace.benchmark_states, times, eps_x)

    per_agent = []
    for i in range(len(trace.learned_values)):
        E_V = rmse_value(trace.learned_values[i], trace.benchmark_values[i], times, eps_v)
        if gamma > 0:
            E_u = float(trapezoid(trace.kl[i].mean(axis=0), times) / T_eval) if T_eval > 0 else 0.
            ## quadrature noise around zero
            E_u = max(E_u, 0.)
        else:
            E_u = control_error(trace.learned_controls[i], trace.benchmark_controls[i], times, eps_u)
        per_agent.append({'agent': i, 'E_V': E_V, 'E_u': E_u})

    return MetricReport(
        E_X=E_X,
        E_V=np.mean([a['E_V'] for a in per_agent]),
        E_u=np.mean([a['E_u'] for a in per_agent]),
        T_eval=T_eval, eps_x=eps_x, eps_v=eps_v, eps_u=eps_u,
        control_metric='kl' if gamma > 0 else 'rmse',
        per_agent=per_agent if len(per_agent) > 1 else [],
    )

def evaluate_run(model, policies, critics, benchmark, config, seed=None):
    '''
        metrics of a learned run against its benchmark; config is the full
        ExperimentConfig (train and evaluate sections)
    '''
    evaluate = config['evaluate']
    grid = evaluation_grid(config['train'], evaluate)
    seed = config['seed'] if seed is None else seed
    trace = trace_run(model, policies, critics, benchmark, grid, evaluate['n_paths'], seed,
        evaluate['n_u_grid'], config['train']['state_bound'])
    return report_from_trace(trace, model.entropy_weight, evaluate['eps_x'], evaluate['eps_v'], evaluate['eps_u'])
