import math
from collections import namedtuple

import numpy as np
import torch
import einops

from jumpctl.utils.arrays import DTYPE, to_np
from jumpctl.utils.errors import NumericalError, StateExplosionError
from jumpctl.utils.logger import write_csv

## counts [ B x C ] of jumps in [t_k, t_k + delta_t) per channel; sizes [ B x C x d ] once applied
JumpRecord = namedtuple('JumpRecord', 'step counts sizes')

## full-horizon driving noise, replayed for common-random-number comparisons
Noise = namedtuple('Noise', 'dW jump_counts')

## one grid step of a batch, everything the losses need
Transition = namedtuple('Transition', 'step t delta_t x u next_x log_prob reward dW jump_counts')


class TimeGrid:

    def __init__(self, n_steps, delta_t, t0=0.):
        if not delta_t > 0:
            raise ValueError(f'[ dynamics/simulate ] step size must be positive, got {delta_t}')
        if n_steps < 0:
            raise ValueError(f'[ dynamics/simulate ] number of steps must be non-negative, got {n_steps}')
        self.n_steps = int(n_steps)
        self.delta_t = float(delta_t)
        self.t0 = float(t0)

    def t(self, k):
        return self.t0 + k * self.delta_t

    @property
    def times(self):
        return self.t0 + np.arange(self.n_steps + 1) * self.delta_t

    @property
    def horizon(self):
        return self.n_steps * self.delta_t

    def __len__(self):
        return self.n_steps

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and (self.n_steps, self.delta_t, self.t0) == \
            (other.n_steps, other.delta_t, other.t0)

    def __repr__(self):
        return f'TimeGrid(K={self.n_steps}, delta_t={self.delta_t}, T={self.horizon})'


#-----------------------------------------------------------------------------#
#----------------------------------- noise -----------------------------------#
#-----------------------------------------------------------------------------#

def sample_jumps(lambdas, delta_t, n_paths=1, generator=None, step=0):
    '''
        independent Poisson(lambda_c delta_t) counts per path and channel
    '''
    lambdas = torch.as_tensor(lambdas, dtype=DTYPE)
    if (lambdas < 0).any():
        raise ValueError(f'[ dynamics/simulate ] jump intensities must be non-negative, got {to_np(lambdas)}')
    rates = einops.repeat(lambdas * delta_t, 'c -> l c', l=n_paths)
    return JumpRecord(step, torch.poisson(rates, generator=generator), None)

def draw_noise(model, t, n_paths, delta_t, generator=None, step=0):
    '''
        Brownian increments [ L x q ] with variance delta_t and jump counts [ L x C ]
    '''
    dW = torch.randn(n_paths, model.noise_dim, dtype=DTYPE, generator=generator) * math.sqrt(delta_t)
    if model.n_channels:
        counts = sample_jumps(model.intensities(t), delta_t, n_paths, generator, step).counts
    else:
        counts = torch.zeros(n_paths, 0, dtype=DTYPE)
    return dW, counts

def sample_noise(model, grid, n_paths, seed):
    generator = torch.Generator().manual_seed(seed)
    draws = [draw_noise(model, grid.t(k), n_paths, grid.delta_t, generator, k) for k in range(grid.n_steps)]
    dW = torch.stack([d for d, _ in draws], dim=1) if draws else torch.zeros(n_paths, 0, model.noise_dim, dtype=DTYPE)
    counts = torch.stack([c for _, c in draws], dim=1) if draws else torch.zeros(n_paths, 0, model.n_channels, dtype=DTYPE)
    return Noise(dW, counts)


#-----------------------------------------------------------------------------#
#------------------------------- euler scheme --------------------------------#
#-----------------------------------------------------------------------------#

def euler_step(model, t, x, u, dW, jumps, delta_t):
    '''
        x' = x + b dt + sigma dW + sum_c n_c alpha_c - sum_c lambda_c alpha_c dt
        every jump of the step is applied at the left endpoint state x;
        returns (x', JumpRecord with the applied sizes)
    '''
    if not isinstance(jumps, JumpRecord):
        jumps = JumpRecord(None, jumps, None)
    counts = jumps.counts

    x_next = x + model.drift(t, x, u) * delta_t \
        + torch.einsum('bdq,bq->bd', model.diffusion(t, x, u), dW)

    if model.n_channels:
        sizes = model.jump_sizes(t, x, u)
        compensator = torch.einsum('c,bcd->bd', model.intensities(t), sizes) * delta_t
        x_next = x_next + torch.einsum('bc,bcd->bd', counts, sizes) - compensator
    else:
        sizes = torch.zeros(x.shape[0], 0, x.shape[1], dtype=DTYPE)

    if not torch.isfinite(x_next).all():
        raise NumericalError(f'non-finite state after euler step {jumps.step} (t = {t:.4f})')
    return x_next, JumpRecord(jumps.step, counts, sizes)

def check_state_bound(x, bound, step):
    peak = x.abs().max()
    if peak > bound:
        path = int(x.abs().amax(dim=-1).argmax())
        raise StateExplosionError(step, bound, f'(path {path}, |x| = {float(peak):.3e})')


#-----------------------------------------------------------------------------#
#--------------------------------- path batch --------------------------------#
#-----------------------------------------------------------------------------#

class PathBatch:
    '''
        states      [ L x K+1 x d ]
        actions     [ L x K x m ]
        log_probs   [ L x K x n_agents ]
        rewards     [ L x K x n_agents ]   f(t_k, X_k, u_k) * delta_t
        dW          [ L x K x q ]
        jump_counts [ L x K x C ]
        jump_sizes  [ L x K x C x d ]
    '''

    fields = ('states', 'actions', 'log_probs', 'rewards', 'dW', 'jump_counts', 'jump_sizes')

    def __init__(self, states, actions, log_probs, rewards, dW, jump_counts, jump_sizes, grid, seed=None):
        self.states = states
        self.actions = actions
        self.log_probs = log_probs
        self.rewards = rewards
        self.dW = dW
        self.jump_counts = jump_counts
        self.jump_sizes = jump_sizes
        self.grid = grid
        self.seed = seed

    @property
    def n_paths(self):
        return self.states.shape[0]

    @property
    def n_steps(self):
        return self.actions.shape[1]

    def __len__(self):
        return self.n_paths

    @property
    def noise(self):
        return Noise(self.dW, self.jump_counts)

    def jump_record(self, k):
        return JumpRecord(k, self.jump_counts[:, k], self.jump_sizes[:, k])

    def transition(self, k):
        return Transition(
            step=k, t=self.grid.t(k), delta_t=self.grid.delta_t,
            x=self.states[:, k], u=self.actions[:, k], next_x=self.states[:, k+1],
            log_prob=self.log_probs[:, k], reward=self.rewards[:, k],
            dW=self.dW[:, k], jump_counts=self.jump_counts[:, k],
        )

    def transitions(self):
        for k in range(self.n_steps):
            yield self.transition(k)

    def discounted_returns(self, beta):
        '''
            sum_k exp(-beta t_k) f_k delta_t per path and agent [ L x n_agents ]
        '''
        weights = torch.exp(-beta * torch.as_tensor(self.grid.times[:-1], dtype=DTYPE))
        return torch.einsum('k,lka->la', weights, self.rewards)

    def equals(self, other):
        return all(torch.equal(getattr(self, f), getattr(other, f)) for f in self.fields) \
            and self.grid == other.grid

    def to_csv(self, savepath):
        '''
            one row per (path, step); the terminal state row has empty action fields
        '''
        d = self.states.shape[-1]
        m = self.actions.shape[-1]
        n_agents = self.log_probs.shape[-1]
        q = self.dW.shape[-1]
        n_channels = self.jump_counts.shape[-1]
        fields = ['path', 'step', 't'] \
            + [f'x_{i}' for i in range(d)] + [f'u_{i}' for i in range(m)] \
            + [f'log_prob_{i}' for i in range(n_agents)] + [f'reward_{i}' for i in range(n_agents)] \
            + [f'dW_{i}' for i in range(q)] + [f'jumps_{i}' for i in range(n_channels)]

        states, actions = to_np(self.states), to_np(self.actions)
        log_probs, rewards = to_np(self.log_probs), to_np(self.rewards)
        dW, counts = to_np(self.dW), to_np(self.jump_counts)
        times = self.grid.times

        def rows():
            for l in range(self.n_paths):
                for k in range(self.n_steps + 1):
                    row = {'path': l, 'step': k, 't': float(times[k])}
                    row.update({f'x_{i}': float(states[l, k, i]) for i in range(d)})
                    if k < self.n_steps:
                        row.update({f'u_{i}': float(actions[l, k, i]) for i in range(m)})
                        row.update({f'log_prob_{i}': float(log_probs[l, k, i]) for i in range(n_agents)})
                        row.update({f'reward_{i}': float(rewards[l, k, i]) for i in range(n_agents)})
                        row.update({f'dW_{i}': float(dW[l, k, i]) for i in range(q)})
                        row.update({f'jumps_{i}': int(counts[l, k, i]) for i in range(n_channels)})
                    yield row

        return write_csv(savepath, fields, rows())


#-----------------------------------------------------------------------------#
#---------------------------------- rollouts ---------------------------------#
#-----------------------------------------------------------------------------#

def act(model, policies, t, x, generator=None, deterministic=False):
    '''
        every agent samples from its own policy given its observation;
        returns (u [ B x m ], log_probs [ B x n_agents ], samples)
    '''
    obs = model.observe(x)
    samples = []
    for i, policy in enumerate(policies):
        if deterministic:
            samples.append(policy.mean_sample(t, obs[:, i]))
        else:
            samples.append(policy.sample(t, obs[:, i], generator=generator))
    u = torch.cat([s.action for s in samples], dim=-1)
    log_probs = torch.stack([s.log_density for s in samples], dim=-1)
    return u, log_probs, samples

@torch.no_grad()
def rollout_batch(model, grid, policies, n_paths, seed, deterministic=False, noise=None, state_bound=1e6):
    '''
        simulates n_paths trajectories under the (joint) policy;
        `noise` replays pre-sampled Brownian increments and jump counts,
        otherwise they are drawn from the seeded generator step by step
    '''
    if not isinstance(policies, (list, tuple)):
        policies = [policies]
    if len(policies) != model.n_agents:
        raise ValueError(f'[ dynamics/simulate ] {model.n_agents} agents but {len(policies)} policies')
    if noise is not None and noise.dW.shape[:2] != (n_paths, grid.n_steps):
        raise ValueError(f'[ dynamics/simulate ] noise shape {tuple(noise.dW.shape)} does not match L={n_paths}, K={grid.n_steps}')

    generator = torch.Generator().manual_seed(seed)
    x = model.initial_state(n_paths)

    states, actions, log_probs, rewards = [x], [], [], []
    dWs, counts, sizes = [], [], []
    for k in range(grid.n_steps):
        t = grid.t(k)
        if noise is None:
            dW, count = draw_noise(model, t, n_paths, grid.delta_t, generator, k)
        else:
            dW, count = noise.dW[:, k], noise.jump_counts[:, k]

        u, log_prob, _ = act(model, policies, t, x, generator, deterministic)
        reward = model.reward(t, x, u) * grid.delta_t
        x, jumps = euler_step(model, t, x, u, dW, JumpRecord(k, count, None), grid.delta_t)
        check_state_bound(x, state_bound, k + 1)

        states.append(x)
        actions.append(u)
        log_probs.append(log_prob)
        rewards.append(reward)
        dWs.append(dW)
        counts.append(count)
        sizes.append(jumps.sizes)

    stack = lambda xs, shape: torch.stack(xs, dim=1) if xs else torch.zeros(shape, dtype=DTYPE)
    return PathBatch(
        states=torch.stack(states, dim=1),
        actions=stack(actions, (n_paths, 0, model.control_dim)),
        log_probs=stack(log_probs, (n_paths, 0, model.n_agents)),
        rewards=stack(rewards, (n_paths, 0, model.n_agents)),
        dW=stack(dWs, (n_paths, 0, model.noise_dim)),
        jump_counts=stack(counts, (n_paths, 0, model.n_channels)),
        jump_sizes=stack(sizes, (n_paths, 0, model.n_channels, model.state_dim)),
        grid=grid,
        seed=seed,
    )
