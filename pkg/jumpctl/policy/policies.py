from collections import namedtuple

import torch
import torch.nn as nn

from jumpctl.utils.arrays import DTYPE, time_column
from .gaussian import GaussianBase
from .flow import SplineFlow
from .squash import SquashMap

## action u; log pi(u | t, obs); base draw z0; flow output z_flow with u = S(z_flow)
PolicySample = namedtuple('PolicySample', 'action log_density z0 z_flow')


class FlowPolicy(nn.Module):
    '''
        pi(u | t, obs) as the pushforward of a conditional Gaussian through
        an optional spline flow F and an optional squashing map S:
            u = S(F(mean + std * eps))
            log pi(u) = log N(z0) - log |det J_F(z0)| - log |det J_S(z_flow)|
    '''

    def __init__(self, obs_dim, action_dim, hidden_width=32, depth=3, fixed_std=None,
            flow=False, n_bins=6, tail_bound=2.5, conditioner_width=32, conditioner_depth=2,
            freeze_updates=30, bounds=None, tau_start=2.0, tau_end=1.0):
        super().__init__()
        self.config = dict(
            obs_dim=obs_dim, action_dim=action_dim, hidden_width=hidden_width, depth=depth,
            fixed_std=fixed_std, flow=flow, n_bins=n_bins, tail_bound=tail_bound,
            conditioner_width=conditioner_width, conditioner_depth=conditioner_depth,
            freeze_updates=freeze_updates, bounds=list(bounds) if bounds is not None else None,
            tau_start=tau_start, tau_end=tau_end,
        )
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.freeze_updates = freeze_updates
        cond_dim = obs_dim + 1

        self.base = GaussianBase(cond_dim, action_dim, hidden_width, depth, fixed_std)
        self.flow = SplineFlow(cond_dim, action_dim, n_bins, tail_bound, conditioner_width, conditioner_depth) \
            if flow else None
        self.squash = SquashMap(bounds[0], bounds[1], tau_start, tau_end, freeze_updates) \
            if bounds is not None else None

        ## actor updates taken so far; drives the flow warm-up and the temperature
        self.register_buffer('n_updates', torch.tensor(0, dtype=torch.long))

    #-------------------------------- internals --------------------------------#

    def condition(self, t, obs):
        return torch.cat([time_column(t, obs.shape[0]), obs.to(DTYPE)], dim=-1)

    @property
    def flow_active(self):
        return self.flow is not None and int(self.n_updates) >= self.freeze_updates

    @property
    def tau(self):
        return self.squash.tau(int(self.n_updates)) if self.squash is not None else 1.

    def _push(self, z0, cond):
        if self.flow_active:
            return self.flow.forward(z0, cond)
        return z0, torch.zeros(z0.shape[0], dtype=DTYPE)

    def _pull(self, z_flow, cond):
        if self.flow_active:
            return self.flow.inverse(z_flow, cond)
        return z_flow, torch.zeros(z_flow.shape[0], dtype=DTYPE)

    def _squash(self, z_flow):
        if self.squash is not None:
            return self.squash.forward(z_flow, self.tau)
        return z_flow, torch.zeros(z_flow.shape[0], dtype=DTYPE)

    #----------------------------------- api -----------------------------------#

    def sample(self, t, obs, generator=None, eps=None):
        cond = self.condition(t, obs)
        mean, std = self.base(cond)
        if eps is None:
            eps = torch.randn(mean.shape, dtype=DTYPE, generator=generator)
        z0 = mean + std * eps
        z_flow, log_det_flow = self._push(z0, cond)
        u, log_det_squash = self._squash(z_flow)
        log_density = GaussianBase.log_prob(z0, mean, std) - log_det_flow - log_det_squash
        return PolicySample(u, log_density, z0, z_flow)

    def mean_sample(self, t, obs):
        '''
            the sample at eps = 0, used as the deterministic action
        '''
        return self.sample(t, obs, eps=torch.zeros(obs.shape[0], self.action_dim, dtype=DTYPE))

    def mean_action(self, t, obs):
        return self.mean_sample(t, obs).action

    def log_prob(self, t, obs, u):
        '''
            raises SaturationError when a squashed action touches its bounds
        '''
        if self.squash is not None:
            z_flow, log_det_squash = self.squash.inverse(u, self.tau)
        else:
            z_flow, log_det_squash = u, torch.zeros(u.shape[0], dtype=DTYPE)
        return self._log_prob_flow(t, obs, z_flow) - log_det_squash

    def log_prob_latent(self, t, obs, z_flow):
        '''
            log pi(S(z_flow)) evaluated from the pre-squash value, so saturated
            actions keep a finite score
        '''
        _, log_det_squash = self._squash(z_flow)
        return self._log_prob_flow(t, obs, z_flow) - log_det_squash

    def _log_prob_flow(self, t, obs, z_flow):
        cond = self.condition(t, obs)
        mean, std = self.base(cond)
        z0, log_det_inverse = self._pull(z_flow, cond)
        return GaussianBase.log_prob(z0, mean, std) + log_det_inverse

    def entropy_estimate(self, t, obs, n_samples=1000, generator=None):
        '''
            -mean log pi over fresh samples at each row of obs [ B ]
        '''
        if n_samples < 1:
            raise ValueError(f'[ policy/policies ] need at least one sample, got {n_samples}')
        B = obs.shape[0]
        obs_rep = obs.repeat_interleave(n_samples, dim=0)
        t_rep = t.repeat_interleave(n_samples) if torch.is_tensor(t) and t.dim() > 0 else t
        with torch.no_grad():
            sample = self.sample(t_rep, obs_rep, generator=generator)
        return -sample.log_density.reshape(B, n_samples).mean(dim=-1)

    def advance(self):
        self.n_updates += 1

    def policy_config(self):
        return dict(self.config)


def build_policy(config):
    '''
        one FlowPolicy from a `policy_config()` dictionary
    '''
    return FlowPolicy(**config)

def build_policies(model, network):
    '''
        one policy per agent, observing model.observe(x)[:, i]
    '''
    bounds = (model.action_low, model.action_high) if model.squash else None
    return [
        FlowPolicy(
            obs_dim=model.obs_dim,
            action_dim=model.agent_action_dim,
            hidden_width=network['actor_width'],
            depth=network['actor_depth'],
            fixed_std=network['fixed_std'],
            flow=network['flow'],
            n_bins=network['n_bins'],
            tail_bound=network['tail_bound'],
            conditioner_width=network['conditioner_width'],
            conditioner_depth=network['conditioner_depth'],
            freeze_updates=network['freeze_updates'],
            bounds=bounds,
            tau_start=network['tau_start'],
            tau_end=network['tau_end'],
        )
        for _ in range(model.n_agents)
    ]
