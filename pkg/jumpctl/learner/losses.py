import math
from collections import namedtuple

import torch
import einops

from jumpctl.utils.arrays import DTYPE
from jumpctl.utils.errors import ConfigError

## advantages [ L ] (detached); log pi of the sampled actions [ L ]; actions on the squash bounds [ L ]
AdvantageBatch = namedtuple('AdvantageBatch', 'values log_probs saturated')


def agent_obs(model, x, agent=0):
    '''
        features of one agent; the raw state without a model
    '''
    if model is None:
        return x
    return model.observe(x)[:, agent]

#-----------------------------------------------------------------------------#
#-------------------------------- td errors ----------------------------------#
#-----------------------------------------------------------------------------#

def td_error(critic, transition, beta, model=None, agent=0):
    '''
        delta = f dt + exp(-beta dt) V-bar(t', x') - V(t, x)   [ L ]
        bootstraps with the target critic; gradients reach the online critic only
    '''
    tr = transition
    with torch.no_grad():
        next_value = critic.target(tr.t + tr.delta_t, agent_obs(model, tr.next_x, agent))
    value = critic.online(tr.t, agent_obs(model, tr.x, agent))
    return tr.reward[:, agent] + math.exp(-beta * tr.delta_t) * next_value - value

def martingale_correction(critic, transition, model, agent=0):
    '''
        grad V' sigma dW + sum_c (n_c - lambda_c dt) (V(x + alpha_c) - V(x)),
        the martingale part of the one-step value increment, detached
    '''
    tr = transition
    x = tr.x.detach().requires_grad_(True)
    with torch.enable_grad():
        value = critic.online(tr.t, agent_obs(model, x, agent))
        grad, = torch.autograd.grad(value.sum(), x)

    with torch.no_grad():
        diffusion = model.diffusion(tr.t, tr.x, tr.u)
        correction = torch.einsum('bd,bdq,bq->b', grad, diffusion, tr.dW)
        if model.n_channels:
            sizes = model.jump_sizes(tr.t, tr.x, tr.u)
            n_channels = sizes.shape[1]
            shifted = einops.rearrange(tr.x[:, None, :] + sizes, 'b c d -> (b c) d')
            t_rep = tr.t.repeat_interleave(n_channels) if torch.is_tensor(tr.t) and tr.t.dim() > 0 else tr.t
            jumped = einops.rearrange(critic.online(t_rep, agent_obs(model, shifted, agent)), '(b c) -> b c', c=n_channels)
            compensated = tr.jump_counts - model.intensities(tr.t) * tr.delta_t
            correction = correction + (compensated * (jumped - value.detach()[:, None])).sum(dim=-1)
    return correction

def martingale_corrected_td(critic, transition, beta, model, agent=0):
    '''
        delta-tilde = delta minus the martingale part of the value increment
    '''
    if model is None:
        raise ConfigError('train.martingale_correction', 'the corrected TD error needs the model coefficients')
    return td_error(critic, transition, beta, model, agent) - martingale_correction(critic, transition, model, agent)

def critic_loss(td_errors):
    '''
        mean squared TD error over a window: td_errors is a list of [ L ] tensors
    '''
    if len(td_errors) == 0:
        raise ValueError('[ learner/losses ] critic loss over an empty window')
    return torch.stack(list(td_errors)).pow(2).mean()

#-----------------------------------------------------------------------------#
#-------------------------------- advantages ---------------------------------#
#-----------------------------------------------------------------------------#

@torch.no_grad()
def gae_advantage(critic, transition, beta, gamma, log_prob=None, model=None, agent=0):
    '''
        A = (f dt + exp(-beta dt) V(t', x') - V(t, x)) / dt - gamma log pi(u | t, x)
        with the online critic; log_prob defaults to the stored sampled-action density
    '''
    tr = transition
    if log_prob is None:
        log_prob = tr.log_prob[:, agent]
    next_value = critic.online(tr.t + tr.delta_t, agent_obs(model, tr.next_x, agent))
    value = critic.online(tr.t, agent_obs(model, tr.x, agent))
    increment = tr.reward[:, agent] + math.exp(-beta * tr.delta_t) * next_value - value
    return increment / tr.delta_t - gamma * log_prob.detach().to(DTYPE)

def actor_loss(log_probs, advantages, beta):
    '''
        -(1 / (beta L K)) sum log pi * stopgrad(A) over a window of K steps;
        both arguments are lists of [ L ] tensors
    '''
    if len(log_probs) == 0 or len(log_probs) != len(advantages):
        raise ValueError(f'[ learner/losses ] actor window mismatch: {len(log_probs)} log-densities, '
            f'{len(advantages)} advantages')
    log_probs = torch.stack(list(log_probs))
    advantages = torch.stack([a.detach() for a in advantages])
    return -(log_probs * advantages).sum() / (beta * log_probs.numel())
