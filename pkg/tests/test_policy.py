import math

import numpy as np
import pytest
import torch
import torch.nn as nn
from scipy.integrate import trapezoid

from jumpctl.dynamics import model_from_config
from jumpctl.models import finite_difference_check
from jumpctl.policy import FlowPolicy, SplineFlow, SquashMap, flow_forward, flow_inverse, build_policy, build_policies
from jumpctl.utils.arrays import DTYPE
from jumpctl.utils.errors import SaturationError


def _zero_mean(policy):
    with torch.no_grad():
        nn.init.zeros_(policy.base.net.output.weight)
        nn.init.zeros_(policy.base.net.output.bias)
    return policy

def _perturb(flow, seed=0, scale=0.5):
    generator = torch.Generator().manual_seed(seed)
    with torch.no_grad():
        weight = flow.conditioner.output.weight
        weight.copy_(scale * torch.randn(weight.shape, dtype=DTYPE, generator=generator))
    return flow

def _flow_policy(seed=0, bounds=(0., 1.)):
    torch.manual_seed(seed)
    policy = FlowPolicy(1, 1, hidden_width=8, depth=1, flow=True, bounds=bounds, freeze_updates=30)
    _perturb(policy.flow, seed)
    policy.n_updates.fill_(30)
    return policy

#--------------------------------- densities --------------------------------#

def test_standard_normal_log_density_at_mode():
    policy = _zero_mean(FlowPolicy(1, 1, hidden_width=4, depth=1, fixed_std=1.))
    sample = policy.mean_sample(0., torch.zeros(1, 1, dtype=DTYPE))
    assert float(sample.action) == 0.
    assert float(sample.log_density) == pytest.approx(-0.5 * math.log(2 * math.pi))

def test_multivariate_log_density_at_mode():
    policy = _zero_mean(FlowPolicy(2, 3, hidden_width=4, depth=1, fixed_std=0.5))
    sample = policy.mean_sample(0.3, torch.ones(4, 2, dtype=DTYPE))
    expected = -1.5 * math.log(2 * math.pi) - 3 * math.log(0.5)
    assert sample.log_density.tolist() == pytest.approx([expected] * 4)

def test_fixed_std_is_constant():
    policy = FlowPolicy(1, 1, hidden_width=4, depth=1, fixed_std=0.1)
    _, std = policy.base(policy.condition(torch.rand(6, dtype=DTYPE), torch.randn(6, 1, dtype=DTYPE)))
    assert torch.all(std == 0.1)

def test_learned_std_is_positive():
    policy = FlowPolicy(1, 2, hidden_width=4, depth=1)
    _, std = policy.base(policy.condition(0., 100 * torch.randn(32, 1, dtype=DTYPE)))
    assert torch.all(std > 0)

def test_squash_log_det_at_origin():
    squash = SquashMap(0., 1.)
    assert float(squash.log_det(torch.zeros(1, 1, dtype=DTYPE), 1.)) == pytest.approx(math.log(0.25))

def test_squash_image_and_temperature():
    squash = SquashMap(0., 1., tau_start=2., tau_end=1., anneal_steps=30)
    u, _ = squash.forward(torch.linspace(-30, 30, 101, dtype=DTYPE)[:, None], 1.)
    assert torch.all(u >= 0) and torch.all(u <= 1)
    assert squash.tau(0) == 2. and squash.tau(15) == pytest.approx(1.5) and squash.tau(100) == 1.

def test_sample_and_log_prob_agree():
    policy = _flow_policy()
    generator = torch.Generator().manual_seed(1)
    t = torch.rand(1000, dtype=DTYPE, generator=generator)
    obs = torch.randn(1000, 1, dtype=DTYPE, generator=generator)
    with torch.no_grad():
        sample = policy.sample(t, obs, generator=generator)
        log_prob = policy.log_prob(t, obs, sample.action)
    assert torch.allclose(log_prob, sample.log_density, atol=1e-8)
    assert torch.isfinite(sample.log_density).all()

def test_log_prob_latent_matches_log_prob():
    policy = _flow_policy(seed=2)
    obs = torch.randn(50, 1, dtype=DTYPE)
    with torch.no_grad():
        sample = policy.sample(0.5, obs)
        latent = policy.log_prob_latent(0.5, obs, sample.z_flow)
    assert torch.allclose(latent, sample.log_density, atol=1e-10)

def test_log_prob_rejects_saturated_actions():
    policy = _flow_policy()
    obs = torch.zeros(2, 1, dtype=DTYPE)
    with pytest.raises(SaturationError):
        policy.log_prob(0., obs, torch.tensor([[0.5], [1.]], dtype=DTYPE))

@pytest.mark.parametrize('seed', [0, 1, 2])
def test_squashed_flow_density_is_normalized(seed):
    policy = _flow_policy(seed)
    u = np.linspace(1e-7, 1 - 1e-7, 20001)
    obs = torch.full((len(u), 1), float(seed) - 1., dtype=DTYPE)
    with torch.no_grad():
        density = torch.exp(policy.log_prob(0.7, obs, torch.as_tensor(u, dtype=DTYPE)[:, None])).numpy()
    assert trapezoid(density, u) == pytest.approx(1., abs=1e-3)

def test_gaussian_density_is_normalized():
    policy = FlowPolicy(1, 1, hidden_width=4, depth=1)
    u = np.linspace(-30, 30, 40001)
    obs = torch.full((len(u), 1), 0.3, dtype=DTYPE)
    with torch.no_grad():
        density = torch.exp(policy.log_prob(0., obs, torch.as_tensor(u, dtype=DTYPE)[:, None])).numpy()
    assert trapezoid(density, u) == pytest.approx(1., abs=1e-3)

#----------------------------------- flow -----------------------------------#

def test_flow_starts_at_identity():
    flow = SplineFlow(2, 1)
    z = torch.linspace(-2.4, 2.4, 101, dtype=DTYPE)[:, None]
    z_flow, log_det = flow_forward(flow, z, torch.randn(101, 2, dtype=DTYPE))
    assert torch.allclose(z_flow, z, atol=1e-10)
    assert torch.allclose(log_det, torch.zeros_like(log_det), atol=1e-10)

def test_flow_tails_are_identity():
    flow = _perturb(SplineFlow(2, 1))
    z = torch.tensor([[-4.], [-2.6], [2.6], [7.]], dtype=DTYPE)
    z_flow, log_det = flow.forward(z, torch.randn(4, 2, dtype=DTYPE))
    assert torch.equal(z_flow, z)
    assert torch.all(log_det == 0)

def test_flow_round_trip():
    flow = _perturb(SplineFlow(2, 1), seed=3)
    generator = torch.Generator().manual_seed(0)
    z = 2 * torch.randn(10 ** 4, 1, dtype=DTYPE, generator=generator)
    ## knots and the tail boundary
    z[:7, 0] = torch.tensor([-2.5, -2.5 + 5 / 6, 0., 2.5 - 5 / 6, 2.5, -1e-12, 1e-12], dtype=DTYPE)
    cond = torch.randn(10 ** 4, 2, dtype=DTYPE, generator=generator)
    with torch.no_grad():
        z_flow, log_det = flow.forward(z, cond)
        z_back, log_det_inverse = flow_inverse(flow, z_flow, cond)
    assert float((z_back - z).abs().max()) < 1e-6
    assert torch.allclose(log_det, -log_det_inverse, atol=1e-8)

def test_flow_log_det_matches_finite_differences():
    flow = _perturb(SplineFlow(2, 1), seed=4)
    generator = torch.Generator().manual_seed(1)
    z = 1.5 * torch.randn(200, 1, dtype=DTYPE, generator=generator)
    cond = torch.randn(200, 2, dtype=DTYPE, generator=generator)
    h = 1e-6
    with torch.no_grad():
        _, log_det = flow.forward(z, cond)
        upper, _ = flow.forward(z + h, cond)
        lower, _ = flow.forward(z - h, cond)
    numeric = torch.log((upper - lower)[:, 0] / (2 * h))
    assert float(((numeric - log_det) / log_det.abs().clamp(min=1.)).abs().max()) < 1e-4

def test_flow_derivatives_are_positive():
    flow = _perturb(SplineFlow(2, 1), scale=3.)
    derivatives = flow.derivatives(torch.randn(64, 2, dtype=DTYPE))
    assert derivatives.shape == (64, 1, 7)
    assert torch.all(derivatives > 0)

def test_flow_is_frozen_during_warm_up():
    torch.manual_seed(0)
    policy = FlowPolicy(1, 1, hidden_width=8, depth=1, flow=True, freeze_updates=30)
    _perturb(policy.flow)
    reference = FlowPolicy(1, 1, hidden_width=8, depth=1)
    reference.base.load_state_dict(policy.base.state_dict())

    obs, u = torch.randn(16, 1, dtype=DTYPE), torch.randn(16, 1, dtype=DTYPE)
    for _ in range(29):
        policy.advance()
    assert not policy.flow_active
    with torch.no_grad():
        assert torch.allclose(policy.log_prob(0.2, obs, u), reference.log_prob(0.2, obs, u))
    policy.advance()
    assert policy.flow_active
    with torch.no_grad():
        assert not torch.allclose(policy.log_prob(0.2, obs, u), reference.log_prob(0.2, obs, u))

def test_log_prob_parameter_gradient():
    policy = _flow_policy(seed=5)
    generator = torch.Generator().manual_seed(2)
    obs = torch.randn(16, 1, dtype=DTYPE, generator=generator)
    with torch.no_grad():
        u = policy.sample(0.4, obs, generator=generator).action
    fn = lambda: policy.log_prob(0.4, obs, u).mean()
    assert finite_difference_check(fn, policy.parameters(), n_coords=100, generator=generator) < 1e-4

@pytest.mark.parametrize('part', ['base', 'conditioner'])
def test_log_prob_gradient_per_network(part):
    policy = _flow_policy(seed=7)
    network = policy.base if part == 'base' else policy.flow.conditioner
    generator = torch.Generator().manual_seed(3)
    obs = torch.randn(16, 1, dtype=DTYPE, generator=generator)
    with torch.no_grad():
        u = policy.sample(0.4, obs, generator=generator).action
    fn = lambda: policy.log_prob(0.4, obs, u).mean()
    grads = torch.autograd.grad(fn(), list(network.parameters()))
    assert any(bool(g.abs().max() > 0) for g in grads)
    assert finite_difference_check(fn, network.parameters(), n_coords=100, generator=generator) < 1e-4

def test_log_prob_input_gradcheck():
    policy = _flow_policy(seed=6)
    obs = torch.randn(4, 1, dtype=DTYPE)
    u = torch.tensor([[0.2], [0.4], [0.6], [0.8]], dtype=DTYPE, requires_grad=True)
    assert torch.autograd.gradcheck(lambda u: policy.log_prob(0.1, obs, u), (u,))

#---------------------------------- entropy ---------------------------------#

@pytest.mark.parametrize('std', [1., 0.1])
def test_entropy_estimate(std):
    policy = _zero_mean(FlowPolicy(1, 1, hidden_width=4, depth=1, fixed_std=std))
    n = 20000
    entropy = float(policy.entropy_estimate(0., torch.zeros(1, 1, dtype=DTYPE), n_samples=n,
        generator=torch.Generator().manual_seed(0)))
    expected = 0.5 * math.log(2 * math.pi * math.e) + math.log(std)
    ## -log pi = const + eps^2 / 2 has standard deviation 1 / sqrt(2)
    assert abs(entropy - expected) < 3 * math.sqrt(0.5 / n)

def test_entropy_scaling_shifts_by_log_c():
    generator = lambda: torch.Generator().manual_seed(4)
    obs = torch.zeros(1, 1, dtype=DTYPE)
    narrow = _zero_mean(FlowPolicy(1, 1, hidden_width=4, depth=1, fixed_std=0.2))
    wide = _zero_mean(FlowPolicy(1, 1, hidden_width=4, depth=1, fixed_std=0.6))
    shift = wide.entropy_estimate(0., obs, 500, generator()) - narrow.entropy_estimate(0., obs, 500, generator())
    assert float(shift) == pytest.approx(math.log(3.), abs=1e-10)

def test_entropy_estimate_needs_samples():
    policy = FlowPolicy(1, 1, hidden_width=4, depth=1)
    with pytest.raises(ValueError):
        policy.entropy_estimate(0., torch.zeros(1, 1, dtype=DTYPE), n_samples=0)

#------------------------------ config wiring -------------------------------#

def test_build_policies_from_config(small_config):
    merton = model_from_config(small_config('merton-entropy'))
    policy, = build_policies(merton, small_config('merton-entropy')['network'])
    assert policy.squash is not None and policy.flow is not None

    game_config = small_config('game')
    policies = build_policies(model_from_config(game_config), game_config['network'])
    assert len(policies) == 2
    assert all(p.squash is None and p.flow is None for p in policies)
    assert policies[0].base.fixed_std == 0.1

def test_policy_config_rebuilds_the_policy():
    policy = _flow_policy(seed=7)
    rebuilt = build_policy(policy.policy_config())
    rebuilt.load_state_dict(policy.state_dict())
    obs, u = torch.randn(8, 1, dtype=DTYPE), torch.rand(8, 1, dtype=DTYPE) * 0.9 + 0.05
    with torch.no_grad():
        assert torch.allclose(rebuilt.log_prob(0., obs, u), policy.log_prob(0., obs, u))
