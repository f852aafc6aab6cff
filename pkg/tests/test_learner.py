import math

import numpy as np
import pytest
import torch
import torch.nn as nn
from numpy.polynomial.hermite_e import hermegauss
from scipy.stats import poisson

from jumpctl.benchmarks import GameBenchmark, solve_benchmark
from jumpctl.dynamics import LqModel, TimeGrid, Transition, draw_noise, euler_step, rollout_batch, model_from_config
from jumpctl.experiment import build_trainer, load_experiment
from jumpctl.learner import (
    ValueNetwork, CriticPair, td_error, martingale_correction, martingale_corrected_td,
    critic_loss, gae_advantage, actor_loss,
)
from jumpctl.metrics import evaluate_run
from jumpctl.models import finite_difference_check
from jumpctl.policy import FlowPolicy
from jumpctl.utils.arrays import DTYPE
from jumpctl.utils.errors import ConfigError, DivergenceError


class ConstantValue(nn.Module):

    def __init__(self, c):
        super().__init__()
        self.c = c

    def forward(self, t, obs):
        return self.c + 0. * obs.sum(dim=-1)


def _transition(x, u, next_x, reward, dW=None, counts=None, delta_t=0.01, t=0., log_prob=None):
    n = x.shape[0]
    return Transition(
        step=0, t=t, delta_t=delta_t, x=x, u=u, next_x=next_x,
        log_prob=log_prob if log_prob is not None else torch.zeros(n, 1, dtype=DTYPE),
        reward=reward, dW=dW if dW is not None else torch.zeros_like(x),
        jump_counts=counts if counts is not None else torch.zeros_like(x),
    )

def _random_transition(n=32, seed=0):
    generator = torch.Generator().manual_seed(seed)
    x = torch.randn(n, 1, dtype=DTYPE, generator=generator)
    next_x = x + 0.1 * torch.randn(n, 1, dtype=DTYPE, generator=generator)
    reward = -0.01 * x ** 2
    return _transition(x, torch.zeros_like(x), next_x, reward)

def _lq_model(gamma=0., **kwargs):
    params = dict(b=[0.5], sigma=[0.3], alpha=[0.3], lambdas=[0.2], R=5., Q=0.5, beta=1., gamma=gamma, x0=[1.])
    params.update(kwargs)
    return LqModel(**params)

def _lq_benchmark(small_config, gamma=0.):
    config = small_config('lq-homogeneous', model={'gamma': gamma})
    model = model_from_config(config)
    return model, solve_benchmark(model, config)

#--------------------------------- td errors --------------------------------#

def test_td_error_of_constant_critic():
    critic = CriticPair(ConstantValue(1.))
    x = torch.ones(3, 1, dtype=DTYPE)
    delta = td_error(critic, _transition(x, x, x, torch.zeros(3, 1, dtype=DTYPE)), beta=1.)
    assert delta.tolist() == pytest.approx([math.exp(-0.01) - 1] * 3)
    assert float(delta[0]) == pytest.approx(-0.00995017, abs=1e-8)

def test_td_error_bootstraps_from_the_target():
    critic = CriticPair(ValueNetwork(1, 4, 1))
    with torch.no_grad():
        critic.target.net.output.bias.fill_(2.)
    x = torch.zeros(2, 1, dtype=DTYPE)
    delta = td_error(critic, _transition(x, x, x, torch.zeros(2, 1, dtype=DTYPE)), beta=1.)
    assert delta.tolist() == pytest.approx([2 * math.exp(-0.01)] * 2)
    delta.sum().backward()
    assert all(p.grad is None for p in critic.target.parameters())

def test_exact_lq_critic_has_zero_mean_td_error(small_config):
    model, benchmark = _lq_benchmark(small_config)
    critic = CriticPair(benchmark.values()[0])
    batch = rollout_batch(model, TimeGrid(100, 0.01), benchmark.policies(), 1000, seed=0)
    deltas = torch.cat([td_error(critic, tr, model.discount, model) for tr in batch.transitions()]).detach().numpy()
    assert len(deltas) == 10 ** 5
    assert abs(deltas.mean()) < 3 * deltas.std() / np.sqrt(len(deltas)) + 1e-4

def test_martingale_correction_reduces_variance(small_config):
    model, benchmark = _lq_benchmark(small_config)
    critic = CriticPair(benchmark.values()[0])
    batch = rollout_batch(model, TimeGrid(100, 0.01), benchmark.policies(), 1000, seed=1)
    plain, corrected = [], []
    for tr in batch.transitions():
        plain.append(td_error(critic, tr, model.discount, model).detach())
        corrected.append(martingale_corrected_td(critic, tr, model.discount, model).detach())
    corrected = torch.cat(corrected)
    assert corrected.var() < 0.1 * torch.cat(plain).var()
    ## unbiased up to the second-order discretisation error
    standard_error = float(corrected.std()) / math.sqrt(len(corrected))
    assert abs(float(corrected.mean())) < 3 * standard_error + 0.01 ** 2

def _quadrature_transition(model, x, u, delta_t, n_nodes=40, max_jumps=8):
    '''
        one-step transitions from (0, x) under action u on Gauss-Hermite nodes for dW
        and Poisson counts 0..max_jumps, with their probability weights
    '''
    nodes, node_weights = hermegauss(n_nodes)
    jumps = np.arange(max_jumps + 1)
    z, n = [a.ravel() for a in np.meshgrid(nodes, jumps, indexing='ij')]
    rate = float(model.intensities(0.)[0]) * delta_t
    weights = np.outer(node_weights / math.sqrt(2 * math.pi), poisson.pmf(jumps, rate)).ravel()
    rows = len(z)
    x = torch.full((rows, 1), x, dtype=DTYPE)
    u = torch.full((rows, 1), u, dtype=DTYPE)
    dW = torch.tensor(z[:, None] * math.sqrt(delta_t), dtype=DTYPE)
    counts = torch.tensor(n[:, None], dtype=DTYPE)
    next_x, _ = euler_step(model, 0., x, u, dW, counts, delta_t)
    tr = _transition(x, u, next_x, model.reward(0., x, u) * delta_t, dW, counts, delta_t)
    return tr, torch.tensor(weights, dtype=DTYPE)

def _weighted_moments(values, weights):
    mean = (weights * values).sum()
    return float(mean), float((weights * (values - mean) ** 2).sum())

def test_advantage_bias_is_first_order(small_config):
    '''
        |E[A] - q| halves with delta_t under the exact critic
    '''
    model, benchmark = _lq_benchmark(small_config)
    critic = CriticPair(benchmark.values()[0])
    q = float(benchmark.q_value(0., np.ones((1, 1)), np.full((1, 1), 0.3))[0])
    bias = {}
    for delta_t in (0.02, 0.01):
        tr, weights = _quadrature_transition(model, 1., 0.3, delta_t)
        assert float(weights.sum()) == pytest.approx(1., abs=1e-12)
        with torch.no_grad():
            mean, _ = _weighted_moments(gae_advantage(critic, tr, model.discount, 0., model=model), weights)
        bias[delta_t] = abs(mean - q)
    assert bias[0.01] > 1e-6
    assert 1.5 <= bias[0.02] / bias[0.01] <= 3.

def test_martingale_correction_gain_grows_as_delta_t_halves(small_config):
    '''
        var(delta) / var(delta-tilde) scales like 1 / delta_t
    '''
    model, benchmark = _lq_benchmark(small_config)
    critic = CriticPair(benchmark.values()[0])
    gain = {}
    for delta_t in (0.02, 0.01):
        tr, weights = _quadrature_transition(model, 1., 0.3, delta_t)
        plain = td_error(critic, tr, model.discount, model).detach()
        corrected = martingale_corrected_td(critic, tr, model.discount, model).detach()
        plain_mean, plain_var = _weighted_moments(plain, weights)
        corrected_mean, corrected_var = _weighted_moments(corrected, weights)
        assert corrected_mean == pytest.approx(plain_mean, abs=1e-12)
        gain[delta_t] = plain_var / corrected_var
    assert 1.5 <= gain[0.01] / gain[0.02] <= 3.

def test_correction_vanishes_without_noise():
    model = _lq_model(sigma=[0.], lambdas=[0.])
    critic = CriticPair(ValueNetwork(1, 8, 2))
    with torch.no_grad():
        nn.init.normal_(critic.online.net.output.weight)
    tr = _random_transition()
    tr = tr._replace(dW=torch.randn(32, 1, dtype=DTYPE))
    assert torch.allclose(martingale_corrected_td(critic, tr, 1., model), td_error(critic, tr, 1., model))

def test_correction_vanishes_for_constant_critic():
    model = _lq_model()
    critic = CriticPair(ConstantValue(3.))
    tr = _random_transition()
    tr = tr._replace(dW=torch.randn(32, 1, dtype=DTYPE), jump_counts=torch.ones(32, 1, dtype=DTYPE))
    assert torch.allclose(martingale_correction(critic, tr, model), torch.zeros(32, dtype=DTYPE))

def test_corrected_td_needs_the_model():
    with pytest.raises(ConfigError):
        martingale_corrected_td(CriticPair(ConstantValue(0.)), _random_transition(), 1., None)

#-------------------------------- critic loss -------------------------------#

def test_critic_loss_values():
    assert float(critic_loss([torch.zeros(4, dtype=DTYPE)])) == 0.
    assert float(critic_loss([torch.tensor([2.], dtype=DTYPE)])) == 4.
    with pytest.raises(ValueError):
        critic_loss([])

def test_critic_loss_gradient():
    torch.manual_seed(0)
    critic = CriticPair(ValueNetwork(1, 6, 1))
    with torch.no_grad():
        nn.init.normal_(critic.online.net.output.weight)
    window = [_random_transition(seed=k) for k in range(3)]
    fn = lambda: critic_loss([td_error(critic, tr, 1.) for tr in window])
    assert finite_difference_check(fn, critic.online.parameters(), n_coords=100,
        generator=torch.Generator().manual_seed(0)) < 1e-4

def test_target_update_is_polyak():
    critic = CriticPair(ValueNetwork(1, 4, 1), rho_c=0.5)
    with torch.no_grad():
        critic.online.net.output.bias.fill_(1.)
    critic.update_target()
    assert float(critic.target.net.output.bias) == pytest.approx(0.5)

#--------------------------------- advantages -------------------------------#

def test_advantage_of_constant_critic():
    critic = CriticPair(ConstantValue(2.))
    x = torch.ones(2, 1, dtype=DTYPE)
    tr = _transition(x, x, x, torch.zeros(2, 1, dtype=DTYPE), log_prob=torch.full((2, 1), -0.5, dtype=DTYPE))
    plain = 2 * (math.exp(-0.01) - 1) / 0.01
    assert gae_advantage(critic, tr, 1., 0.).tolist() == pytest.approx([plain] * 2)
    assert gae_advantage(critic, tr, 1., 0.05).tolist() == pytest.approx([plain + 0.025] * 2)

def test_advantage_uses_the_online_critic():
    critic = CriticPair(ValueNetwork(1, 4, 1))
    with torch.no_grad():
        critic.online.net.output.bias.fill_(1.)
    x = torch.zeros(2, 1, dtype=DTYPE)
    tr = _transition(x, x, x, torch.zeros(2, 1, dtype=DTYPE))
    assert gae_advantage(critic, tr, 1., 0.).tolist() == pytest.approx([(math.exp(-0.01) - 1) / 0.01] * 2)

def test_advantage_estimates_the_q_function(small_config):
    '''
        E[A | x, u] approaches q(t, x, u) for an arbitrary action under the exact critic
    '''
    model, benchmark = _lq_benchmark(small_config)
    critic = CriticPair(benchmark.values()[0])
    n, delta_t = 10 ** 5, 0.01
    x = torch.ones(n, 1, dtype=DTYPE)
    u = torch.full((n, 1), 0.3, dtype=DTYPE)
    dW, counts = draw_noise(model, 0., n, delta_t, torch.Generator().manual_seed(0))
    next_x, _ = euler_step(model, 0., x, u, dW, counts, delta_t)
    tr = _transition(x, u, next_x, model.reward(0., x, u) * delta_t, dW, counts, delta_t)
    advantages = gae_advantage(critic, tr, model.discount, 0., model=model).numpy()

    q = float(benchmark.q_value(0., np.ones((1, 1)), np.full((1, 1), 0.3))[0])
    mean = float(benchmark.mean_action(0., np.ones((1, 1)))[0, 0])
    assert q == pytest.approx(-5. * (0.3 - mean) ** 2, abs=1e-8)
    assert abs(advantages.mean() - q) < 3 * advantages.std() / np.sqrt(n) + 0.01

#--------------------------------- actor loss -------------------------------#

def test_actor_loss_sign_and_normalization():
    log_prob = torch.tensor([-1.], dtype=DTYPE, requires_grad=True)
    loss = actor_loss([log_prob], [torch.tensor([2.], dtype=DTYPE)], beta=1.)
    assert float(loss) == pytest.approx(2.)
    loss.backward()
    assert float(log_prob.grad) == pytest.approx(-2.)

def test_actor_loss_vanishes_with_zero_advantage():
    log_prob = torch.randn(5, dtype=DTYPE, requires_grad=True)
    loss = actor_loss([log_prob, log_prob], [torch.zeros(5, dtype=DTYPE)] * 2, beta=0.5)
    loss.backward()
    assert float(loss) == 0.
    assert torch.all(log_prob.grad == 0)

def test_actor_loss_window_mismatch():
    with pytest.raises(ValueError):
        actor_loss([torch.zeros(2, dtype=DTYPE)], [], beta=1.)

def test_actor_loss_gradient_through_log_prob():
    torch.manual_seed(3)
    policy = FlowPolicy(1, 1, hidden_width=6, depth=1)
    generator = torch.Generator().manual_seed(1)
    obs = torch.randn(20, 1, dtype=DTYPE, generator=generator)
    with torch.no_grad():
        u = policy.sample(0.2, obs, generator=generator).action
    advantage = torch.randn(20, dtype=DTYPE, generator=generator)
    fn = lambda: actor_loss([policy.log_prob(0.2, obs, u)], [advantage], beta=1.)
    assert finite_difference_check(fn, policy.parameters(), n_coords=100, generator=generator) < 1e-4

#---------------------------------- trainer ---------------------------------#

def _parameters(modules):
    return [p.detach().clone() for module in modules for p in module.parameters()]

def test_zero_iterations_change_nothing(small_config):
    experiment = build_trainer(small_config('lq-homogeneous'), with_benchmark=False)
    before = _parameters(experiment.policies + experiment.critics)
    assert experiment.trainer.train(n_iterations=0) == []
    after = _parameters(experiment.policies + experiment.critics)
    assert all(torch.equal(a, b) for a, b in zip(before, after))

def test_training_updates_parameters(small_config):
    experiment = build_trainer(small_config('lq-homogeneous'), with_benchmark=False)
    before = _parameters(experiment.policies)
    history = experiment.trainer.train()
    assert len(history) == 2
    assert all(math.isfinite(row['critic_loss']) and math.isfinite(row['actor_loss']) for row in history)
    assert experiment.policies[0].n_updates.item() == 2 * 4
    after = _parameters(experiment.policies)
    assert any(not torch.equal(a, b) for a, b in zip(before, after))

def test_seeded_training_is_reproducible(small_config):
    config = small_config('lq-homogeneous')
    keys = ('iteration', 'critic_loss', 'actor_loss', 'E_V', 'E_u')
    logs = []
    for _ in range(2):
        history = build_trainer(config).trainer.train()
        logs.append([{key: row[key] for key in keys} for row in history])
    assert logs[0] == logs[1]
    assert logs[0][-1]['E_V'] is not None

def test_partial_windows_are_dropped(small_config):
    ## 20 steps with k_actor = 6 leave two steps without an actor update
    config = small_config('lq-homogeneous', train={'k_actor': 6, 'k_critic': 3})
    trainer = build_trainer(config, with_benchmark=False).trainer
    critic_losses, actor_losses = trainer.run_iteration()
    assert len(critic_losses) == 6
    assert len(actor_losses) == 3
    assert trainer.policies[0].n_updates.item() == 3

def test_divergence_is_reported(small_config):
    config = small_config('lq-homogeneous', train={'divergence_bound': 1e-12})
    trainer = build_trainer(config, with_benchmark=False).trainer
    with pytest.raises(DivergenceError):
        trainer.train()

def test_game_training_runs_per_agent(small_config):
    experiment = build_trainer(small_config('game'), with_benchmark=False)
    history = experiment.trainer.train(n_iterations=1)
    assert len(experiment.policies) == len(experiment.critics) == 2
    assert math.isfinite(history[0]['critic_loss'])

def test_flow_training_runs(small_config):
    config = small_config('merton-entropy', network={'freeze_updates': 2})
    experiment = build_trainer(config, with_benchmark=False)
    experiment.trainer.train()
    assert experiment.policies[0].flow_active

def test_checkpoint_round_trip(tmp_path, small_config):
    config = small_config('lq-homogeneous')
    savepath = str(tmp_path / 'run')
    experiment = build_trainer(config, savepath=savepath)
    experiment.trainer.train()
    assert (tmp_path / 'run' / 'state_final.pt').exists()
    assert (tmp_path / 'run' / 'state_1.pt').exists()
    assert (tmp_path / 'run' / 'train_log.csv').exists()

    restored = load_experiment(savepath)
    obs = torch.linspace(-1, 1, 9, dtype=DTYPE)[:, None]
    with torch.no_grad():
        for original, loaded in zip(experiment.policies, restored.policies):
            assert torch.allclose(original.mean_action(0.1, obs), loaded.mean_action(0.1, obs))
        for original, loaded in zip(experiment.critics, restored.critics):
            assert torch.allclose(original(0.1, obs), loaded(0.1, obs))
            assert torch.allclose(original.target(0.1, obs), loaded.target(0.1, obs))
    assert restored.trainer.iteration == 2

def test_checkpoint_version_is_checked(small_config):
    trainer = build_trainer(small_config('lq-homogeneous'), with_benchmark=False).trainer
    state = trainer.state()
    state['version'] = 99
    with pytest.raises(ValueError):
        trainer.load(state)

#----------------------------- long reproductions ---------------------------#

def _trained_report(document):
    from jumpctl.utils.config import parse_config
    config = parse_config(document)
    experiment = build_trainer(config)
    experiment.trainer.train()
    report = evaluate_run(experiment.model, experiment.policies, experiment.critics, experiment.benchmark, config)
    return experiment, report

@pytest.mark.slow
@pytest.mark.parametrize('dim, max_E_u', [(1, 0.5), (5, 1.2)])
def test_homogeneous_lq_training_converges(dim, max_E_u):
    reports = [_trained_report({'problem': 'lq-homogeneous', 'dim': dim, 'seed': seed})[1]
        for seed in (2025, 2026, 2027)]
    assert np.mean([r.E_V for r in reports]) <= 0.02
    assert np.mean([r.E_u for r in reports]) <= max_E_u

@pytest.mark.slow
def test_merton_entropy_training_matches_the_gibbs_policy():
    experiment, report = _trained_report({'problem': 'merton-entropy'})
    assert experiment.config['train']['delta_t'] == 0.05
    assert report.control_metric == 'kl'
    assert report.E_u <= 0.15

@pytest.mark.slow
def test_two_agent_game_training_reaches_the_equilibrium():
    experiment, report = _trained_report({'problem': 'game', 'dim': 2})
    assert isinstance(experiment.benchmark, GameBenchmark)
    assert len(report.per_agent) == 2
    assert report.E_u <= 0.06
    assert report.E_V <= 0.30

@pytest.mark.slow
def test_merton_standard_training_finds_the_fraction():
    experiment, report = _trained_report({'problem': 'merton-standard'})
    u_star = experiment.benchmark.u_star
    obs = torch.ones(1, 1, dtype=DTYPE)
    with torch.no_grad():
        learned = float(experiment.policies[0].mean_action(0., obs))
    assert abs(learned - u_star) <= 0.1 * u_star
    assert report.E_V <= 0.05
