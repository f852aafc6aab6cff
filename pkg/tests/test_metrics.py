import math

import numpy as np
import pytest
import torch

from jumpctl.benchmarks import solve_benchmark
from jumpctl.dynamics import TimeGrid, model_from_config
from jumpctl.learner import CriticPair, build_critics
from jumpctl.metrics import (
    DensityPair, MetricReport, RunTrace, REPORT_FIELDS, relative_error, rmse_state, rmse_value, control_error,
    occupation_mass, gaussian_kl, grid_kl, monte_carlo_kl, policy_kl, evaluation_grid, trace_run,
    report_from_trace, evaluate_run,
)
from jumpctl.policy import build_policies
from jumpctl.utils.arrays import DTYPE
from jumpctl.utils.errors import NumericalError


def _normal_density(u, mean, std):
    return np.exp(-0.5 * ((u - mean) / std) ** 2) / (std * math.sqrt(2 * math.pi))

def _benchmark_critics(solution, rho=0.995):
    return [CriticPair(value, rho) for value in solution.values()]

#------------------------------ relative errors -----------------------------#

def test_relative_error():
    times = np.linspace(0., 1., 101)
    reference = np.sin(times) + 1.
    assert relative_error(reference, reference, times, 1e-8) == 0.
    assert relative_error(2 * reference, reference, times, 1e-8) == pytest.approx(1., rel=1e-6)
    assert relative_error(np.zeros_like(times), reference, times, 0.) == pytest.approx(1.)

def test_relative_error_eps_guards_zero_reference():
    times = np.linspace(0., 1., 11)
    zeros = np.zeros_like(times)
    assert relative_error(zeros, zeros, times, 1e-8) == 0.
    assert relative_error(zeros + 1e-3, zeros, times, 1e-2) == pytest.approx(1e-4, rel=1e-10)

def test_relative_error_rejects_mismatched_grids():
    times = np.linspace(0., 1., 11)
    with pytest.raises(ValueError):
        relative_error(np.zeros(11), np.zeros(12), times, 1e-8)
    with pytest.raises(ValueError):
        relative_error(np.zeros(12), np.zeros(12), times, 1e-8)
    with pytest.raises(ValueError):
        rmse_state(np.zeros((11, 2)), np.zeros((11, 3)), times)

def test_state_value_and_control_errors():
    times = np.linspace(0., 2., 21)
    states = np.stack([np.cos(times), np.sin(times)], axis=-1)[None].repeat(3, axis=0)
    assert states.shape == (3, 21, 2)
    assert rmse_state(1.1 * states, states, times) == pytest.approx(0.01, rel=1e-6)
    assert rmse_value(0.9 * states[..., 0], states[..., 0], times) == pytest.approx(0.01, rel=1e-6)
    assert control_error(states, states, times) == 0.

def test_occupation_mass_tends_to_inverse_discount():
    for beta in (0.5, 1., 2.):
        grid = TimeGrid(int(round(20 / beta / 0.01)), 0.01)
        assert occupation_mass(beta, grid) == pytest.approx(1 / beta, rel=0.01)
    with pytest.raises(ValueError):
        occupation_mass(0., TimeGrid(10, 0.1))

#------------------------------------- kl -----------------------------------#

def test_gaussian_kl_closed_form():
    p = (torch.zeros(1, 1, dtype=DTYPE), torch.eye(1, dtype=DTYPE))
    q = (torch.ones(1, 1, dtype=DTYPE), torch.eye(1, dtype=DTYPE))
    assert float(gaussian_kl(p, q)) == pytest.approx(0.5)
    assert float(gaussian_kl(p, p)) == pytest.approx(0.)

def test_grid_kl_matches_closed_form():
    u = np.linspace(-12., 12., 4001)
    pair = DensityPair(u, _normal_density(u, 0., 1.)[None], _normal_density(u, 1., 2.)[None])
    expected = math.log(2.) + (1. + 1.) / (2 * 4.) - 0.5
    assert grid_kl(pair)[0] == pytest.approx(expected, abs=1e-6)

def test_kl_of_a_policy_against_itself(small_config, generator):
    config = small_config('lq-homogeneous', model={'gamma': 0.1})
    solution = solve_benchmark(model_from_config(config), config)
    policy, = solution.policies()
    obs = torch.tensor([[0.5], [-1.]], dtype=DTYPE)
    assert policy_kl(policy, policy, 0., obs).tolist() == pytest.approx([0., 0.], abs=1e-12)
    assert monte_carlo_kl(policy, policy, 0., obs, n_samples=50, generator=generator).tolist() == \
        pytest.approx([0., 0.], abs=1e-12)

def test_policy_kl_against_a_shifted_gaussian(small_config):
    config = small_config('lq-homogeneous', model={'gamma': 0.1})
    model = model_from_config(config)
    solution = solve_benchmark(model, config)
    benchmark, = solution.policies()
    learned, = build_policies(model, config['network'])
    obs = torch.tensor([[0.5], [-1.]], dtype=DTYPE)

    ## closed form and grid quadrature agree for a plain gaussian
    closed = policy_kl(benchmark, learned, 0., obs)
    mean, cov = benchmark.gaussian(0., obs)
    std = math.sqrt(float(cov))
    u = np.linspace(float(mean.min()) - 10 * std, float(mean.max()) + 10 * std, 4001)
    with torch.no_grad():
        learned_mean, learned_std = learned.base(learned.condition(0., obs))
    expected = []
    for row in range(2):
        m_p, m_q, s_q = float(mean[row, 0]), float(learned_mean[row, 0]), float(learned_std[row, 0])
        expected.append(math.log(s_q / std) + (std ** 2 + (m_p - m_q) ** 2) / (2 * s_q ** 2) - 0.5)
    assert closed.tolist() == pytest.approx(expected, rel=1e-8)
    assert np.all(closed > 0)

#--------------------------------- evaluation --------------------------------#

def test_metric_report_rejects_invalid_values():
    report = MetricReport(0.1, 0.2, 0.3, 10., 1e-8, 1e-8, 1e-8)
    assert tuple(report.to_row()) == REPORT_FIELDS
    assert report.to_dict()['per_agent'] == []
    with pytest.raises(NumericalError):
        MetricReport(float('nan'), 0.2, 0.3, 10., 1e-8, 1e-8, 1e-8)
    with pytest.raises(NumericalError):
        MetricReport(0.1, -0.5, 0.3, 10., 1e-8, 1e-8, 1e-8)
    with pytest.raises(NumericalError):
        MetricReport(0.1, 0.2, float('inf'), 10., 1e-8, 1e-8, 1e-8)

def test_evaluation_grid_horizon():
    train = {'n_steps': 100, 'delta_t': 0.01}
    assert evaluation_grid(train, {'horizon': None}).n_steps == 100
    grid = evaluation_grid(train, {'horizon': 0.5})
    assert grid.n_steps == 50
    assert grid.times[-1] == pytest.approx(0.5)

def test_report_from_trace():
    grid = TimeGrid(10, 0.1)
    states = np.ones((1, 11, 1))
    values = np.ones((1, 1, 11))
    controls = np.ones((1, 1, 11, 1))
    trace = RunTrace(grid, 2 * states, states, 3 * values, values, controls, controls)
    report = report_from_trace(trace, gamma=0.)
    assert report.E_X == pytest.approx(1.)
    assert report.E_V == pytest.approx(4.)
    assert report.E_u == 0.
    assert report.control_metric == 'rmse'
    assert report.T_eval == pytest.approx(1.)

    kl = np.full((1, 1, 11), 0.25)
    trace = RunTrace(grid, states, states, values, values, controls, controls, kl=kl)
    report = report_from_trace(trace, gamma=0.1)
    assert report.E_u == pytest.approx(0.25)
    assert report.control_metric == 'kl'

@pytest.mark.parametrize('problem,overrides', [
    ('lq-homogeneous', {}),
    ('lq-homogeneous', {'model': {'gamma': 0.}}),
    ('merton-standard', {}),
    ('merton-entropy', {'benchmark': {'n_x': 100, 'n_u': 80}}),
    ('game', {}),
])
def test_benchmark_against_itself_has_zero_error(problem, overrides, small_config):
    config = small_config(problem, **overrides)
    model = model_from_config(config)
    solution = solve_benchmark(model, config)
    report = evaluate_run(model, solution.policies(), _benchmark_critics(solution), solution, config)
    assert report.E_X == 0.
    assert report.E_V == pytest.approx(0., abs=1e-20)
    assert report.E_u == pytest.approx(0., abs=1e-8)

def test_trace_of_a_learned_run(small_config):
    config = small_config('lq-homogeneous', evaluate={'n_paths': 3})
    model = model_from_config(config)
    solution = solve_benchmark(model, config)
    policies = build_policies(model, config['network'])
    critics = build_critics(model, config['network'], config['train']['rho_c'])
    grid = evaluation_grid(config['train'], config['evaluate'])
    trace = trace_run(model, policies, critics, solution, grid, n_paths=3, seed=1)

    K = config['train']['n_steps']
    assert trace.learned_states.shape == trace.benchmark_states.shape == (3, K + 1, 1)
    assert trace.learned_values.shape == (1, 3, K + 1)
    assert trace.benchmark_controls.shape == (1, 3, K + 1, 1)
    assert trace.kl.shape == (1, 3, K + 1)
    assert np.all(trace.kl >= -1e-12)
    ## both runs start from x0
    assert np.allclose(trace.learned_states[:, 0], trace.benchmark_states[:, 0])

    report = report_from_trace(trace, model.entropy_weight)
    assert report.E_X >= 0 and report.E_V >= 0 and report.E_u >= 0
