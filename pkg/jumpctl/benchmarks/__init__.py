from .riccati import (
    RiccatiSystem, RiccatiSolution, LqBenchmark,
    solve_are, stationary_solution, integrate_riccati_backward, solve_periodic_riccati, solve_lq,
)
from .merton import (
    MertonBenchmark, MertonEntropyBenchmark,
    merton_foc, solve_merton_standard, solve_merton_entropy_grid,
)
from .game import GameSystem, GameBenchmark, solve_game
from .policies import (
    LqFeedbackPolicy, ConstantPolicy, GibbsGridPolicy,
    LqValue, MertonValue, GridValue, GameValue,
)


def solve_benchmark(model, config):
    '''
        ground truth for the problem named in config (ExperimentConfig);
        every solution exposes policies(), values() and to_dict()
    '''
    problem = config['problem']
    settings = config['benchmark']
    if problem.startswith('lq'):
        horizon = config['train']['n_steps'] * config['train']['delta_t']
        return solve_lq(model, horizon, **settings)
    elif problem == 'merton-standard':
        return solve_merton_standard(model.mu, model.r, model.sigma, model.lam, model.alpha, model.p,
            model.discount, root_eps=settings['root_eps'])
    elif problem == 'merton-entropy':
        return solve_merton_entropy_grid(model.mu, model.r, model.sigma, model.lam, model.alpha, model.p,
            model.discount, model.entropy_weight,
            x_min=settings['x_min'], x_max=settings['x_max'], n_x=settings['n_x'],
            u_min=config['model']['u_low'], u_max=config['model']['u_high'], n_u=settings['n_u'],
            damping=settings['damping'], tol=settings['tol'], max_iter=settings['max_iter'])
    elif problem == 'game':
        params = model.params
        return solve_game(params['b'], params['eta'], params['sigma'], params['alpha'], params['xi'],
            params['lambdas'], model.lambda0, params['varrho'], params['varpi'], model.discount,
            damping=settings['damping'], newton_tol=settings['newton_tol'], tol=settings['tol'],
            max_outer=settings['max_outer'])
    raise ValueError(f'[ benchmarks ] unknown problem: {problem}')
