import os
import sys

import numpy as np
import torch

from jumpctl.experiment import build_model, build_benchmark, build_trainer, load_experiment
from jumpctl.learner import CriticPair
from jumpctl.metrics import evaluate_run, evaluation_grid, trace_run, density_pair, action_grid, REPORT_FIELDS
from jumpctl.utils.arrays import to_torch
from jumpctl.utils.errors import ConfigError, NumericalError
from jumpctl.utils.logger import write_csv
from jumpctl.utils.manifest import RunManifest
from jumpctl.utils.serialization import mkdir, save_json, load_json
from jumpctl.utils.setup import Parser

TABLE_FIELDS = ('cell', 'dim', 'n_seeds', 'E_X', 'E_V', 'E_u', 'runtime_minutes')


def run_dir(config):
    return os.path.join(config.out, config.problem, f'dim_{config.dim}', f'seed_{config.seed}')

#-----------------------------------------------------------------------------#
#--------------------------------- commands ----------------------------------#
#-----------------------------------------------------------------------------#

def train(config, verbose=None):
    if verbose is None:
        verbose = config['train']['verbose']
    savepath = run_dir(config)
    mkdir(savepath)
    manifest = RunManifest(config, 'train', savepath)
    experiment = build_trainer(config, savepath=savepath)
    history = experiment.trainer.train(verbose=verbose)
    manifest.add('train_log', os.path.join(savepath, 'train_log.csv'))
    manifest.add('checkpoint', os.path.join(savepath, 'state_final.pt'))

    if experiment.benchmark is not None:
        report = evaluate_run(experiment.model, experiment.policies, experiment.critics, experiment.benchmark, config)
        manifest.add('metrics', save_metrics(report, savepath))
    manifest.finish()
    return history

def benchmark(config):
    savepath = run_dir(config)
    mkdir(savepath)
    manifest = RunManifest(config, 'benchmark', savepath)
    solution = build_benchmark(config)
    manifest.add('benchmark', save_json(solution.to_dict(), savepath, 'benchmark.json'))
    manifest.finish()
    return solution

def _evaluation_objects(config):
    '''
        (model, policies, critics, benchmark) for the configured policy source
    '''
    source = config['evaluate']['policy_source']
    if source == 'benchmark':
        model = build_model(config)
        solution = build_benchmark(config, model)
        critics = [CriticPair(value, config['train']['rho_c']) for value in solution.values()]
        return model, solution.policies(), critics, solution
    experiment = load_experiment(run_dir(config))
    return experiment.model, experiment.policies, experiment.critics, experiment.benchmark

def save_metrics(report, savepath):
    path = save_json(report.to_dict(), savepath, 'metrics.json')
    write_csv(os.path.join(savepath, 'metrics.csv'), REPORT_FIELDS, [report.to_row()])
    return path

def evaluate(config):
    savepath = run_dir(config)
    mkdir(savepath)
    manifest = RunManifest(config, 'evaluate', savepath)
    model, policies, critics, solution = _evaluation_objects(config)
    report = evaluate_run(model, policies, critics, solution, config)
    print(f'[ cli ] {report}', flush=True)
    manifest.add('metrics', save_metrics(report, savepath))
    manifest.finish()
    return report

def plot_data(config):
    '''
        learned and benchmark series on one time grid: states, controls,
        values and, for the entropy merton problem, density slices
    '''
    savepath = run_dir(config)
    mkdir(savepath)
    manifest = RunManifest(config, 'plot-data', savepath)
    model, policies, critics, solution = _evaluation_objects(config)
    grid = evaluation_grid(config['train'], config['evaluate'])
    trace = trace_run(model, policies, critics, solution, grid, config['evaluate']['n_paths'],
        config['seed'], config['evaluate']['n_u_grid'], config['train']['state_bound'])
    times = trace.times

    ## first path; every agent for the game, the first coordinate otherwise
    coords = range(model.n_agents) if model.n_agents > 1 else [0]
    series = {
        'states': [(f'x_{i}', trace.learned_states[0, :, i], trace.benchmark_states[0, :, i]) for i in coords],
        'controls': [(f'u_{i}', trace.learned_controls[i, 0, :, 0], trace.benchmark_controls[i, 0, :, 0])
            for i in range(model.n_agents)],
        'values': [(f'V_{i}', trace.learned_values[i, 0], trace.benchmark_values[i, 0]) for i in range(model.n_agents)],
    }
    for quantity, columns in series.items():
        fields = ['t'] + [f'{prefix}_{name}' for name, _, _ in columns for prefix in ('learned', 'benchmark')]
        rows = []
        for k, t in enumerate(times):
            row = {'t': float(t)}
            for name, learned, reference in columns:
                row[f'learned_{name}'] = float(learned[k])
                row[f'benchmark_{name}'] = float(reference[k])
            rows.append(row)
        manifest.add(quantity, write_csv(os.path.join(savepath, f'plot_{quantity}.csv'), fields, rows))

    if config.problem == 'merton-entropy':
        manifest.add('density', _density_slices(config, policies[0], solution.policies()[0], trace, savepath))
    manifest.finish()
    return trace

@torch.no_grad()
def _density_slices(config, policy, benchmark_policy, trace, savepath):
    grid = trace.grid
    u_grid = action_grid(policy, benchmark_policy, config['evaluate']['n_u_grid'])
    rows = []
    for fraction in (0.25, 0.5, 0.75, 1.):
        k = int(round(fraction * grid.n_steps))
        t = grid.t(k)
        obs = to_torch(trace.learned_states[:1, k])
        pair = density_pair(benchmark_policy, policy, t, obs, u_grid)
        for j, u in enumerate(u_grid):
            rows.append({'t': t, 'x': float(obs[0, 0]), 'u': float(u),
                'learned': float(pair.learned[0, j]), 'benchmark': float(pair.benchmark[0, j])})
    return write_csv(os.path.join(savepath, 'plot_density.csv'), ('t', 'x', 'u', 'learned', 'benchmark'), rows)

#-----------------------------------------------------------------------------#
#----------------------------------- table -----------------------------------#
#-----------------------------------------------------------------------------#

def collect_results(config):
    '''
        {cell label: (cell config, [per-seed results])} from finished runs on disk
    '''
    results = {}
    for cell in config['table']['cells']:
        cell = dict(cell)
        cell_config = config.replace(**cell)
        label = ','.join(f'{key}={value}' for key, value in sorted(cell.items())) or 'default'
        runs = []
        for seed in config['seeds']:
            savepath = run_dir(cell_config.replace(seed=seed))
            try:
                metrics = load_json(savepath, 'metrics.json')
                manifest = RunManifest.load(savepath)
            except FileNotFoundError:
                continue
            runs.append({**{key: metrics[key] for key in ('E_X', 'E_V', 'E_u')},
                'runtime_minutes': manifest.get('runtime_minutes')})
        results[label] = (cell_config, runs)
    return results

def emit_table(config, results, savepath):
    '''
        one row per cell: mean metrics over seeds and mean wall-clock minutes;
        cells without finished runs are written empty
    '''
    rows = []
    for label, (cell_config, runs) in results.items():
        row = {'cell': label, 'dim': cell_config.dim, 'n_seeds': len(runs)}
        if not runs:
            print(f'[ cli ] Warning: no finished runs for cell {label}', flush=True)
        else:
            for key in ('E_X', 'E_V', 'E_u', 'runtime_minutes'):
                values = [run[key] for run in runs if run[key] is not None]
                row[key] = float(np.mean(values)) if values else None
        rows.append(row)
    return write_csv(os.path.join(savepath, 'table.csv'), TABLE_FIELDS, rows)

def table(config):
    savepath = os.path.join(config.out, config.problem)
    mkdir(savepath)
    return emit_table(config, collect_results(config), savepath)

#-----------------------------------------------------------------------------#
#------------------------------------ main -----------------------------------#
#-----------------------------------------------------------------------------#

COMMAND_FNS = {
    'train': lambda config, args: train(config, args.verbose or None),
    'benchmark': lambda config, args: benchmark(config),
    'evaluate': lambda config, args: evaluate(config),
    'plot-data': lambda config, args: plot_data(config),
    'table': lambda config, args: table(config),
}

def main(argv=None):
    '''
        exit codes: 0 success, 1 invalid configuration, 2 numerical failure
    '''
    args = Parser().parse_args(argv)
    try:
        config = args.read_config()
        COMMAND_FNS[args.command](config, args)
    except ConfigError as e:
        print(f'[ cli ] Configuration error: {e}', file=sys.stderr, flush=True)
        return 1
    except NumericalError as e:
        print(f'[ cli ] Numerical failure: {e}', file=sys.stderr, flush=True)
        return 2
    return 0


if __name__ == '__main__':
    sys.exit(main())
