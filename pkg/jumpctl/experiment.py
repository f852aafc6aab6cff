'''
    builds the objects of one run from an ExperimentConfig and restores
    them from checkpoints
'''

from collections import namedtuple

from jumpctl.dynamics import model_from_config
from jumpctl.benchmarks import solve_benchmark
from jumpctl.policy import build_policy, build_policies as _build_policies
from jumpctl.learner import Trainer, build_critics as _build_critics
from jumpctl.metrics import evaluate_run
from jumpctl.utils.arrays import report_parameters
from jumpctl.utils.config import parse_config
from jumpctl.utils.serialization import load_checkpoint
from jumpctl.utils.setup import set_seed

Experiment = namedtuple('Experiment', 'config model policies critics benchmark trainer')


def build_model(config):
    return model_from_config(config)

def build_benchmark(config, model=None):
    model = model or build_model(config)
    return solve_benchmark(model, config)

def build_policies(config, model):
    return _build_policies(model, config['network'])

def build_critics(config, model):
    return _build_critics(model, config['network'], config['train']['rho_c'])

def build_trainer(config, savepath=None, with_benchmark=True):
    '''
        seeds torch before any network is built, so the same config and
        seed give the same initial parameters
    '''
    set_seed(config['seed'])
    model = build_model(config)
    policies = build_policies(config, model)
    critics = build_critics(config, model)
    report_parameters(policies[0])
    report_parameters(critics[0].online)

    benchmark, evaluator = None, None
    if with_benchmark:
        benchmark = build_benchmark(config, model)
        if config['train']['eval_freq']:
            evaluator = lambda policies, critics: evaluate_run(model, policies, critics, benchmark, config)

    trainer = Trainer(model, policies, critics, config['train'], seed=config['seed'],
        savepath=savepath, evaluator=evaluator, config=config.to_dict())
    return Experiment(config, model, policies, critics, benchmark, trainer)

def load_experiment(loadpath, label='latest', with_benchmark=True):
    '''
        rebuilds a trained run from `state_{label}.pt`; policies come from
        their stored policy_config so flow and squash settings survive
    '''
    data = load_checkpoint(loadpath, label)
    config = parse_config(data['config'])
    experiment = build_trainer(config, savepath=None, with_benchmark=with_benchmark)
    policies = [build_policy(policy_config) for policy_config in data['policy_config']]
    experiment.trainer.policies = policies
    experiment.trainer.load(data)
    return experiment._replace(policies=policies)
