'''
    sections shared by every problem family; the family modules copy them
    into their `base` dictionary and override single entries
'''

logbase = 'logs'

train = {
    ## grid and minibatch
    'delta_t': 0.01,
    'n_steps': 1000,            # K
    'n_paths': 100,             # L
    'n_iterations': 1000,       # N_itr

    ## update periods
    'k_actor': 20,
    'k_critic': 5,

    ## optimizers
    'actor_lr': 1e-3,
    'critic_lr': 1e-3,
    'flow_lr': 1e-5,
    'actor_schedule': 'constant',
    'critic_schedule': 'multi-step',
    'milestones': [0.5, 0.75],  # fractions of n_iterations
    'decay': 0.5,
    'warmup': 0.05,             # fraction of n_iterations
    'min_lr_factor': 0.05,
    'max_grad_norm': 10.0,
    'rho_c': 0.995,

    'martingale_correction': True,

    ## guards
    'divergence_bound': 1e8,
    'state_bound': 1e6,

    ## bookkeeping
    'save_freq': 100,
    'eval_freq': 50,
    'log_freq': 10,
    'verbose': False,          # progress bar; the --verbose flag also turns it on
}

network = {
    ## None resolves to dim + 10
    'critic_width': None,
    'critic_depth': 3,
    'actor_width': None,
    'actor_depth': 3,

    ## None resolves to 0.1 when gamma = 0, else a learned std
    'fixed_std': None,

    ## spline flow
    'flow': False,
    'n_bins': 6,
    'tail_bound': 2.5,
    'conditioner_width': 32,
    'conditioner_depth': 2,
    'freeze_updates': 30,

    ## squashing temperature, annealed over freeze_updates actor updates
    'tau_start': 2.0,
    'tau_end': 1.0,
}

evaluate = {
    'n_paths': 1,
    'horizon': None,            # None -> T = n_steps * delta_t
    'eps_x': 1e-8,
    'eps_v': 1e-8,
    'eps_u': 1e-8,
    'n_u_grid': 2001,
    'policy_source': 'checkpoint',
}

top = {
    'dim': 1,
    'seed': 2025,
    'seeds': [2025, 2026, 2027],
    'out': logbase,
}
