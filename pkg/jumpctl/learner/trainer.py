import os
import math
import torch

from jumpctl.dynamics import TimeGrid, Transition, act, draw_noise, euler_step, check_state_bound
from jumpctl.models import optimizer_step, make_scheduler
from jumpctl.utils.arrays import DTYPE
from jumpctl.utils.errors import DivergenceError
from jumpctl.utils.logger import CsvLogger
from jumpctl.utils.progress import Progress, Silent
from jumpctl.utils.serialization import mkdir
from jumpctl.utils.timer import Timer
from .losses import AdvantageBatch, td_error, martingale_corrected_td, critic_loss, gae_advantage, actor_loss

LOG_FIELDS = ('iteration', 'critic_loss', 'actor_loss', 'E_V', 'E_u', 'wall_time')
CHECKPOINT_VERSION = 1


class Trainer:
    '''
        online actor-critic over windows of a simulated batch: every step
        accumulates the (corrected) TD loss and the policy-gradient surrogate;
        every k_critic steps the critics take one step and their targets
        move, every k_actor steps the actors take one step
    '''

    def __init__(self, model, policies, critics, train, seed=0, savepath=None, evaluator=None, config=None):
        if len(policies) != model.n_agents or len(critics) != model.n_agents:
            raise ValueError(f'[ learner/trainer ] {model.n_agents} agents but {len(policies)} policies '
                f'and {len(critics)} critics')
        self.model = model
        self.policies = list(policies)
        self.critics = list(critics)
        self.train_config = train
        self.savepath = savepath
        self.evaluator = evaluator
        self.config = dict(config) if config is not None else {}

        self.grid = TimeGrid(train['n_steps'], train['delta_t'])
        self.n_paths = train['n_paths']
        self.k_actor = train['k_actor']
        self.k_critic = train['k_critic']
        self.beta = model.discount
        self.gamma = model.entropy_weight
        self.corrected = train['martingale_correction']
        self.max_grad_norm = train['max_grad_norm']
        self.divergence_bound = train['divergence_bound']
        self.state_bound = train['state_bound']
        self.generator = torch.Generator().manual_seed(int(seed))

        n_iterations = train['n_iterations']
        schedule = dict(milestones=train['milestones'], decay=train['decay'],
            warmup=train['warmup'], min_lr_factor=train['min_lr_factor'])

        self.critic_optimizers = [
            torch.optim.Adam(critic.online.parameters(), lr=train['critic_lr'])
            for critic in self.critics
        ]
        self.actor_optimizers = [
            torch.optim.Adam(self._actor_groups(policy), lr=train['actor_lr'])
            for policy in self.policies
        ]
        self.critic_schedulers = [
            make_scheduler(opt, train['critic_schedule'], n_iterations, **schedule)
            for opt in self.critic_optimizers
        ]
        self.actor_schedulers = [
            make_scheduler(opt, train['actor_schedule'], n_iterations, **schedule)
            for opt in self.actor_optimizers
        ]
        self.iteration = 0

    def _actor_groups(self, policy):
        groups = [{'params': list(policy.base.parameters()), 'lr': self.train_config['actor_lr']}]
        if policy.flow is not None:
            groups.append({'params': list(policy.flow.parameters()), 'lr': self.train_config['flow_lr']})
        return groups

    #-----------------------------------------------------------------------------#
    #------------------------------------ api ------------------------------------#
    #-----------------------------------------------------------------------------#

    def train(self, n_iterations=None, verbose=False):
        '''
            returns the training log as a list of rows (LOG_FIELDS)
        '''
        train = self.train_config
        n_iterations = train['n_iterations'] if n_iterations is None else n_iterations
        log_freq, eval_freq, save_freq = train['log_freq'], train['eval_freq'], train['save_freq']

        logger = CsvLogger(os.path.join(self.savepath, 'train_log.csv'), LOG_FIELDS) \
            if self.savepath is not None else None
        progress = Progress(n_iterations, name='train') if verbose else Silent()
        timer = Timer()
        history = []

        try:
            for _ in range(n_iterations):
                critic_losses, actor_losses = self.run_iteration()
                self.iteration += 1
                for scheduler in self.critic_schedulers + self.actor_schedulers:
                    scheduler.step()

                row = {
                    'iteration': self.iteration,
                    'critic_loss': _mean(critic_losses),
                    'actor_loss': _mean(actor_losses),
                    'E_V': None,
                    'E_u': None,
                    'wall_time': timer.total,
                }
                if self.evaluator is not None and eval_freq and \
                        (self.iteration % eval_freq == 0 or self.iteration == n_iterations):
                    report = self.evaluator(self.policies, self.critics)
                    row['E_V'], row['E_u'] = report.E_V, report.E_u

                history.append(row)
                if logger is not None:
                    logger.log(row)
                if log_freq and self.iteration % log_freq == 0:
                    print(f'{self.iteration}: critic {row["critic_loss"]:8.4e} | actor {row["actor_loss"]:8.4e} | '
                        f't: {timer():8.4f}', flush=True)
                progress.update({'critic': f'{row["critic_loss"]:.3e}', 'actor': f'{row["actor_loss"]:.3e}'})

                if self.savepath is not None and save_freq and self.iteration % save_freq == 0:
                    self.save(self.iteration)
        finally:
            progress.close()
            if logger is not None:
                logger.close()

        if self.savepath is not None:
            self.save('final')
        return history

    def run_iteration(self):
        '''
            one simulated batch from the initial state; partial windows left
            at the end of the batch are dropped
        '''
        model, grid, L = self.model, self.grid, self.n_paths
        n_agents = model.n_agents
        x = model.initial_state(L)

        critic_window = [[] for _ in range(n_agents)]
        actor_window = [[] for _ in range(n_agents)]
        critic_losses, actor_losses = [], []

        for k in range(grid.n_steps):
            t = grid.t(k)
            with torch.no_grad():
                u, _, samples = act(model, self.policies, t, x, self.generator)
            obs = model.observe(x)
            log_probs = [
                policy.log_prob_latent(t, obs[:, i], sample.z_flow)
                for i, (policy, sample) in enumerate(zip(self.policies, samples))
            ]

            dW, counts = draw_noise(model, t, L, grid.delta_t, self.generator, k)
            with torch.no_grad():
                reward = model.reward(t, x, u) * grid.delta_t
                x_next, _ = euler_step(model, t, x, u, dW, counts, grid.delta_t)
            check_state_bound(x_next, self.state_bound, k + 1)

            transition = Transition(
                step=k, t=t, delta_t=grid.delta_t, x=x, u=u, next_x=x_next,
                log_prob=torch.stack([lp.detach() for lp in log_probs], dim=-1),
                reward=reward, dW=dW, jump_counts=counts,
            )

            ## critic
            for i, critic in enumerate(self.critics):
                if self.corrected:
                    delta = martingale_corrected_td(critic, transition, self.beta, model, i)
                else:
                    delta = td_error(critic, transition, self.beta, model, i)
                critic_window[i].append(delta)
            if len(critic_window[0]) % self.k_critic == 0:
                critic_losses.append(self._critic_step(critic_window))
                critic_window = [[] for _ in range(n_agents)]

            ## actor
            for i, (critic, policy) in enumerate(zip(self.critics, self.policies)):
                advantage = gae_advantage(critic, transition, self.beta, self.gamma, model=model, agent=i)
                actor_window[i].append(AdvantageBatch(advantage, log_probs[i], _saturated(policy, u, i)))
            if len(actor_window[0]) % self.k_actor == 0:
                actor_losses.append(self._actor_step(actor_window))
                actor_window = [[] for _ in range(n_agents)]

            x = x_next

        return critic_losses, actor_losses

    #-----------------------------------------------------------------------------#
    #---------------------------------- updates ----------------------------------#
    #-----------------------------------------------------------------------------#

    def _check(self, what, value):
        if not math.isfinite(value) or value > self.divergence_bound:
            raise DivergenceError(self.iteration + 1, what, value)

    def _critic_step(self, windows):
        total = 0.
        for critic, optimizer, window in zip(self.critics, self.critic_optimizers, windows):
            loss = critic_loss(window)
            self._check('critic_loss', loss.item())
            loss.backward()
            optimizer_step(optimizer, critic.online.parameters(), self.max_grad_norm)
            critic.update_target()
            total += loss.item()
        return total / len(self.critics)

    def _actor_step(self, windows):
        total = 0.
        for policy, optimizer, window in zip(self.policies, self.actor_optimizers, windows):
            loss = actor_loss([a.log_probs for a in window], [a.values for a in window], self.beta)
            self._check('actor_loss', abs(loss.item()))
            loss.backward()
            optimizer_step(optimizer, policy.parameters(), self.max_grad_norm)
            policy.advance()
            total += loss.item()
        return total / len(self.policies)

    #-----------------------------------------------------------------------------#
    #-------------------------------- checkpoints --------------------------------#
    #-----------------------------------------------------------------------------#

    def state(self):
        return {
            'version': CHECKPOINT_VERSION,
            'iteration': self.iteration,
            'policies': [policy.state_dict() for policy in self.policies],
            'critics': [critic.online.state_dict() for critic in self.critics],
            'targets': [critic.target.state_dict() for critic in self.critics],
            'policy_config': [policy.policy_config() for policy in self.policies],
            'config': self.config,
        }

    def save(self, label):
        mkdir(self.savepath)
        savepath = os.path.join(self.savepath, f'state_{label}.pt')
        torch.save(self.state(), savepath)
        print(f'[ learner/trainer ] Saved model to {savepath}', flush=True)
        return savepath

    def load(self, data):
        if data.get('version') != CHECKPOINT_VERSION:
            raise ValueError(f'[ learner/trainer ] unsupported checkpoint version {data.get("version")}')
        self.iteration = data['iteration']
        for policy, state in zip(self.policies, data['policies']):
            policy.load_state_dict(state)
        for critic, online, target in zip(self.critics, data['critics'], data['targets']):
            critic.online.load_state_dict(online)
            critic.target.load_state_dict(target)


def _mean(values):
    return sum(values) / len(values) if values else float('nan')

def _saturated(policy, u, agent):
    squash = getattr(policy, 'squash', None)
    if squash is None:
        return torch.zeros(u.shape[0], dtype=torch.bool)
    m = policy.action_dim
    u_agent = u[:, agent * m:(agent + 1) * m]
    return ((u_agent <= squash.low) | (u_agent >= squash.high)).any(dim=-1)
