import math
import numpy as np
import torch
import einops

from jumpctl.utils.arrays import DTYPE, to_torch
from .profiles import ProfileVector


class ModelSpec:
    '''
        controlled jump-diffusion
            dX = b(t,X,u) dt + sigma(t,X,u) dW + sum_c alpha_c(t,X,u) dM_c
        with M_c = N_c - lambda_c t compensated Poisson processes,
        discount beta, entropy weight gamma and running reward f.

        shapes for a batch of B states:
            drift       [ B x d ]
            diffusion   [ B x d x q ]
            jump_sizes  [ B x C x d ]
            intensities [ C ]
            reward      [ B x n_agents ]
            observe     [ B x n_agents x obs_dim ]
    '''

    name = 'model'
    state_dim = 1
    control_dim = 1
    noise_dim = 1
    n_channels = 0
    n_agents = 1
    obs_dim = 1

    ## bounds of the action of a single agent; None = unbounded
    action_low = None
    action_high = None
    squash = False

    def __init__(self, beta, gamma, x0):
        if not beta > 0:
            raise ValueError(f'[ dynamics/model ] discount must be positive, got {beta}')
        if gamma < 0:
            raise ValueError(f'[ dynamics/model ] entropy weight must be non-negative, got {gamma}')
        self.discount = float(beta)
        self.entropy_weight = float(gamma)
        self.x0 = to_torch(np.broadcast_to(np.asarray(x0, dtype=np.float64), (self.state_dim,)).copy())

    @property
    def agent_action_dim(self):
        return self.control_dim // self.n_agents

    def drift(self, t, x, u):
        raise NotImplementedError

    def diffusion(self, t, x, u):
        raise NotImplementedError

    def jump_sizes(self, t, x, u):
        raise NotImplementedError

    def intensities(self, t):
        raise NotImplementedError

    def reward(self, t, x, u):
        raise NotImplementedError

    def observe(self, x):
        return x[:, None, :]

    def initial_state(self, n_paths):
        return einops.repeat(self.x0, 'd -> l d', l=n_paths).clone()

    def split_actions(self, u):
        '''
            [ B x m ] -> [ B x n_agents x m_agent ]
        '''
        return einops.rearrange(u, 'b (n m) -> b n m', n=self.n_agents)

    def describe(self):
        return {
            'name': self.name,
            'state_dim': self.state_dim,
            'control_dim': self.control_dim,
            'noise_dim': self.noise_dim,
            'n_channels': self.n_channels,
            'n_agents': self.n_agents,
            'beta': self.discount,
            'gamma': self.entropy_weight,
        }

    def __repr__(self):
        fields = ', '.join(f'{k}={v}' for k, v in self.describe().items())
        return f'{type(self).__name__}({fields})'


#-----------------------------------------------------------------------------#
#------------------------------ linear-quadratic -----------------------------#
#-----------------------------------------------------------------------------#

class LqModel(ModelSpec):
    '''
        dX = B(t) u dt + Sigma(t) dW + sum_i alpha_i(t) e_i dM_i
        f  = -(u'Ru + x'Qx)
        with B, Sigma diagonal and one jump channel per coordinate
    '''

    name = 'lq'

    def __init__(self, b, sigma, alpha, lambdas, R, Q, beta, gamma, x0, dim=None):
        if dim is None:
            dim = len(b) if isinstance(b, (list, tuple, ProfileVector)) else 1
        self.state_dim = self.control_dim = self.noise_dim = self.n_channels = dim
        self.obs_dim = dim
        self.b, self.sigma, self.alpha, self.lambdas = [
            p if isinstance(p, ProfileVector) else ProfileVector.from_config(p, dim)
            for p in (b, sigma, alpha, lambdas)
        ]
        self.R = _as_matrix(R, dim)
        self.Q = _as_matrix(Q, dim)
        self._R = to_torch(self.R)
        self._Q = to_torch(self.Q)
        super().__init__(beta, gamma, x0)

    def drift(self, t, x, u):
        return u * self.b.torch(t)

    def diffusion(self, t, x, u):
        sigma = torch.diag(self.sigma.torch(t))
        return einops.repeat(sigma, 'd q -> b d q', b=x.shape[0])

    def jump_sizes(self, t, x, u):
        alpha = torch.diag(self.alpha.torch(t))
        return einops.repeat(alpha, 'c d -> b c d', b=x.shape[0])

    def intensities(self, t):
        return self.lambdas.torch(t)

    def reward(self, t, x, u):
        cost = torch.einsum('bi,ij,bj->b', u, self._R, u) + torch.einsum('bi,ij,bj->b', x, self._Q, x)
        return -cost[:, None]

    ## coefficient matrices at time t, used by the Riccati solvers
    def B_matrix(self, t):
        return np.diag(self.b(t))

    def Sigma_matrix(self, t):
        return np.diag(self.sigma(t))

    def alpha_vector(self, t):
        return self.alpha(t)

    def lambda_vector(self, t):
        return self.lambdas(t)

    @property
    def profile_kind(self):
        kinds = set()
        for p in (self.b, self.sigma, self.alpha, self.lambdas):
            kinds |= p.kinds
        kinds.discard('constant')
        if len(kinds) > 1:
            raise ValueError(f'[ dynamics/model ] mixed profile kinds: {sorted(kinds)}')
        return kinds.pop() if kinds else 'constant'

    @property
    def period(self):
        periods = {p.period for p in (self.b, self.sigma, self.alpha, self.lambdas)} - {None}
        if len(periods) > 1:
            raise ValueError(f'[ dynamics/model ] periodic coefficients disagree on the period: {sorted(periods)}')
        return periods.pop() if periods else None


def _as_matrix(val, dim):
    matrix = np.asarray(val, dtype=np.float64)
    if matrix.ndim == 0:
        return float(matrix) * np.eye(dim)
    if matrix.shape != (dim, dim):
        raise ValueError(f'[ dynamics/model ] expected a {dim} x {dim} matrix, got shape {matrix.shape}')
    return matrix


#-----------------------------------------------------------------------------#
#----------------------------------- merton ----------------------------------#
#-----------------------------------------------------------------------------#

class MertonModel(ModelSpec):
    '''
        dX = (r + u(mu - r)) X dt + sigma u X dW + alpha u X dM
        f  = X^p / p, u = fraction of wealth in the risky asset
    '''

    name = 'merton'
    wealth_floor = 1e-8

    def __init__(self, mu, r, sigma, lam, alpha, p, beta, gamma, x0=1.,
            u_low=0., u_high=1., squash=True):
        self.mu, self.r, self.sigma = float(mu), float(r), float(sigma)
        self.lam, self.alpha, self.p = float(lam), float(alpha), float(p)
        self.n_channels = 1
        self.squash = squash
        if squash:
            self.action_low, self.action_high = float(u_low), float(u_high)
        super().__init__(beta, gamma, x0)

    def drift(self, t, x, u):
        return (self.r + u * (self.mu - self.r)) * x

    def diffusion(self, t, x, u):
        return (self.sigma * u * x)[:, :, None]

    def jump_sizes(self, t, x, u):
        return (self.alpha * u * x)[:, None, :]

    def intensities(self, t):
        return torch.tensor([self.lam], dtype=DTYPE)

    def reward(self, t, x, u):
        return x.clamp(min=self.wealth_floor) ** self.p / self.p

    def describe(self):
        return {**super().describe(), 'mu': self.mu, 'r': self.r, 'sigma': self.sigma,
            'lam': self.lam, 'alpha': self.alpha, 'p': self.p}


#-----------------------------------------------------------------------------#
#------------------------------ portfolio game -------------------------------#
#-----------------------------------------------------------------------------#

class GameModel(ModelSpec):
    '''
        n agents, agent i controls u_i:
            dX^i = u_i (b_i dt + eta_i dW^i + sigma_i dW^0 + alpha_i dM^i + xi_i dM^0)
        noise [ W^1 .. W^n, W^0 ], jump channels [ M^1 .. M^n, M^0 ]
        f_i = -exp(-chi_i X^i + rho_i Y^i),  Y^i = (1/n) sum_{j != i} X^j
    '''

    name = 'game'
    obs_dim = 2

    def __init__(self, b, eta, sigma, alpha, xi, lambdas, lambda0, varrho, varpi, beta, gamma, x0=0.):
        n = len(b)
        self.n_agents = n
        self.state_dim = self.control_dim = n
        self.noise_dim = self.n_channels = n + 1
        self.params = {
            key: np.asarray(val, dtype=np.float64)
            for key, val in dict(b=b, eta=eta, sigma=sigma, alpha=alpha, xi=xi,
                lambdas=lambdas, varrho=varrho, varpi=np.broadcast_to(varpi, (n,))).items()
        }
        for key, val in self.params.items():
            if val.shape != (n,):
                raise ValueError(f'[ dynamics/model ] {key} needs {n} entries, got shape {val.shape}')
        self.lambda0 = float(lambda0)

        varrho, varpi = self.params['varrho'], self.params['varpi']
        self.chi = (1 - varpi / n) / varrho
        self.rho = varpi / varrho
        self._t = {key: to_torch(val) for key, val in self.params.items()}
        self._chi, self._rho = to_torch(self.chi), to_torch(self.rho)
        super().__init__(beta, gamma, x0)

    def others_mean(self, x):
        n = self.n_agents
        return (x.sum(dim=-1, keepdim=True) - x) / n

    def drift(self, t, x, u):
        return u * self._t['b']

    def diffusion(self, t, x, u):
        idiosyncratic = torch.diag_embed(u * self._t['eta'])
        common = (u * self._t['sigma'])[:, :, None]
        return torch.cat([idiosyncratic, common], dim=-1)

    def jump_sizes(self, t, x, u):
        own = torch.diag_embed(u * self._t['alpha'])
        common = (u * self._t['xi'])[:, None, :]
        return torch.cat([own, common], dim=1)

    def intensities(self, t):
        return torch.cat([self._t['lambdas'], torch.tensor([self.lambda0], dtype=DTYPE)])

    def reward(self, t, x, u):
        y = self.others_mean(x)
        return -torch.exp(-self._chi * x + self._rho * y)

    def observe(self, x):
        y = self.others_mean(x)
        return torch.stack([x, y], dim=-1)

    def describe(self):
        return {**super().describe(), 'lambda0': self.lambda0,
            **{key: val.tolist() for key, val in self.params.items()}}


#-----------------------------------------------------------------------------#
#--------------------------------- factories ---------------------------------#
#-----------------------------------------------------------------------------#

def model_from_config(config):
    '''
        config : ExperimentConfig (resolved)
    '''
    problem = config['problem']
    params = config['model']
    if problem.startswith('lq'):
        return LqModel(
            params['b'], params['sigma'], params['alpha'], params['lambdas'],
            params['R'], params['Q'], params['beta'], params['gamma'], params['x0'],
            dim=config['dim'],
        )
    elif problem.startswith('merton'):
        return MertonModel(
            params['mu'], params['r'], params['sigma'], params['lam'], params['alpha'], params['p'],
            params['beta'], params['gamma'], params['x0'],
            u_low=params['u_low'], u_high=params['u_high'], squash=params['squash'],
        )
    elif problem == 'game':
        return GameModel(
            params['b'], params['eta'], params['sigma'], params['alpha'], params['xi'],
            params['lambdas'], params['lambda0'], params['varrho'], params['varpi'],
            params['beta'], params['gamma'], params['x0'],
        )
    raise ValueError(f'[ dynamics/model ] unknown problem: {problem}')
