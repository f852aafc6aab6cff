import torch
import torch.nn as nn
import torch.nn.functional as F
from torch.distributions import Normal, Independent

from jumpctl.models import ResidualMlp


class GaussianBase(nn.Module):
    '''
        z_0 = mean(t, obs) + std(t, obs) * eps,  eps ~ N(0, I)
        std is softplus(.) + min_std, or a constant when `fixed_std` is given
    '''

    def __init__(self, cond_dim, action_dim, hidden_width=32, depth=3, fixed_std=None, min_std=1e-6):
        super().__init__()
        self.action_dim = action_dim
        self.fixed_std = fixed_std
        self.min_std = min_std
        n_out = action_dim if fixed_std is not None else 2 * action_dim
        self.net = ResidualMlp(cond_dim, n_out, hidden_width, depth)

    def forward(self, cond):
        out = self.net(cond)
        mean = out[:, :self.action_dim]
        if self.fixed_std is not None:
            std = torch.full_like(mean, float(self.fixed_std))
        else:
            std = F.softplus(out[:, self.action_dim:]) + self.min_std
        return mean, std

    def distribution(self, cond):
        mean, std = self(cond)
        return Independent(Normal(mean, std), 1)

    @staticmethod
    def log_prob(z0, mean, std):
        return Independent(Normal(mean, std), 1).log_prob(z0)
