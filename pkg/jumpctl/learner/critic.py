import copy
import torch
import torch.nn as nn

from jumpctl.models import ResidualMlp, Polyak
from jumpctl.utils.arrays import DTYPE, time_column


class ValueNetwork(nn.Module):
    '''
        V(t, obs) as a residual tanh MLP over concat(t, obs) -> [ B ]
    '''

    def __init__(self, obs_dim, hidden_width=32, depth=3):
        super().__init__()
        self.obs_dim = obs_dim
        self.net = ResidualMlp(obs_dim + 1, 1, hidden_width, depth, zero_output=True)

    def forward(self, t, obs):
        obs = obs.to(DTYPE)
        return self.net(torch.cat([time_column(t, obs.shape[0]), obs], dim=-1))[:, 0]


class CriticPair(nn.Module):
    '''
        online critic V and target critic V-bar of identical architecture;
        the target only moves through `update_target`
    '''

    def __init__(self, online, rho_c=0.995):
        super().__init__()
        self.online = online
        self.target = copy.deepcopy(online)
        for param in self.target.parameters():
            param.requires_grad_(False)
        self.rho_c = rho_c
        self.polyak = Polyak(rho_c)

    def forward(self, t, obs):
        return self.online(t, obs)

    def update_target(self):
        self.polyak.update_model_average(self.target, self.online)


def build_critics(model, network, rho_c):
    return [
        CriticPair(ValueNetwork(model.obs_dim, network['critic_width'], network['critic_depth']), rho_c)
        for _ in range(model.n_agents)
    ]
