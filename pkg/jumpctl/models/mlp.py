import torch
import torch.nn as nn

from jumpctl.utils.arrays import DTYPE, assert_finite
from .helpers import Residual


class ResidualMlp(nn.Module):
    '''
        tanh(W_in x + b) --> depth x [ h + tanh(W h + b) ] --> W_out h + b
    '''

    def __init__(self, input_dim, output_dim, hidden_width=32, depth=3, zero_output=False):
        super().__init__()
        self.input_dim = input_dim
        self.output_dim = output_dim
        self.hidden_width = hidden_width
        self.depth = depth

        self.input = nn.Sequential(
            nn.Linear(input_dim, hidden_width),
            nn.Tanh(),
        )
        self.blocks = nn.ModuleList([
            Residual(nn.Sequential(
                nn.Linear(hidden_width, hidden_width),
                nn.Tanh(),
            ))
            for _ in range(depth)
        ])
        self.output = nn.Linear(hidden_width, output_dim)

        ## value networks start at V = 0 so the first TD targets are bounded
        if zero_output:
            nn.init.zeros_(self.output.weight)
            nn.init.zeros_(self.output.bias)

        self.to(DTYPE)

    def forward(self, x):
        if x.shape[-1] != self.input_dim:
            raise ValueError(f'[ models/mlp ] expected input dim {self.input_dim}, got shape {tuple(x.shape)}')
        h = self.input(x)
        for block in self.blocks:
            h = block(h)
        out = self.output(h)
        return assert_finite(out, 'ResidualMlp output')
