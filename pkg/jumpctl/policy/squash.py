import math
import torch
import torch.nn as nn
import torch.nn.functional as F

from jumpctl.utils.errors import SaturationError


class SquashMap(nn.Module):
    '''
        u = low + (high - low) * sigmoid(z / tau)
        the temperature tau anneals linearly from tau_start to tau_end
        over the first `anneal_steps` actor updates
    '''

    def __init__(self, low, high, tau_start=2.0, tau_end=1.0, anneal_steps=30, margin=1e-6):
        super().__init__()
        if not high > low:
            raise ValueError(f'[ policy/squash ] empty action interval [{low}, {high}]')
        self.low = float(low)
        self.high = float(high)
        self.tau_start = float(tau_start)
        self.tau_end = float(tau_end)
        self.anneal_steps = int(anneal_steps)
        self.margin = margin

    @property
    def range(self):
        return self.high - self.low

    def tau(self, n_updates):
        if self.anneal_steps <= 0:
            return self.tau_end
        frac = min(float(n_updates) / self.anneal_steps, 1.)
        return self.tau_start + (self.tau_end - self.tau_start) * frac

    def log_det(self, z, tau):
        '''
            log |dS/dz| summed over action coordinates
        '''
        y = z / tau
        log_det = math.log(self.range) - F.softplus(-y) - F.softplus(y) - math.log(tau)
        return log_det.sum(dim=-1)

    def forward(self, z, tau):
        u = self.low + self.range * torch.sigmoid(z / tau)
        return u, self.log_det(z, tau)

    def inverse(self, u, tau):
        '''
            u must lie strictly inside (low, high); it is clamped a margin
            away from the bounds before the logit
        '''
        if (u <= self.low).any() or (u >= self.high).any():
            raise SaturationError(
                f'action on or outside the squashing bounds [{self.low}, {self.high}]: '
                f'min {float(u.min()):.6g}, max {float(u.max()):.6g}')
        u = u.clamp(self.low + self.margin, self.high - self.margin)
        z = tau * torch.logit((u - self.low) / self.range)
        return z, self.log_det(z, tau)

    def extra_repr(self):
        return f'low={self.low}, high={self.high}, tau={self.tau_start}->{self.tau_end} over {self.anneal_steps}'
