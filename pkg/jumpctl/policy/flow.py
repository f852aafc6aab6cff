import numpy as np
import torch
import torch.nn as nn
import einops
from nflows.transforms.splines.rational_quadratic import (
    unconstrained_rational_quadratic_spline,
    DEFAULT_MIN_BIN_WIDTH,
    DEFAULT_MIN_BIN_HEIGHT,
    DEFAULT_MIN_DERIVATIVE,
)

from jumpctl.models import ResidualMlp


class SplineFlow(nn.Module):
    '''
        conditional monotone rational-quadratic spline on [-B, B] per action
        coordinate with identity tails; knot widths, heights and interior
        derivatives come from a conditioner on (t, obs)
    '''

    def __init__(self, cond_dim, action_dim, n_bins=6, tail_bound=2.5, hidden_width=32, depth=2,
            min_bin_width=DEFAULT_MIN_BIN_WIDTH, min_bin_height=DEFAULT_MIN_BIN_HEIGHT,
            min_derivative=DEFAULT_MIN_DERIVATIVE):
        super().__init__()
        self.action_dim = action_dim
        self.n_bins = n_bins
        self.tail_bound = tail_bound
        self.min_bin_width = min_bin_width
        self.min_bin_height = min_bin_height
        self.min_derivative = min_derivative

        ## widths, heights, interior derivatives
        self.n_params = 3 * n_bins - 1
        self.conditioner = ResidualMlp(cond_dim, action_dim * self.n_params, hidden_width, depth, zero_output=True)

        ## uniform bins with unit derivatives: the spline starts as the identity
        identity_derivative = np.log(np.exp(1 - min_derivative) - 1)
        with torch.no_grad():
            bias = einops.rearrange(self.conditioner.output.bias, '(m p) -> m p', p=self.n_params)
            bias[:, 2 * n_bins:] = identity_derivative

    def spline_params(self, cond):
        params = einops.rearrange(self.conditioner(cond), 'b (m p) -> b m p', p=self.n_params)
        K = self.n_bins
        return params[..., :K], params[..., K:2*K], params[..., 2*K:]

    def _transform(self, inputs, cond, inverse):
        widths, heights, derivatives = self.spline_params(cond)
        outputs, log_det = unconstrained_rational_quadratic_spline(
            inputs=inputs,
            unnormalized_widths=widths,
            unnormalized_heights=heights,
            unnormalized_derivatives=derivatives,
            inverse=inverse,
            tails='linear',
            tail_bound=self.tail_bound,
            min_bin_width=self.min_bin_width,
            min_bin_height=self.min_bin_height,
            min_derivative=self.min_derivative,
        )
        return outputs, log_det.sum(dim=-1)

    def forward(self, z, cond):
        '''
            returns (F(z), log |det dF/dz|)
        '''
        return self._transform(z, cond, inverse=False)

    def inverse(self, z_flow, cond):
        '''
            returns (F^-1(z_flow), log |det dF^-1/dz_flow|)
        '''
        return self._transform(z_flow, cond, inverse=True)

    def derivatives(self, cond):
        '''
            spline derivatives at all knots, boundaries included [ B x m x K+1 ]
        '''
        _, _, derivatives = self.spline_params(cond)
        return self.min_derivative + nn.functional.softplus(
            nn.functional.pad(derivatives, (1, 1), value=float(np.log(np.exp(1 - self.min_derivative) - 1))))


def flow_forward(flow, z, cond):
    return flow.forward(z, cond)

def flow_inverse(flow, z_flow, cond):
    return flow.inverse(z_flow, cond)
