import math
import torch
import torch.nn as nn

from jumpctl.utils.errors import NumericalError

#-----------------------------------------------------------------------------#
#---------------------------------- modules ----------------------------------#
#-----------------------------------------------------------------------------#

class Residual(nn.Module):
    def __init__(self, fn):
        super().__init__()
        self.fn = fn

    def forward(self, x, *args, **kwargs):
        return self.fn(x, *args, **kwargs) + x

#-----------------------------------------------------------------------------#
#------------------------------ target averaging -----------------------------#
#-----------------------------------------------------------------------------#

class Polyak():
    '''
        target <- rho * target + (1 - rho) * online
    '''
    def __init__(self, rho):
        if not 0 <= rho <= 1:
            raise ValueError(f'[ models/helpers ] Polyak rate must lie in [0, 1], got {rho}')
        self.rho = rho

    @torch.no_grad()
    def update_model_average(self, target_model, online_model):
        for online_params, target_params in zip(online_model.parameters(), target_model.parameters()):
            if online_params.shape != target_params.shape:
                raise ValueError(f'[ models/helpers ] shape mismatch {tuple(target_params.shape)} vs {tuple(online_params.shape)}')
            target_params.copy_(self.update_average(target_params, online_params))

    def update_average(self, old, new):
        if old is None:
            return new
        return old * self.rho + (1 - self.rho) * new

#-----------------------------------------------------------------------------#
#--------------------------------- optimizers --------------------------------#
#-----------------------------------------------------------------------------#

def optimizer_step(optimizer, parameters, max_grad_norm):
    '''
        clip by global norm, then one Adam step; returns the pre-clip norm
    '''
    parameters = [p for p in parameters if p.grad is not None]
    try:
        norm = torch.nn.utils.clip_grad_norm_(parameters, max_grad_norm, error_if_nonfinite=True)
    except RuntimeError as e:
        optimizer.zero_grad(set_to_none=True)
        raise NumericalError(f'non-finite gradient before optimizer step: {e}')
    optimizer.step()
    optimizer.zero_grad(set_to_none=True)
    return float(norm)

def make_scheduler(optimizer, kind, n_iterations, milestones=(0.5, 0.75), decay=0.5,
        warmup=0.05, min_lr_factor=0.05):
    '''
        one scheduler step per training iteration; every schedule keeps
        the learning rate strictly positive
    '''
    n_iterations = max(int(n_iterations), 1)

    if kind == 'constant':
        return torch.optim.lr_scheduler.LambdaLR(optimizer, lambda itr: 1.)

    elif kind == 'multi-step':
        steps = sorted({max(1, int(round(m * n_iterations))) for m in milestones})
        return torch.optim.lr_scheduler.MultiStepLR(optimizer, milestones=steps, gamma=decay)

    elif kind == 'cosine-warmup':
        n_warmup = int(round(warmup * n_iterations))

        def factor(itr):
            if itr < n_warmup:
                return (itr + 1) / (n_warmup + 1)
            progress = min((itr - n_warmup) / max(n_iterations - n_warmup, 1), 1.)
            return min_lr_factor + (1 - min_lr_factor) * 0.5 * (1 + math.cos(math.pi * progress))

        return torch.optim.lr_scheduler.LambdaLR(optimizer, factor)

    raise ValueError(f'[ models/helpers ] unknown schedule: {kind}')

#-----------------------------------------------------------------------------#
#------------------------------ gradient checks ------------------------------#
#-----------------------------------------------------------------------------#

def finite_difference_check(fn, parameters, n_coords=100, h=1e-5, generator=None, floor=1e-6):
    '''
        fn : () -> scalar tensor
        compares autograd against central differences at random parameter
        coordinates (all of them if there are fewer than n_coords);
        returns the max relative error
    '''
    parameters = [p for p in parameters if p.requires_grad]
    grads = torch.autograd.grad(fn(), parameters, allow_unused=True)
    grads = [torch.zeros_like(p) if g is None else g for p, g in zip(parameters, grads)]

    sizes = torch.tensor([p.numel() for p in parameters])
    offsets = torch.cumsum(sizes, 0) - sizes
    total = int(sizes.sum())
    if total <= n_coords:
        coords = torch.arange(total)
    else:
        coords = torch.randperm(total, generator=generator)[:n_coords]

    worst = 0.
    with torch.no_grad():
        for coord in coords.tolist():
            i = int(torch.searchsorted(offsets, torch.tensor(coord), right=True)) - 1
            j = coord - int(offsets[i])
            flat = parameters[i].view(-1)
            original = flat[j].item()

            flat[j] = original + h
            upper = fn().item()
            flat[j] = original - h
            lower = fn().item()
            flat[j] = original

            numeric = (upper - lower) / (2 * h)
            analytic = grads[i].reshape(-1)[j].item()
            error = abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)
            worst = max(worst, error)
    return worst
