import numpy as np
import torch

DTYPE = torch.float64
DEVICE = 'cpu'

#-----------------------------------------------------------------------------#
#------------------------------ numpy <--> torch -----------------------------#
#-----------------------------------------------------------------------------#

def to_np(x):
	if torch.is_tensor(x):
		x = x.detach().cpu().numpy()
	return x

def to_torch(x, dtype=None, device=None):
	dtype = dtype or DTYPE
	device = device or DEVICE
	if type(x) is dict:
		return {k: to_torch(v, dtype, device) for k, v in x.items()}
	elif torch.is_tensor(x):
		return x.to(device).type(dtype)
	return torch.as_tensor(np.asarray(x, dtype=np.float64), dtype=dtype, device=device)

def time_column(t, batch_size):
	'''
		broadcast a scalar time or a [ batch_size ] tensor of times
		to a [ batch_size x 1 ] column
	'''
	if torch.is_tensor(t):
		t = t.to(DTYPE)
		if t.dim() == 0:
			return t.expand(batch_size, 1)
		return t.reshape(batch_size, 1)
	return torch.full((batch_size, 1), float(t), dtype=DTYPE)

def assert_finite(x, what):
	if not torch.isfinite(x).all():
		## imported here to keep arrays importable on its own
		from .errors import NumericalError
		raise NumericalError(f'non-finite values in {what}')
	return x

def _to_str(num):
	if num >= 1e6:
		return f'{(num/1e6):.2f} M'
	else:
		return f'{(num/1e3):.2f} k'

#-----------------------------------------------------------------------------#
#----------------------------- parameter counting ----------------------------#
#-----------------------------------------------------------------------------#

def param_to_module(param):
	module_name = param[::-1].split('.', maxsplit=1)[-1][::-1]
	return module_name

def report_parameters(model, topk=5):
	counts = {k: p.numel() for k, p in model.named_parameters()}
	n_parameters = sum(counts.values())
	print(f'[ utils/arrays ] Total parameters: {_to_str(n_parameters)}')

	modules = dict(model.named_modules())
	sorted_keys = sorted(counts, key=lambda x: -counts[x])
	for key in sorted_keys[:topk]:
		module = param_to_module(key)
		print(' '*8, f'{key:10}: {_to_str(counts[key])} | {modules[module]}')

	remaining = sum([counts[k] for k in sorted_keys[topk:]])
	if len(counts) > topk:
		print(' '*8, f'... and {len(counts)-topk} others accounting for {_to_str(remaining)} parameters')
	return n_parameters
