from .helpers import Residual, Polyak, optimizer_step, make_scheduler, finite_difference_check
from .mlp import ResidualMlp
