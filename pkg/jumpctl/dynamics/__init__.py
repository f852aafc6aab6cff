from .profiles import CoefProfile, ProfileVector, eval_profile
from .model import ModelSpec, LqModel, MertonModel, GameModel, model_from_config
from .simulate import (
    TimeGrid,
    JumpRecord,
    Noise,
    Transition,
    PathBatch,
    sample_jumps,
    draw_noise,
    sample_noise,
    euler_step,
    check_state_bound,
    act,
    rollout_batch,
)
