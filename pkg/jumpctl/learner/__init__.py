from .critic import ValueNetwork, CriticPair, build_critics
from .losses import (
    AdvantageBatch,
    agent_obs,
    td_error,
    martingale_correction,
    martingale_corrected_td,
    critic_loss,
    gae_advantage,
    actor_loss,
)
from .trainer import Trainer, LOG_FIELDS, CHECKPOINT_VERSION
