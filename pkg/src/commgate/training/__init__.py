from .config import TrainConfig
from .replay import Experience, ReplayBuffer
from .thresholds import (ThresholdState, auxiliary_label,
                         dynamic_threshold_update, fixed_threshold)
from .trainer import (PhaseOrderError, actor_update, channel_update,
                      critic_update, delta_q, evaluate, forward_pipeline,
                      gating_update, td_target, train_phase1,
                      train_phase2_gating)
from .checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "TrainConfig", "Experience", "ReplayBuffer", "ThresholdState",
    "auxiliary_label", "dynamic_threshold_update", "fixed_threshold",
    "PhaseOrderError", "actor_update", "channel_update", "critic_update",
    "delta_q", "evaluate", "forward_pipeline", "gating_update", "td_target",
    "train_phase1", "train_phase2_gating", "load_checkpoint",
    "save_checkpoint",
]
