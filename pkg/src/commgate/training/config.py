"""Training hyper-parameters with validation."""

from dataclasses import dataclass, field, asdict

from .thresholds import THRESHOLD_MODES


@dataclass
class TrainConfig:
    seed: int = 0
    gamma: float = 0.95
    lr_critic: float = 1e-3
    lr_actor: float = 1e-4
    lr_channel: float = 1e-4
    lr_gating: float = 1e-3
    batch_size: int = 32
    replay_capacity: int = 20_000
    warmup: int = 200               # transitions before updates start
    update_every: int = 4           # env steps per gradient update
    target_period: int = 200        # hard target copy every C train steps
    episodes: int = 2000            # phase-1 episodes
    explore_scale: float = 0.3
    explore_final: float = 0.02
    explore_decay_frac: float = 0.7  # fraction of episodes for linear decay

    # network shape
    hidden: tuple = (64,)
    d_m: int = 16
    d_M: int = 16

    # phase 2 / gating
    threshold_mode: str = "dynamic"
    t_m: float = 30.0               # target pruned %, fixed mode
    beta: float = 0.8               # EMA coefficient, dynamic mode
    threshold_window: int = 10_000  # K, fixed mode
    constant_threshold: float = 0.0  # constant mode (incl. +/-inf sentinels)
    phase2_episodes: int = 200
    phase2_explore: float = 0.05
    gating_batch: int = 64
    gating_update_every: int = 8    # probe steps between gating updates
    gating_dataset_cap: int = 20_000
    finetune_phase2: bool = False   # keep updating actor/critic in phase 2

    def __post_init__(self):
        self.hidden = tuple(self.hidden)
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {self.gamma}")
        if self.threshold_mode not in THRESHOLD_MODES:
            raise ValueError(f"threshold_mode must be one of {THRESHOLD_MODES}")
        if self.threshold_mode == "dynamic" and not 0.6 <= self.beta <= 0.9:
            raise ValueError(f"beta must be in [0.6, 0.9], got {self.beta}")
        if self.threshold_mode == "fixed" and not 0.0 <= self.t_m <= 100.0:
            raise ValueError(f"t_m must be in [0, 100], got {self.t_m}")
        for name in ("lr_critic", "lr_actor", "lr_channel", "lr_gating"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        if self.batch_size < 1 or self.replay_capacity < 1:
            raise ValueError("batch_size and replay_capacity must be >= 1")
        if self.explore_scale < 0 or self.explore_final < 0:
            raise ValueError("exploration scales must be >= 0")

    def to_dict(self):
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "hidden" in d:
            d["hidden"] = tuple(d["hidden"])
        return cls(**d)
