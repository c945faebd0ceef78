"""Experience replay: fixed-capacity ring, uniform sampling with replacement."""

from dataclasses import dataclass

import numpy as np


@dataclass
class Experience:
    """One joint transition for the whole team."""

    obs: list            # per-agent observation vectors
    actions: list        # per-agent action vectors
    reward: float
    next_obs: list
    done: bool

    def __post_init__(self):
        if not np.isfinite(self.reward):
            raise ValueError("non-finite reward in experience")


class ReplayBuffer:
    def __init__(self, capacity, seed=0):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._ring = []
        self._pos = 0
        self.rng = np.random.default_rng(seed)

    def push(self, exp: Experience):
        if len(self._ring) < self.capacity:
            self._ring.append(exp)
        else:
            self._ring[self._pos] = exp
        self._pos = (self._pos + 1) % self.capacity

    def sample(self, batch_size):
        """Uniform with replacement."""
        if not self._ring:
            raise ValueError("cannot sample from an empty buffer")
        idx = self.rng.integers(0, len(self._ring), size=batch_size)
        return [self._ring[i] for i in idx]

    def sample_batch(self, batch_size):
        """Sample and stack into per-agent (B, dim) arrays."""
        exps = self.sample(batch_size)
        n = len(exps[0].obs)
        return {
            "obs": [np.stack([e.obs[i] for e in exps]) for i in range(n)],
            "actions": [np.stack([e.actions[i] for e in exps]) for i in range(n)],
            "reward": np.array([e.reward for e in exps]),
            "next_obs": [np.stack([e.next_obs[i] for e in exps]) for i in range(n)],
            "done": np.array([float(e.done) for e in exps]),
        }

    def __len__(self):
        return len(self._ring)
