"""Prune/send thresholds over the stream of Q-value differences.

Fixed mode keeps a window of recent Q-differences and reads the threshold
off the sorted window at the index targeting a desired pruned fraction
(split by index, not by value). Dynamic mode tracks an exponential moving
average of the Q-differences. Constant mode holds a caller-supplied value
(including +/-inf sentinels used in sanity tests).
"""

import math
from collections import deque

THRESHOLD_MODES = ("fixed", "dynamic", "constant")


def fixed_threshold(window, t_m):
    """Order-statistic threshold: sorted(window)[floor(len * t_m / 100)].

    The index is 0-based and clamped to the last element; t_m is the target
    pruned percentage in [0, 100].
    """
    if len(window) == 0:
        raise ValueError("fixed threshold needs a non-empty window")
    if not 0.0 <= t_m <= 100.0:
        raise ValueError(f"t_m must be in [0, 100], got {t_m}")
    ordered = sorted(window)
    idx = min(int(math.floor(len(ordered) * t_m / 100.0)), len(ordered) - 1)
    return ordered[idx]


def auxiliary_label(dq, threshold):
    """1 when the communication advantage strictly exceeds the threshold."""
    return int(dq > threshold)


class ThresholdState:
    def __init__(self, mode, t_m=30.0, beta=0.8, window_size=10_000,
                 initial=0.0):
        if mode not in THRESHOLD_MODES:
            raise ValueError(f"mode must be one of {THRESHOLD_MODES}")
        if mode == "dynamic" and not 0.6 <= beta <= 0.9:
            raise ValueError(f"beta must be in [0.6, 0.9], got {beta}")
        if mode == "fixed" and not 0.0 <= t_m <= 100.0:
            raise ValueError(f"t_m must be in [0, 100], got {t_m}")
        if window_size < 1:
            raise ValueError("window_size must be >= 1")
        self.mode = mode
        self.t_m = t_m
        self.beta = beta
        self.window = deque(maxlen=window_size)
        self.T = float(initial)

    def observe(self, dq):
        """Fold one Q-difference into the threshold; returns the new T."""
        if self.mode == "fixed":
            self.window.append(float(dq))
            self.T = fixed_threshold(self.window, self.t_m)
        elif self.mode == "dynamic":
            self.T = dynamic_threshold_update(self, dq)
        return self.T

    def label(self, dq):
        return auxiliary_label(dq, self.T)

    def state_dict(self):
        return {"mode": self.mode, "t_m": self.t_m, "beta": self.beta,
                "window_size": self.window.maxlen, "T": self.T,
                "window": list(self.window)}

    @classmethod
    def from_state_dict(cls, d):
        st = cls(d["mode"], t_m=d["t_m"], beta=d["beta"],
                 window_size=d["window_size"], initial=d["T"])
        st.window.extend(d["window"])
        return st


def dynamic_threshold_update(state: ThresholdState, dq):
    """Exponential moving average: T <- (1 - beta) * T + beta * dq."""
    if state.mode != "dynamic":
        raise ValueError("dynamic update on a non-dynamic threshold")
    state.T = (1.0 - state.beta) * state.T + state.beta * float(dq)
    return state.T
