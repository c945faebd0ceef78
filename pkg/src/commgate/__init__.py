"""Gated multi-agent actor-critic communication with message pruning."""

from .nn import BACKEND as KERNEL_BACKEND

__version__ = "0.1.0"
