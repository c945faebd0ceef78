from .kernels import BACKEND
from .mlp import (Layer, Mlp, MlpSpec, NonFiniteError, ParamStore, ShapeError,
                  copy_to_target)
from .optim import optimizer_step
from .gradcheck import GradCheckReport, finite_diff_check

__all__ = [
    "BACKEND", "Layer", "Mlp", "MlpSpec", "NonFiniteError", "ParamStore",
    "ShapeError", "copy_to_target", "optimizer_step", "GradCheckReport",
    "finite_diff_check",
]
