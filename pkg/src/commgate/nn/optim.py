"""Adam updates over ParamStores."""

import numpy as np

from . import kernels
from .mlp import NonFiniteError, ParamStore

BETA1 = 0.9
BETA2 = 0.999
EPS = 1e-8


def optimizer_step(store: ParamStore, lr: float):
    """One Adam step from the accumulated gradients.

    Gradient buffers are left untouched; the caller zeroes them before the
    next accumulation pass.
    """
    for pname, _, G in store.param_arrays():
        if not np.isfinite(G).all():
            raise NonFiniteError(f"non-finite gradient in {pname}")
    store.adam_t += 1
    for lay in store.layers:
        kernels.adam_step(lay.W, lay.gW, lay.mW, lay.vW,
                          store.adam_t, lr, BETA1, BETA2, EPS)
        kernels.adam_step(lay.b, lay.gb, lay.mb, lay.vb,
                          store.adam_t, lr, BETA1, BETA2, EPS)
    store.check_finite()
