"""Kernel backend selection.

The compiled extension is preferred when available; set COMMGATE_KERNELS to
"numpy" or "cython" to force a backend (cython raises if the extension is
missing). A single process always uses one backend, which keeps training
runs bitwise reproducible.
"""

import os

from . import _kernels_np

_choice = os.environ.get("COMMGATE_KERNELS", "auto").lower()

if _choice == "numpy":
    _impl = _kernels_np
elif _choice == "cython":
    from . import _kernels_cy as _impl
else:
    try:
        from . import _kernels_cy as _impl
    except ImportError:
        _impl = _kernels_np

BACKEND = _impl.BACKEND

ACT_IDENTITY = _kernels_np.ACT_IDENTITY
ACT_TANH = _kernels_np.ACT_TANH
ACT_RELU = _kernels_np.ACT_RELU
ACT_SIGMOID = _kernels_np.ACT_SIGMOID

affine_forward = _impl.affine_forward
affine_backward = _impl.affine_backward
act_forward = _impl.act_forward
act_backward = _impl.act_backward
adam_step = _impl.adam_step
