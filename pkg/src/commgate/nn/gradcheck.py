"""Central finite-difference gradient oracle.

Used both in tests and via the `check-grads` CLI subcommand. The oracle only
re-evaluates the loss value; it never trusts the analytic backward path it is
checking.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class GradCheckReport:
    per_param: dict          # param name -> max relative error
    max_rel_error: float
    max_abs_grad: float

    def passed(self, tolerance):
        return self.max_rel_error < tolerance

    def __str__(self):
        lines = [f"{name}: max rel err {err:.3e}"
                 for name, err in sorted(self.per_param.items())]
        lines.append(f"overall: {self.max_rel_error:.3e}")
        return "\n".join(lines)


def _rel_err(a, n):
    # the denominator floor keeps structurally-zero gradients (both sides
    # pure float noise) from registering as large relative errors
    return abs(a - n) / max(1e-6, abs(a) + abs(n))


def finite_diff_check(stores, loss_fn, eps=1e-5):
    """Compare analytic gradients against central differences.

    loss_fn() must be deterministic; it zeroes the stores' gradient buffers,
    runs forward + backward, and returns the scalar loss. Gradients present
    after the first call are taken as the analytic values.
    """
    if not isinstance(stores, (list, tuple)):
        stores = [stores]
    loss_fn()
    analytic = {}
    for store in stores:
        for pname, _, G in store.param_arrays():
            analytic[pname] = G.copy()

    per_param = {}
    max_abs = 0.0
    for store in stores:
        for pname, P, _ in store.param_arrays():
            a = analytic[pname]
            max_abs = max(max_abs, float(np.abs(a).max()) if a.size else 0.0)
            worst = 0.0
            flat = P.reshape(-1)
            aflat = a.reshape(-1)
            for idx in range(flat.size):
                orig = flat[idx]
                flat[idx] = orig + eps
                lp = loss_fn()
                flat[idx] = orig - eps
                lm = loss_fn()
                flat[idx] = orig
                num = (lp - lm) / (2.0 * eps)
                worst = max(worst, _rel_err(aflat[idx], num))
            per_param[pname] = worst
    # restore analytic grads so the report call is side-effect free
    loss_fn()
    overall = max(per_param.values()) if per_param else 0.0
    return GradCheckReport(per_param, overall, max_abs)
