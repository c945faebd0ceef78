"""Timing comparison of the compiled kernels against the numpy fallback.

Runs the hot per-layer operations (affine forward/backward, activation
forward/backward, Adam) plus a full forward+backward+step over a training-
shaped MLP, and checks that both backends agree numerically.

Usage: python benchmarks/bench_kernels.py [--repeats 200]
"""

import argparse
import time

import numpy as np

from commgate.nn import _kernels_np

try:
    from commgate.nn import _kernels_cy
except ImportError:
    _kernels_cy = None


def timeit(fn, repeats):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_backend(impl, repeats, rng):
    B, din, dout = 32, 128, 64
    X = rng.normal(size=(B, din))
    W = rng.normal(size=(dout, din))
    b = rng.normal(size=dout)
    dY = rng.normal(size=(B, dout))
    gW = np.zeros_like(W)
    gb = np.zeros_like(b)
    Y = impl.affine_forward(X, W, b)
    A = impl.act_forward(Y, impl.ACT_TANH)
    m = np.zeros_like(W)
    v = np.zeros_like(W)
    g = rng.normal(size=W.shape)
    P = W.copy()

    results = {
        "affine_forward": timeit(lambda: impl.affine_forward(X, W, b), repeats),
        "affine_backward": timeit(
            lambda: impl.affine_backward(X, W, dY, gW, gb), repeats),
        "act_forward(tanh)": timeit(
            lambda: impl.act_forward(Y, impl.ACT_TANH), repeats),
        "act_backward(tanh)": timeit(
            lambda: impl.act_backward(A, dY, impl.ACT_TANH), repeats),
        "adam_step": timeit(
            lambda: impl.adam_step(P, g, m, v, 1, 1e-3, 0.9, 0.999, 1e-8),
            repeats),
    }

    def train_step():
        h = impl.act_forward(impl.affine_forward(X, W, b), impl.ACT_TANH)
        dh = impl.act_backward(h, dY, impl.ACT_TANH)
        gW.fill(0.0)
        gb.fill(0.0)
        impl.affine_backward(X, W, dh, gW, gb)
        impl.adam_step(P, gW, m, v, 1, 1e-3, 0.9, 0.999, 1e-8)

    results["layer_train_step"] = timeit(train_step, repeats)
    return results


def check_agreement(rng):
    """Both backends must produce the same numbers (within float noise)."""
    B, din, dout = 8, 20, 12
    X = rng.normal(size=(B, din))
    W = rng.normal(size=(dout, din))
    b = rng.normal(size=dout)
    dY = rng.normal(size=(B, dout))
    worst = 0.0
    for act in (_kernels_np.ACT_IDENTITY, _kernels_np.ACT_TANH,
                _kernels_np.ACT_RELU, _kernels_np.ACT_SIGMOID):
        y_np = _kernels_np.act_forward(_kernels_np.affine_forward(X, W, b), act)
        y_cy = _kernels_cy.act_forward(_kernels_cy.affine_forward(X, W, b), act)
        worst = max(worst, float(np.abs(y_np - y_cy).max()))
        gW1, gb1 = np.zeros_like(W), np.zeros_like(b)
        gW2, gb2 = np.zeros_like(W), np.zeros_like(b)
        d1 = _kernels_np.affine_backward(
            X, W, _kernels_np.act_backward(y_np, dY, act), gW1, gb1)
        d2 = _kernels_cy.affine_backward(
            X, W, _kernels_cy.act_backward(y_cy, dY, act), gW2, gb2)
        for a, c in ((gW1, gW2), (gb1, gb2), (d1, d2)):
            worst = max(worst, float(np.abs(a - c).max()))
    return worst


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=200)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    np_results = bench_backend(_kernels_np, args.repeats, rng)
    if _kernels_cy is None:
        print("compiled backend unavailable; numpy timings only")
        for k, t in np_results.items():
            print(f"{k:22s} numpy {t * 1e6:9.2f} us")
        return

    cy_results = bench_backend(_kernels_cy, args.repeats,
                               np.random.default_rng(0))
    worst = check_agreement(np.random.default_rng(1))
    print(f"backend agreement: max abs difference {worst:.3e}")
    print(f"{'kernel':22s} {'numpy':>12s} {'cython':>12s} {'speedup':>9s}")
    for k in np_results:
        tn, tc = np_results[k], cy_results[k]
        print(f"{k:22s} {tn * 1e6:9.2f} us {tc * 1e6:9.2f} us "
              f"{tn / tc:8.2f}x")


if __name__ == "__main__":
    main()
