# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: batched affine layers, activations, Adam update.

Same API as _kernels_np; selected in kernels.py when the extension built.
Matrix products go through BLAS dgemm; the elementwise work (activations,
Adam moments, bias accumulation) runs in fused typed loops with no numpy
temporaries.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport tanh, exp, sqrt, pow
from scipy.linalg.cython_blas cimport dgemm

cnp.import_array()

ACT_IDENTITY = 0
ACT_TANH = 1
ACT_RELU = 2
ACT_SIGMOID = 3

BACKEND = "cython"


cdef void _dgemm_c(char ta, char tb, int m, int n, int k, double alpha,
                   double* A, int lda, double* B, int ldb, double beta,
                   double* C, int ldc) nogil:
    dgemm(&ta, &tb, &m, &n, &k, &alpha, A, &lda, B, &ldb, &beta, C, &ldc)


def affine_forward(object X_in, object W_in, object b_in):
    """Y = X @ W.T + b for X (B,in), W (out,in), b (out,)."""
    cdef double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64)
    cdef double[:, ::1] W = np.ascontiguousarray(W_in, dtype=np.float64)
    cdef double[::1] b = np.ascontiguousarray(b_in, dtype=np.float64)
    cdef Py_ssize_t B = X.shape[0], nin = X.shape[1], nout = W.shape[0]
    cdef cnp.ndarray[double, ndim=2] Y_arr = np.empty((B, nout), dtype=np.float64)
    cdef double[:, ::1] Y = Y_arr
    cdef Py_ssize_t i, j
    for i in range(B):
        for j in range(nout):
            Y[i, j] = b[j]
    if nin > 0 and B > 0 and nout > 0:
        # column-major view of a C-order (r,c) array is its transpose, so
        # Y^T = W X^T maps to dgemm('T','N') on the raw buffers
        _dgemm_c(b'T', b'N', <int>nout, <int>B, <int>nin, 1.0,
                 &W[0, 0], <int>nin, &X[0, 0], <int>nin, 1.0,
                 &Y[0, 0], <int>nout)
    return Y_arr


def affine_backward(object X_in, object W_in, object dY_in,
                    cnp.ndarray[double, ndim=2] gW,
                    cnp.ndarray[double, ndim=1] gb):
    """Accumulate gW += dY.T @ X, gb += sum(dY); return dX = dY @ W."""
    cdef double[:, ::1] X = np.ascontiguousarray(X_in, dtype=np.float64)
    cdef double[:, ::1] W = np.ascontiguousarray(W_in, dtype=np.float64)
    cdef double[:, ::1] dY = np.ascontiguousarray(dY_in, dtype=np.float64)
    cdef double[:, ::1] gWv = gW
    cdef double[::1] gbv = gb
    cdef Py_ssize_t B = X.shape[0], nin = X.shape[1], nout = W.shape[0]
    cdef cnp.ndarray[double, ndim=2] dX_arr = np.zeros((B, nin), dtype=np.float64)
    cdef double[:, ::1] dX = dX_arr
    cdef Py_ssize_t i, j
    for i in range(B):
        for j in range(nout):
            gbv[j] += dY[i, j]
    if B > 0 and nin > 0 and nout > 0:
        # gW^T = X^T dY  and  dX^T = W^T dY^T in the column-major view
        _dgemm_c(b'N', b'T', <int>nin, <int>nout, <int>B, 1.0,
                 &X[0, 0], <int>nin, &dY[0, 0], <int>nout, 1.0,
                 &gWv[0, 0], <int>nin)
        _dgemm_c(b'N', b'N', <int>nin, <int>B, <int>nout, 1.0,
                 &W[0, 0], <int>nin, &dY[0, 0], <int>nout, 0.0,
                 &dX[0, 0], <int>nin)
    return dX_arr


def act_forward(cnp.ndarray[double, ndim=2] Z, int kind):
    cdef Py_ssize_t B = Z.shape[0], n = Z.shape[1]
    cdef cnp.ndarray[double, ndim=2] A
    cdef Py_ssize_t i, j
    cdef double z, ez
    if kind == 0:
        return Z
    if kind == 1:
        return np.tanh(Z)  # numpy's vectorized tanh beats a libm loop
    if kind < 0 or kind > 3:
        raise ValueError(f"unknown activation id {kind}")
    A = np.empty((B, n), dtype=np.float64)
    for i in range(B):
        for j in range(n):
            z = Z[i, j]
            if kind == 2:
                A[i, j] = z if z > 0.0 else 0.0
            else:
                if z >= 0.0:
                    A[i, j] = 1.0 / (1.0 + exp(-z))
                else:
                    ez = exp(z)
                    A[i, j] = ez / (1.0 + ez)
    return A


def act_backward(cnp.ndarray[double, ndim=2] A,
                 cnp.ndarray[double, ndim=2] dA, int kind):
    """dZ from post-activation values A and upstream dA."""
    cdef Py_ssize_t B = A.shape[0], n = A.shape[1]
    cdef cnp.ndarray[double, ndim=2] dZ
    cdef Py_ssize_t i, j
    cdef double a
    if kind < 0 or kind > 3:
        raise ValueError(f"unknown activation id {kind}")
    dZ = np.empty((B, n), dtype=np.float64)
    for i in range(B):
        for j in range(n):
            a = A[i, j]
            if kind == 0:
                dZ[i, j] = dA[i, j]
            elif kind == 1:
                dZ[i, j] = dA[i, j] * (1.0 - a * a)
            elif kind == 2:
                dZ[i, j] = dA[i, j] if a > 0.0 else 0.0
            else:
                dZ[i, j] = dA[i, j] * a * (1.0 - a)
    return dZ


def adam_step(cnp.ndarray P, cnp.ndarray G, cnp.ndarray M, cnp.ndarray V,
              long t, double lr, double beta1, double beta2, double eps):
    """One Adam update of P in place; t is the 1-based step count."""
    cdef double[::1] p = P.ravel()
    cdef double[::1] g = G.ravel()
    cdef double[::1] m = M.ravel()
    cdef double[::1] v = V.ravel()
    cdef Py_ssize_t n = p.shape[0], i
    cdef double c1 = 1.0 - pow(beta1, <double>t)
    cdef double c2 = 1.0 - pow(beta2, <double>t)
    cdef double mhat, vhat
    for i in range(n):
        m[i] = beta1 * m[i] + (1.0 - beta1) * g[i]
        v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i]
        mhat = m[i] / c1
        vhat = v[i] / c2
        p[i] -= lr * mhat / (sqrt(vhat) + eps)
