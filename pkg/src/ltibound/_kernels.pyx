# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled time-recursion kernels.

Dense LTI filtering is the toolkit's hot path: certification sweeps evaluate
the empirical loss of 1e4..1e5 candidate predictors over trajectories of up
to 1e5 steps, and simulation oracles run single systems for 1e6 steps.  The
time loop cannot be vectorized across steps, so it lives here; the numpy
fallback in _kernels_py mirrors these semantics exactly.
"""

import numpy as np


def state_recursion(const double[:, ::1] A, const double[:, ::1] B,
                    const double[:, ::1] U, const double[::1] x0):
    """States of x(t+1) = A x(t) + B u(t), x(0) = x0.

    Returns X with X[t] = x(t) for t = 0..N-1, N = U.shape[0].
    """
    cdef Py_ssize_t N = U.shape[0]
    cdef Py_ssize_t n = A.shape[0]
    cdef Py_ssize_t p = B.shape[1]
    out = np.empty((N, n), dtype=np.float64)
    cdef double[:, ::1] X = out
    cdef Py_ssize_t t, i, j
    cdef double s
    for i in range(n):
        X[0, i] = x0[i]
    for t in range(1, N):
        for i in range(n):
            s = 0.0
            for j in range(n):
                s += A[i, j] * X[t - 1, j]
            for j in range(p):
                s += B[i, j] * U[t - 1, j]
            X[t, i] = s
    return out


def batch_mse(const double[:, :, ::1] As, const double[:, :, ::1] Bs,
              const double[:, :, ::1] Cs, const double[:, :, ::1] Ds,
              const double[:, ::1] W, const double[:, ::1] Y):
    """Mean squared output error of a batch of predictors run from zero state.

    For each system b: x(0) = 0, yhat(t) = C x(t) + D w(t),
    x(t+1) = A x(t) + B w(t); returns (1/N) sum_t ||yhat(t) - y(t)||^2.
    """
    cdef Py_ssize_t nb = As.shape[0]
    cdef Py_ssize_t nh = As.shape[1]
    cdef Py_ssize_t N = W.shape[0]
    cdef Py_ssize_t p = W.shape[1]
    cdef Py_ssize_t q = Y.shape[1]
    out = np.empty(nb, dtype=np.float64)
    cdef double[::1] losses = out
    xbuf = np.zeros(nh, dtype=np.float64)
    xnbuf = np.zeros(nh, dtype=np.float64)
    cdef double[::1] x = xbuf
    cdef double[::1] xn = xnbuf
    cdef Py_ssize_t b, t, i, j
    cdef double acc, s, r
    for b in range(nb):
        for i in range(nh):
            x[i] = 0.0
        acc = 0.0
        for t in range(N):
            for i in range(q):
                s = 0.0
                for j in range(nh):
                    s += Cs[b, i, j] * x[j]
                for j in range(p):
                    s += Ds[b, i, j] * W[t, j]
                r = s - Y[t, i]
                acc += r * r
            for i in range(nh):
                s = 0.0
                for j in range(nh):
                    s += As[b, i, j] * x[j]
                for j in range(p):
                    s += Bs[b, i, j] * W[t, j]
                xn[i] = s
            for i in range(nh):
                x[i] = xn[i]
        losses[b] = acc / N
    return out
