"""Pure-numpy fallback for the compiled recursion kernels.

Semantically identical to _kernels.pyx; the time loop runs in Python with
vectorized per-step arithmetic (and vectorization across the batch for
batch_mse), so it is correct everywhere but slower on long trajectories.
"""

import numpy as np


def state_recursion(A, B, U, x0):
    """States of x(t+1) = A x(t) + B u(t), x(0) = x0; X[t] = x(t)."""
    N = U.shape[0]
    n = A.shape[0]
    X = np.empty((N, n))
    x = np.array(x0, dtype=float)
    X[0] = x
    for t in range(1, N):
        x = A @ x + B @ U[t - 1]
        X[t] = x
    return X


def batch_mse(As, Bs, Cs, Ds, W, Y):
    """Mean squared output error of a batch of predictors from zero state."""
    nb, nh = As.shape[0], As.shape[1]
    N = W.shape[0]
    x = np.zeros((nb, nh))
    acc = np.zeros(nb)
    for t in range(N):
        yhat = np.einsum("bij,bj->bi", Cs, x) + Ds @ W[t]
        r = yhat - Y[t]
        acc += np.einsum("bi,bi->b", r, r)
        x = np.einsum("bij,bj->bi", As, x) + Bs @ W[t]
    return acc / N
