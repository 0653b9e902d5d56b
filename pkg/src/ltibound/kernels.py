"""Recursion-kernel dispatch: compiled core when available, numpy otherwise.

`BACKEND` reports which implementation is active ("compiled" or "python").
Setting the environment variable LTIBOUND_PURE_PYTHON=1 before import forces
the fallback, which is how the benchmark and the cross-implementation tests
exercise both paths.
"""

import os

import numpy as np

from . import _kernels_py

if os.environ.get("LTIBOUND_PURE_PYTHON"):
    _impl = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as _impl  # type: ignore[attr-defined]

        BACKEND = "compiled"
    except ImportError:
        _impl = _kernels_py
        BACKEND = "python"


def _c(a):
    return np.ascontiguousarray(a, dtype=np.float64)


def state_recursion(A, B, U, x0):
    """States X[t] of x(t+1) = A x(t) + B u(t) for t = 0..len(U)-1."""
    A, B, U = _c(A), _c(B), _c(U)
    x0 = np.ascontiguousarray(x0, dtype=np.float64).reshape(-1)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape[0] != n or x0.shape[0] != n:
        raise ValueError(
            f"inconsistent recursion shapes: A {A.shape}, B {B.shape}, x0 {x0.shape}"
        )
    if U.ndim != 2 or U.shape[1] != B.shape[1]:
        raise ValueError(f"input shape {U.shape} incompatible with B {B.shape}")
    if U.shape[0] == 0:
        return np.empty((0, n))
    return _impl.state_recursion(A, B, U, x0)


def batch_mse(As, Bs, Cs, Ds, W, Y):
    """Per-system mean squared error over one trajectory, zero initial state."""
    As, Bs, Cs, Ds, W, Y = map(_c, (As, Bs, Cs, Ds, W, Y))
    nb, nh = As.shape[0], As.shape[1]
    if As.shape != (nb, nh, nh) or Bs.shape[:2] != (nb, nh):
        raise ValueError(f"bad batch shapes: As {As.shape}, Bs {Bs.shape}")
    if Cs.shape[0] != nb or Cs.shape[2] != nh or Ds.shape[0] != nb:
        raise ValueError(f"bad batch shapes: Cs {Cs.shape}, Ds {Ds.shape}")
    if W.shape[0] != Y.shape[0] or W.shape[0] == 0:
        raise ValueError(f"trajectory shapes disagree: W {W.shape}, Y {Y.shape}")
    if W.shape[1] != Bs.shape[2] or Y.shape[1] != Cs.shape[1]:
        raise ValueError("feature/output widths do not match the predictor batch")
    return _impl.batch_mse(As, Bs, Cs, Ds, W, Y)
