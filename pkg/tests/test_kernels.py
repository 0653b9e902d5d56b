import numpy as np
import pytest

from ltibound import _kernels_py, kernels

try:
    from ltibound import _kernels
except ImportError:
    _kernels = None


def reference_states(A, B, U, x0):
    N = U.shape[0]
    X = np.empty((N, A.shape[0]))
    X[0] = x0
    for t in range(1, N):
        X[t] = A @ X[t - 1] + B @ U[t - 1]
    return X


def test_state_recursion_semantics():
    rng = np.random.default_rng(0)
    A = 0.5 * rng.standard_normal((3, 3))
    B = rng.standard_normal((3, 2))
    U = rng.standard_normal((50, 2))
    x0 = rng.standard_normal(3)
    X = kernels.state_recursion(A, B, U, x0)
    np.testing.assert_allclose(X, reference_states(A, B, U, x0), rtol=1e-12, atol=1e-12)


def test_batch_mse_matches_scalar_loop():
    rng = np.random.default_rng(1)
    nb = 7
    As = 0.4 * rng.standard_normal((nb, 2, 2))
    Bs = rng.standard_normal((nb, 2, 2))
    Cs = rng.standard_normal((nb, 1, 2))
    Ds = rng.standard_normal((nb, 1, 2))
    W = rng.standard_normal((40, 2))
    Y = rng.standard_normal((40, 1))
    out = kernels.batch_mse(As, Bs, Cs, Ds, W, Y)
    for b in range(nb):
        X = reference_states(As[b], Bs[b], W, np.zeros(2))
        resid = X @ Cs[b].T + W @ Ds[b].T - Y
        assert out[b] == pytest.approx(float(np.mean(np.sum(resid**2, axis=1))), rel=1e-12)


@pytest.mark.skipif(_kernels is None, reason="compiled extension not built")
def test_backends_agree():
    rng = np.random.default_rng(2)
    A = 0.5 * rng.standard_normal((4, 4))
    B = rng.standard_normal((4, 3))
    U = rng.standard_normal((200, 3))
    x0 = rng.standard_normal(4)
    np.testing.assert_allclose(
        _kernels.state_recursion(A, B, U, x0),
        _kernels_py.state_recursion(A, B, U, x0),
        rtol=1e-12,
        atol=1e-14,
    )
    As = 0.4 * rng.standard_normal((5, 2, 2))
    Bs = rng.standard_normal((5, 2, 3))
    Cs = rng.standard_normal((5, 2, 2))
    Ds = rng.standard_normal((5, 2, 3))
    W = rng.standard_normal((100, 3))
    Y = rng.standard_normal((100, 2))
    np.testing.assert_allclose(
        _kernels.batch_mse(As, Bs, Cs, Ds, W, Y),
        _kernels_py.batch_mse(As, Bs, Cs, Ds, W, Y),
        rtol=1e-12,
        atol=1e-14,
    )


def test_read_only_inputs_accepted():
    A = np.array([[0.5]])
    B = np.array([[1.0]])
    U = np.ones((10, 1))
    x0 = np.zeros(1)
    for arr in (A, B, U, x0):
        arr.setflags(write=False)
    X = kernels.state_recursion(A, B, U, x0)
    assert X[-1, 0] == pytest.approx(sum(0.5**k for k in range(9)))


def test_dispatch_shape_validation():
    with pytest.raises(ValueError):
        kernels.state_recursion(np.eye(2), np.eye(2), np.ones((5, 3)), np.zeros(2))
    with pytest.raises(ValueError):
        kernels.batch_mse(
            np.zeros((2, 2, 2)),
            np.zeros((2, 2, 1)),
            np.zeros((2, 1, 2)),
            np.zeros((2, 1, 1)),
            np.ones((5, 1)),
            np.ones((4, 1)),
        )
