import numpy as np
import pytest
from scipy.linalg import block_diag

from ltibound import FeatureMode, Generator, Predictor, derive_case_predictors


def appendix_system() -> Generator:
    """The two-state benchmark generator used throughout the tests."""
    return Generator(
        A_g=[[0.16, -0.3], [0.0, -0.05]],
        K_g=[[0.33, -0.75], [0.0, -0.09]],
        C_g=[[1.0, 1.0], [0.0, 1.0]],
        Q_e=[[0.9, 0.3], [0.3, 4.15]],
        n_y=1,
        n_u=1,
    )


def random_generator(rng, n=2, n_y=1, n_u=1, radius=0.8) -> Generator:
    """Random innovation-form generator with both Schur conditions enforced."""
    m = n_y + n_u
    A = rng.standard_normal((n, n))
    A *= radius / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-9)
    C = rng.standard_normal((m, n))
    R = rng.standard_normal((m, m))
    Q = R @ R.T + 0.1 * np.eye(m)
    K = rng.standard_normal((n, m))
    # K -> 0 recovers rho(A) < 1, so halving always terminates.
    for _ in range(60):
        if np.max(np.abs(np.linalg.eigvals(A - K @ C))) < 0.95:
            break
        K = 0.5 * K
    return Generator(A_g=A, K_g=K, C_g=C, Q_e=Q, n_y=n_y, n_u=n_u)


def random_predictor(rng, g: Generator, mode: FeatureMode, n_state=2, scale=0.5) -> Predictor:
    n_w = g.n_u if mode is FeatureMode.INPUT_ONLY else g.m
    A = rng.standard_normal((n_state, n_state))
    A *= 0.7 / max(np.max(np.abs(np.linalg.eigvals(A))), 1e-9)
    B = scale * rng.standard_normal((n_state, n_w))
    C = scale * rng.standard_normal((g.n_y, n_state))
    D = scale * rng.standard_normal((g.n_y, n_w))
    if mode is FeatureMode.INPUT_OUTPUT:
        D[:, : g.n_y] = 0.0
    return Predictor(A_hat=A, B_hat=B, C_hat=C, D_hat=D, mode=mode)


def two_output_system():
    """Two decoupled copies of the benchmark system merged into one generator.

    Channels are reordered from copy-major [y_a, u_a, y_b, u_b] to
    [y_a, y_b, u_a, u_b] so the result is a valid n_y=2, n_u=2 system.
    Returns the merged generator together with the matching decoupled
    input-output predictor built from two copies of the exact case-2 one.
    """
    g = appendix_system()
    _, f2 = derive_case_predictors(g)
    perm = [0, 2, 1, 3]
    A2 = block_diag(g.A_g, g.A_g)
    K2 = block_diag(g.K_g, g.K_g)[:, perm]
    C2 = block_diag(g.C_g, g.C_g)[perm, :]
    Q2 = block_diag(g.Q_e, g.Q_e)[perm][:, perm]
    g2 = Generator(A_g=A2, K_g=K2, C_g=C2, Q_e=Q2, n_y=2, n_u=2)
    f2c = Predictor(
        A_hat=block_diag(f2.A_hat, f2.A_hat),
        B_hat=block_diag(f2.B_hat, f2.B_hat)[:, perm],
        C_hat=block_diag(f2.C_hat, f2.C_hat),
        D_hat=block_diag(f2.D_hat, f2.D_hat)[:, perm],
        mode=FeatureMode.INPUT_OUTPUT,
    )
    return g2, f2c


@pytest.fixture(scope="session")
def gen() -> Generator:
    return appendix_system()


@pytest.fixture(scope="session")
def case_predictors(gen):
    return derive_case_predictors(gen)


@pytest.fixture(scope="session")
def two_output_pair():
    return two_output_system()
