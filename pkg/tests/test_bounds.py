import math

import numpy as np
import pytest
import scipy.linalg

from ltibound import (
    FeatureMode,
    Predictor,
    batch_constants,
    batch_generalization_loss,
    bound_results_to_csv,
    build_error_system,
    central_moment_bound,
    compute_Kw,
    compute_constants,
    generalization_loss,
    kl_bound,
    lambda_max,
    loss_gap_bound,
    mgf_upper_bound,
    multi_output_bound,
    psi_hat,
    psi_moment_term,
    renyi_bound,
    sigma_moment,
)
from ltibound.errors import ConstraintError, InputError

from conftest import random_generator, random_predictor

norm2 = lambda M: np.linalg.norm(M, 2)


def brute_constants(g, f, terms=3000):
    """Straight-line recomputation of every constant from its series."""
    err = build_error_system(g, f)
    s1_ae_sq = 0.0
    ge_sum = 0.0
    Ak = np.eye(err.A_e.shape[0])
    for _ in range(terms):
        s1_ae_sq += norm2(Ak) ** 2
        ge_sum += norm2(err.C_e @ Ak @ err.K_e)
        Ak = Ak @ err.A_e
    s1_ahat = 0.0
    Ak = np.eye(f.A_hat.shape[0])
    for _ in range(terms):
        s1_ahat += norm2(Ak)
        Ak = Ak @ f.A_hat
    de = norm2(err.D_e)
    ge = de + ge_sum
    g_m1 = math.sqrt(2.0 * s1_ae_sq + 4.0)
    g_1 = math.sqrt(de**2 + norm2(err.C_e) ** 2 * norm2(err.K_e) ** 2 * s1_ae_sq)
    g_2 = norm2(f.D_hat) + norm2(f.C_hat) * norm2(f.B_hat) * s1_ahat
    return ge, g_m1, s1_ahat, g_1, g_2


def brute_kw(g, mode, lags=2000):
    """Lag-covariance sup recomputed with scipy's Lyapunov solver."""
    if mode is FeatureMode.INPUT_ONLY:
        C_w = g.C_2
        S = np.hstack([np.zeros((g.n_u, g.n_y)), np.eye(g.n_u)])
    else:
        C_w = g.C_g
        S = np.eye(g.m)
    P = scipy.linalg.solve_discrete_lyapunov(g.A_g, g.K_g @ g.Q_e @ g.K_g.T)
    best = norm2(C_w @ P @ C_w.T + S @ g.Q_e @ S.T)
    M = g.A_g @ P @ C_w.T + g.K_g @ g.Q_e @ S.T
    W = C_w.copy()
    for _ in range(lags):
        best = max(best, norm2(W @ M))
        W = W @ g.A_g
    return best


@pytest.mark.parametrize("mode", list(FeatureMode))
def test_constants_match_brute_force(gen, case_predictors, mode):
    f = case_predictors[0] if mode is FeatureMode.INPUT_ONLY else case_predictors[1]
    bc = compute_constants(gen, f)
    ge, g_m1, g_0, g_1, g_2 = brute_constants(gen, f)
    assert bc.G_e == pytest.approx(ge, rel=1e-9)
    assert bc.G_m1 == pytest.approx(g_m1, rel=1e-9)
    assert bc.G_0 == pytest.approx(g_0, rel=1e-9)
    assert bc.G_1 == pytest.approx(g_1, rel=1e-9)
    assert bc.G_2 == pytest.approx(g_2, rel=1e-9)
    assert bc.G_3 == pytest.approx(math.sqrt(bc.mu_max * bc.K_w), rel=1e-12)
    assert bc.G == pytest.approx(g_m1 * g_0 * g_1 * g_2 * bc.G_3, rel=1e-9)


def test_constants_match_brute_force_random_pairs():
    rng = np.random.default_rng(31)
    for i in range(4):
        g = random_generator(rng, n=2, n_y=1, n_u=1)
        mode = list(FeatureMode)[i % 2]
        f = random_predictor(rng, g, mode)
        bc = compute_constants(g, f)
        ge, g_m1, g_0, g_1, g_2 = brute_constants(g, f)
        for got, want in [(bc.G_e, ge), (bc.G_m1, g_m1), (bc.G_0, g_0),
                          (bc.G_1, g_1), (bc.G_2, g_2)]:
            assert got == pytest.approx(want, rel=1e-8)


def test_g_minus_one_floor():
    # Sum over powers includes the identity, so 2*sum + 4 >= 6 always.
    rng = np.random.default_rng(5)
    for _ in range(10):
        g = random_generator(rng)
        f = random_predictor(rng, g, FeatureMode.INPUT_ONLY)
        assert compute_constants(g, f).G_m1 >= math.sqrt(6.0) - 1e-12


def test_loss_dominated_by_g1():
    # trace bound: L(f) <= n_y * mu_max * G_1^2.
    rng = np.random.default_rng(6)
    for _ in range(10):
        g = random_generator(rng)
        f = random_predictor(rng, g, FeatureMode.INPUT_OUTPUT)
        bc = compute_constants(g, f)
        assert generalization_loss(g, f) <= g.n_y * bc.mu_max * bc.G_1**2 + 1e-9


def test_kw_exact_values(gen):
    assert compute_Kw(gen, FeatureMode.INPUT_ONLY) == pytest.approx(4.18, abs=0.02)
    assert compute_Kw(gen, FeatureMode.INPUT_OUTPUT) == pytest.approx(4.62, abs=0.02)


@pytest.mark.parametrize("mode", list(FeatureMode))
def test_kw_against_scipy_oracle(gen, mode):
    assert compute_Kw(gen, mode) == pytest.approx(brute_kw(gen, mode), rel=1e-10)


def test_kw_lemma_majorizes_exact():
    rng = np.random.default_rng(9)
    for _ in range(6):
        g = random_generator(rng)
        for mode in FeatureMode:
            exact = compute_Kw(g, mode, method="exact")
            lemma = compute_Kw(g, mode, method="lemma")
            assert lemma >= exact - 1e-10
    with pytest.raises(InputError):
        compute_Kw(g, FeatureMode.INPUT_ONLY, method="bogus")


def test_lambda_max_formula():
    assert lambda_max(2, 1.0, 1.0) == pytest.approx(1.0 / 9.0, rel=1e-15)
    assert lambda_max(2, 4.0, 2.0) == pytest.approx(1.0 / (3 * 3 * 4.0 * 4.0))
    for bad in [(1, 1.0, 1.0), (2, 0.0, 1.0), (2, 1.0, 0.0)]:
        with pytest.raises(InputError):
            lambda_max(*bad)


def test_psi_moment_term():
    m, k = 2, 0.01
    want = math.factorial(m + 1) * (3 * k) ** 2 / (1 - 3 * (m + 1) * k)
    assert psi_moment_term(k, m) == pytest.approx(want, rel=1e-15)
    arr = psi_moment_term(np.array([0.005, 0.01]), m)
    assert arr[1] == pytest.approx(want, rel=1e-15)
    with pytest.raises(ConstraintError):
        psi_moment_term(1.0 / 9.0, m)  # at the pole for m = 2
    assert psi_hat(100, 0.7) == pytest.approx(math.log1p(0.04 * 0.7), rel=1e-15)


def test_kl_bound_identity():
    N, delta, lam, m, mu = 200, 0.1, 0.005, 2, 4.177460286966075
    res = kl_bound(N, delta, lam, m, mu, expected_G=88.5, kl_div=0.3,
                   psi_term_mean=0.7)
    want = 2.0 / (delta * N) * 88.5 + (
        0.3 + math.log(1 / delta) + math.log1p(4.0 / N * 0.7)
    ) / lam
    assert res.r_hat == pytest.approx(want, rel=1e-12)
    assert res.gap_term == pytest.approx(2.0 / (delta * N) * 88.5, rel=1e-15)
    assert res.divergence_term == 0.3
    assert res.confidence == pytest.approx(0.8)
    assert res.kind == "KL"


def test_kl_bound_ge_sup_path_matches_manual_psi():
    N, delta, lam, m, mu, ge = 500, 0.1, 0.004, 2, 4.177460286966075, 2.0
    via_sup = kl_bound(N, delta, lam, m, mu, 50.0, 0.1, ge_sup=ge)
    manual = psi_moment_term(lam * mu * ge**2, m)
    via_mean = kl_bound(N, delta, lam, m, mu, 50.0, 0.1, psi_term_mean=manual)
    assert via_sup.r_hat == pytest.approx(via_mean.r_hat, rel=1e-15)


def test_kl_bound_validation():
    args = dict(N=100, delta=0.1, lam=0.005, m=2, mu_max=1.0, expected_G=1.0)
    with pytest.raises(InputError):
        kl_bound(**args, kl_div=0.0)  # neither psi source
    with pytest.raises(InputError):
        kl_bound(**args, kl_div=0.0, psi_term_mean=0.1, ge_sup=1.0)  # both
    with pytest.raises(InputError):
        kl_bound(**args, kl_div=-1.0, psi_term_mean=0.1)
    # Tiny negative KL from quadrature noise is clamped, not rejected.
    ok = kl_bound(**args, kl_div=-1e-9, psi_term_mean=0.1)
    assert ok.divergence_term == 0.0
    with pytest.raises(ConstraintError):
        # lambda above the cap 1/(3*3*1*4) for ge_sup = 2.
        kl_bound(100, 0.1, 0.5, 2, 1.0, 1.0, 0.0, ge_sup=2.0)
    with pytest.raises(InputError):
        kl_bound(0, 0.1, 0.005, 2, 1.0, 1.0, 0.0, psi_term_mean=0.1)
    with pytest.raises(InputError):
        kl_bound(100, 1.0, 0.005, 2, 1.0, 1.0, 0.0, psi_term_mean=0.1)


def test_kl_bound_plateau_at_large_N():
    # gap and psi vanish as N grows, leaving (KL + ln(1/delta)) / lambda.
    res = kl_bound(10**12, 0.1, 0.005, 2, 4.177460286966075, 88.5, 0.0,
                   psi_term_mean=0.7)
    assert res.r_hat == pytest.approx(math.log(10.0) / 0.005, rel=1e-6)


def test_renyi_bound_identity():
    N, delta, r, m, mu = 400, 0.1, 2, 2, 4.177460286966075
    res = renyi_bound(N, delta, r, m, mu, expected_G=60.0, d_r=1.4,
                      expected_ge_2r=25.0)
    factor = math.exp((math.lgamma(m + r) + math.log(r - 1.0)) / r)
    phi = 3.0 * mu * factor * 1.4 * 25.0 ** (1.0 / r)
    want = 2.0 / (delta * N) * 60.0 + (4.0 / (delta * N)) ** (1.0 / r) * phi
    assert res.phi == pytest.approx(phi, rel=1e-14)
    assert res.r_hat == pytest.approx(want, rel=1e-14)
    assert res.kind == "Renyi"


def test_renyi_bound_unit_inputs_give_three_root_six():
    # m=2, r=2, mu=1, D_r=1, E[Ge^4]=1, E[G]=0, delta=1 is out of range,
    # so take the exact algebraic value through phi at delta just below 1:
    # phi = 3 * sqrt((m+r-1)! (r-1)) = 3 sqrt(6) and with N=4, delta->1 the
    # sampling factor (4/(delta N))^(1/2) -> 1.
    res = renyi_bound(4, 0.999999999, 2, 2, 1.0, 0.0, 1.0, 1.0)
    assert res.phi == pytest.approx(3.0 * math.sqrt(6.0), rel=1e-12)
    assert res.r_hat == pytest.approx(3.0 * math.sqrt(6.0), rel=1e-8)


def test_renyi_phi_term_halves_when_N_quadruples():
    kwargs = dict(delta=0.1, r=2, m=2, mu_max=4.18, expected_G=60.0, d_r=1.3,
                  expected_ge_2r=20.0)
    a = renyi_bound(N=100, **kwargs)
    b = renyi_bound(N=400, **kwargs)
    assert (b.r_hat - b.gap_term) == pytest.approx(
        0.5 * (a.r_hat - a.gap_term), rel=1e-12
    )


def test_renyi_bound_validation():
    for bad_r in [1, 3, 0]:
        with pytest.raises(InputError):
            renyi_bound(100, 0.1, bad_r, 2, 1.0, 1.0, 1.0, 1.0)
    with pytest.raises(InputError):
        renyi_bound(100, 0.1, 2, 2, 1.0, 1.0, 0.0, 1.0)  # d_r <= 0
    with pytest.raises(InputError):
        renyi_bound(100, 0.1, 2, 2, 1.0, -1.0, 1.0, 1.0)  # E[G] < 0


def test_multi_output_bound():
    mob = multi_output_bound([0.5, 0.7], [0.2, 0.3], 0.1)
    assert mob.components == (0.7, 1.0)
    assert mob.total_bound == pytest.approx(1.7)
    assert mob.confidence == pytest.approx(1.0 - 2 * 2 * 0.1)
    with pytest.raises(InputError):
        multi_output_bound([0.5], [0.2, 0.3], 0.1)
    with pytest.raises(InputError):
        multi_output_bound([], [], 0.1)


def test_moment_diagnostics():
    assert sigma_moment(2, 2, 1.0) == pytest.approx(54.0, rel=1e-12)
    assert loss_gap_bound(100, 7.0) == pytest.approx(0.14)
    want = 54.0 * 4.0 * 1.0 * 1.5 ** 4 / 50
    assert central_moment_bound(50, 2, 2, 1.0, 1.5) == pytest.approx(want, rel=1e-12)
    k = 0.001 * 1.0 * 4.0
    want = 1.0 + 2.0 / 50 * 6 * (3 * k) ** 2 / (1 - 9 * k)
    assert mgf_upper_bound(50, 0.001, 2, 1.0, 2.0) == pytest.approx(want, rel=1e-12)
    with pytest.raises(ConstraintError):
        mgf_upper_bound(50, 1.0, 2, 1.0, 2.0)
    with pytest.raises(InputError):
        central_moment_bound(50, 3, 2, 1.0, 1.0)


def test_bound_results_csv(tmp_path, gen):
    kl = kl_bound(100, 0.1, 0.005, 2, 1.0, 1.0, 0.0, psi_term_mean=0.1)
    ry = renyi_bound(100, 0.1, 2, 2, 1.0, 1.0, 1.0, 1.0)
    path = tmp_path / "bounds.csv"
    bound_results_to_csv([kl, ry], path)
    lines = path.read_text().strip().splitlines()
    assert lines[0] == (
        "N,delta,lambda_or_r,gap_term,divergence_term,psi_or_phi,"
        "r_hat,confidence,kind"
    )
    assert len(lines) == 3
    assert lines[1].endswith("KL") and lines[2].endswith("Renyi")
    assert float(lines[1].split(",")[6]) == pytest.approx(kl.r_hat, rel=1e-15)


def _class_stack(mode, thetas):
    if mode is FeatureMode.INPUT_ONLY:
        A = np.array([[0.0, 0.43], [0.0, 0.04]])
        B = np.array([[-0.72], [-0.09]])
        C = np.array([[1.0, 0.92]])
        D = np.array([[0.07]])
    else:
        A = np.array([[0.0, 0.12], [0.0, 0.04]])
        B = np.array([[0.33, -0.73], [0.0, -0.09]])
        C = np.array([[1.0, 0.92]])
        D = np.array([[0.0, 0.07]])
    k = len(thetas)
    As = np.tile(A, (k, 1, 1))
    As[:, 0, 0] = thetas
    return As, np.tile(B, (k, 1, 1)), np.tile(C, (k, 1, 1)), np.tile(D, (k, 1, 1))


@pytest.mark.parametrize("mode", list(FeatureMode))
def test_batch_constants_match_scalar(gen, mode):
    thetas = np.linspace(-0.45, 0.45, 7)
    As, Bs, Cs, Ds = _class_stack(mode, thetas)
    batch = batch_constants(gen, As, Bs, Cs, Ds, mode)
    for i in range(len(thetas)):
        f = Predictor(As[i], Bs[i], Cs[i], Ds[i], mode)
        bc = compute_constants(gen, f)
        assert batch.G_e[i] == pytest.approx(bc.G_e, rel=1e-6)
        assert batch.G_m1[i] == pytest.approx(bc.G_m1, rel=1e-6)
        assert batch.G_0[i] == pytest.approx(bc.G_0, rel=1e-6)
        assert batch.G_1[i] == pytest.approx(bc.G_1, rel=1e-6)
        assert batch.G_2[i] == pytest.approx(bc.G_2, rel=1e-6)
        assert batch.G[i] == pytest.approx(bc.G, rel=1e-6)
    ge_only = batch_constants(gen, As, Bs, Cs, Ds, mode, ge_only=True)
    np.testing.assert_allclose(ge_only.G_e, batch.G_e, rtol=1e-12)
    assert np.all(np.isnan(ge_only.G))


@pytest.mark.parametrize("mode", list(FeatureMode))
def test_batch_generalization_loss_matches_scalar(gen, mode):
    thetas = np.linspace(-0.4, 0.4, 5)
    As, Bs, Cs, Ds = _class_stack(mode, thetas)
    batch = batch_generalization_loss(gen, As, Bs, Cs, Ds, mode)
    for i in range(len(thetas)):
        f = Predictor(As[i], Bs[i], Cs[i], Ds[i], mode)
        assert batch[i] == pytest.approx(generalization_loss(gen, f), rel=1e-9)
