"""Generalization-error bounds and the constants feeding them.

Everything here is a deterministic function of an error system.  The two
headline results bound the generalization loss of a randomized predictor
drawn from a data-dependent Gibbs posterior:

* a KL bound, holding for any inverse temperature lambda below an explicit
  threshold, of the form
      gap + (KL(posterior || prior) + ln(1/delta) + psi) / lambda;
* a Renyi bound for even moment order r of the form
      gap + (4 / (delta N))^(1/r) * phi,
  whose phi term decays like N^(-1/r) and is proportional to the Renyi
  divergence of the posterior from the prior.

Both share the gap term (2 / (delta N)) E_posterior[G(f)] accounting for
the finite-past / infinite-past loss difference.  The per-predictor
constants G_e and G = G_{-1} G_0 G_1 G_2 G_3 are certified sums of
operator-norm series over the error-system matrices.

A vectorized batch engine evaluates the constants and the closed-form
loss over stacks of predictors (Monte-Carlo samples of a hypothesis
class); its tail certificates use Frobenius-norm contraction envelopes,
which upper-bound the spectral ones, so truncation stays certified.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import (
    ConstraintError,
    ConvergenceError,
    DimensionError,
    InputError,
    StabilityError,
)
from .lti import FeatureMode, Generator, Predictor, build_error_system
from .matnum import (
    Mat,
    _contraction_data,
    geometric_norm_sum,
    markov_norm_series,
    operator_norm_2,
    solve_discrete_lyapunov,
)

_SERIES_CAP = 5_000_000
_BATCH_SERIES_CAP = 100_000


@dataclass(frozen=True)
class BoundConstants:
    """All scalar constants of one predictor against one generator."""

    G_e: float
    G_m1: float
    G_0: float
    G_1: float
    G_2: float
    G_3: float
    G: float
    K_w: float
    mu_max: float


def compute_Kw(
    g: Generator, mode: FeatureMode, method: str = "exact", tol: float = 1e-12
) -> float:
    """Stationary feature-covariance constant K_w for the given feature mode.

    method="exact": sup_k ||Lambda_k||_2 over the lag covariances of the
    feature process w, with Lambda_0 = C_w P_g C_w^T + S Q_e S^T and
    Lambda_k = C_w A_g^(k-1) (A_g P_g C_w^T + K_g Q_e S^T) for k >= 1,
    where P_g is the stationary state covariance and S selects the
    innovation components entering w.

    method="lemma": the closed-form majorant
    max((c^2 + c) s^3 mu, (c^2 + 1) s^2 mu) with c = ||C_w|| ||K_g|| and
    s = sum_k ||A_g^k||; always >= the exact value.
    """
    if mode is FeatureMode.INPUT_ONLY:
        C_w = g.C_2
        S = np.hstack([np.zeros((g.n_u, g.n_y)), np.eye(g.n_u)])
    else:
        C_w = g.C_g
        S = np.eye(g.m)
    mu = g.mu_max()

    if method == "lemma":
        c = operator_norm_2(C_w) * operator_norm_2(g.K_g)
        s = geometric_norm_sum(g.A_g, power=1, tol=tol).value
        return max((c * c + c) * s**3 * mu, (c * c + 1.0) * s**2 * mu)
    if method != "exact":
        raise InputError(f"unknown K_w method {method!r}; use 'exact' or 'lemma'")

    P_g = g.stationary_state_cov()
    lam0 = C_w @ P_g @ C_w.T + S @ g.Q_e @ S.T
    best = operator_norm_2(lam0)
    M = g.A_g @ P_g @ C_w.T + g.K_g @ g.Q_e @ S.T
    _, _, R_bound = _contraction_data(g.A_g)
    mnorm = operator_norm_2(M)
    W = C_w.copy()
    for _ in range(_SERIES_CAP):
        # All remaining lags satisfy ||Lambda_j|| <= ||W|| * R_bound * ||M||.
        if operator_norm_2(W) * R_bound * mnorm <= best:
            return best
        best = max(best, operator_norm_2(W @ M))
        W = W @ g.A_g
    raise ConvergenceError("lag-covariance sup did not certify within the cap")


def compute_constants(
    g: Generator,
    f: Predictor,
    *,
    tol: float = 1e-12,
    kw_method: str = "exact",
    output_index: int | None = None,
) -> BoundConstants:
    """Certified bound constants for one generator/predictor pair.

    With output_index set, the output rows of (C_e, D_e) and of the
    predictor's (C_hat, D_hat) are restricted to that component, which is
    what the per-output bounds of a multi-output certification use.  The
    constants that do not touch the output rows are unchanged.
    """
    err = build_error_system(g, f)
    C_e, D_e = err.C_e, err.D_e
    C_hat, D_hat = f.C_hat, f.D_hat
    if output_index is not None:
        if not 0 <= output_index < C_e.shape[0]:
            raise InputError(
                f"output_index {output_index} out of range for n_y={C_e.shape[0]}"
            )
        sel = slice(output_index, output_index + 1)
        C_e, D_e = C_e[sel], D_e[sel]
        C_hat, D_hat = C_hat[sel], D_hat[sel]

    s2_ae = geometric_norm_sum(err.A_e, power=2, tol=tol).value
    s1_ahat = geometric_norm_sum(f.A_hat, power=1, tol=tol).value
    de = operator_norm_2(D_e)
    ge = de + markov_norm_series(err.A_e, C_e, err.K_e, tol=tol).value
    g_m1 = math.sqrt(2.0 * s2_ae + 4.0)
    g_0 = s1_ahat
    g_1 = math.sqrt(
        de**2 + operator_norm_2(C_e) ** 2 * operator_norm_2(err.K_e) ** 2 * s2_ae
    )
    g_2 = operator_norm_2(D_hat) + operator_norm_2(C_hat) * operator_norm_2(
        f.B_hat
    ) * s1_ahat
    k_w = compute_Kw(g, f.mode, method=kw_method, tol=tol)
    mu = g.mu_max()
    g_3 = math.sqrt(mu * k_w)
    return BoundConstants(
        G_e=ge,
        G_m1=g_m1,
        G_0=g_0,
        G_1=g_1,
        G_2=g_2,
        G_3=g_3,
        G=g_m1 * g_0 * g_1 * g_2 * g_3,
        K_w=k_w,
        mu_max=mu,
    )


def lambda_max(m: int, mu_max: float, ge_sup: float) -> float:
    """Supremum of admissible inverse temperatures: 1 / (3 (m+1) mu_max Ge_sup^2).

    The KL bound requires a strictly smaller lambda.
    """
    if m < 2:
        raise InputError(f"need m >= 2, got {m}")
    if mu_max <= 0 or ge_sup <= 0:
        raise InputError("mu_max and ge_sup must be positive")
    return 1.0 / (3.0 * (m + 1) * mu_max * ge_sup**2)


def psi_moment_term(k_mu, m: int):
    """(m+1)! (3 k)^2 / (1 - 3 (m+1) k) for k = lambda mu_max G_e(f)^2.

    Accepts a scalar or array of k values; every one must satisfy
    3 (m+1) k < 1 (lambda below its admissible threshold).
    """
    k = np.asarray(k_mu, dtype=float)
    denom = 1.0 - 3.0 * (m + 1) * k
    if np.any(denom <= 0.0):
        raise ConstraintError(
            "lambda too large: 3 (m+1) lambda mu_max G_e^2 must stay below 1"
        )
    out = math.factorial(m + 1) * (3.0 * k) ** 2 / denom
    return float(out) if np.isscalar(k_mu) else out


def psi_hat(N: int, moment_term_mean: float) -> float:
    """ln(1 + (4/N) * average moment term) entering the KL bound."""
    if moment_term_mean < 0:
        raise InputError("moment term must be nonnegative")
    return math.log1p(4.0 / N * moment_term_mean)


@dataclass(frozen=True)
class KlBoundResult:
    N: int
    delta: float
    lam: float
    gap_term: float
    divergence_term: float
    psi: float
    r_hat: float
    confidence: float

    kind = "KL"


@dataclass(frozen=True)
class RenyiBoundResult:
    N: int
    delta: float
    r: int
    gap_term: float
    divergence_term: float
    phi: float
    r_hat: float
    confidence: float

    kind = "Renyi"


def _check_common(N: int, delta: float, expected_G: float) -> None:
    if N < 1:
        raise InputError(f"N must be >= 1, got {N}")
    if not 0.0 < delta < 1.0:
        raise InputError(f"delta must lie in (0, 1), got {delta}")
    if expected_G < 0:
        raise InputError("E[G] must be nonnegative")


def kl_bound(
    N: int,
    delta: float,
    lam: float,
    m: int,
    mu_max: float,
    expected_G: float,
    kl_div: float,
    *,
    psi_term_mean: float | None = None,
    ge_sup: float | None = None,
) -> KlBoundResult:
    """KL-divergence bound on the generalization loss of the Gibbs posterior.

    The excess term is gap + (KL + ln(1/delta) + psi)/lambda with
    gap = (2/(delta N)) E_posterior[G].  The psi penalty needs the prior
    average of psi_moment_term; pass it directly as psi_term_mean, or pass
    ge_sup (a bound on G_e over the class) to use the worst-case term.
    Holds with probability at least 1 - 2 delta.
    """
    _check_common(N, delta, expected_G)
    if kl_div < -1e-6:
        raise InputError(f"KL divergence must be nonnegative, got {kl_div}")
    kl_div = max(kl_div, 0.0)
    if (psi_term_mean is None) == (ge_sup is None):
        raise InputError("pass exactly one of psi_term_mean or ge_sup")
    if ge_sup is not None:
        lam_cap = lambda_max(m, mu_max, ge_sup)
        if not 0.0 < lam < lam_cap:
            raise ConstraintError(
                f"lambda {lam:.6g} outside the admissible range (0, {lam_cap:.6g})"
            )
        psi_term_mean = psi_moment_term(lam * mu_max * ge_sup**2, m)
    elif lam <= 0.0:
        raise InputError(f"lambda must be positive, got {lam}")
    psi = psi_hat(N, psi_term_mean)
    gap = 2.0 / (delta * N) * expected_G
    r_hat = gap + (kl_div + math.log(1.0 / delta) + psi) / lam
    return KlBoundResult(
        N=N,
        delta=delta,
        lam=lam,
        gap_term=gap,
        divergence_term=kl_div,
        psi=psi,
        r_hat=r_hat,
        confidence=1.0 - 2.0 * delta,
    )


def renyi_bound(
    N: int,
    delta: float,
    r: int,
    m: int,
    mu_max: float,
    expected_G: float,
    d_r: float,
    expected_ge_2r: float,
) -> RenyiBoundResult:
    """Renyi-divergence bound on the generalization loss for even order r.

    phi = 3 mu_max ((m+r-1)! (r-1))^(1/r) D_r (E_prior[G_e^(2r)])^(1/r)
    and the excess term is gap + (4/(delta N))^(1/r) phi, again with
    gap = (2/(delta N)) E_posterior[G].  Holds with probability at least
    1 - 2 delta.  D_r is the order-r Renyi divergence of the posterior
    from the prior (>= 1 after exponentiation-free normalization).
    """
    _check_common(N, delta, expected_G)
    if not (isinstance(r, (int, np.integer)) and r >= 2 and r % 2 == 0):
        raise InputError(f"r must be an even integer >= 2, got {r}")
    if d_r <= 0 or expected_ge_2r < 0:
        raise InputError("d_r must be positive and E[G_e^(2r)] nonnegative")
    factor = math.exp((math.lgamma(m + r) + math.log(r - 1.0)) / r)
    phi = 3.0 * mu_max * factor * d_r * expected_ge_2r ** (1.0 / r)
    gap = 2.0 / (delta * N) * expected_G
    r_hat = gap + (4.0 / (delta * N)) ** (1.0 / r) * phi
    return RenyiBoundResult(
        N=N,
        delta=delta,
        r=int(r),
        gap_term=gap,
        divergence_term=d_r,
        phi=phi,
        r_hat=r_hat,
        confidence=1.0 - 2.0 * delta,
    )


@dataclass(frozen=True)
class MultiOutputBound:
    """Sum of per-output certified losses with union-bound confidence."""

    components: tuple
    total_bound: float
    confidence: float


def multi_output_bound(empiricals, r_hats, delta: float) -> MultiOutputBound:
    """Combine per-output empirical losses and bound excesses.

    Each output component p contributes empirical_p + r_hat_p; the total
    holds simultaneously with probability at least 1 - 2 n_y delta.
    """
    empiricals = [float(v) for v in empiricals]
    r_hats = [float(v) for v in r_hats]
    if len(empiricals) != len(r_hats) or not empiricals:
        raise InputError("need matching, nonempty per-output sequences")
    comps = tuple(e + r for e, r in zip(empiricals, r_hats))
    return MultiOutputBound(
        components=comps,
        total_bound=float(sum(comps)),
        confidence=1.0 - 2.0 * len(comps) * delta,
    )


def bound_results_to_csv(results, path) -> None:
    """Write KL/Renyi results as CSV rows sharing one schema.

    Columns: N,delta,lambda_or_r,gap_term,divergence_term,psi_or_phi,
    r_hat,confidence,kind.
    """
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "N",
                "delta",
                "lambda_or_r",
                "gap_term",
                "divergence_term",
                "psi_or_phi",
                "r_hat",
                "confidence",
                "kind",
            ]
        )
        for res in results:
            if res.kind == "KL":
                lam_or_r, pen = res.lam, res.psi
            else:
                lam_or_r, pen = res.r, res.phi
            writer.writerow(
                [
                    res.N,
                    repr(res.delta),
                    repr(lam_or_r) if res.kind == "KL" else lam_or_r,
                    repr(res.gap_term),
                    repr(res.divergence_term),
                    repr(pen),
                    repr(res.r_hat),
                    repr(res.confidence),
                    res.kind,
                ]
            )


# Moment diagnostics.  These are standalone certified inequalities about the
# losses; the constants match their own derivations and deliberately differ
# from the related terms folded into psi_hat and phi (see the README note on
# constant conventions).


def loss_gap_bound(N: int, G: float) -> float:
    """Upper bound 2 G / N on E |infinite-past loss - empirical loss|."""
    if N < 1 or G < 0:
        raise InputError("need N >= 1 and G >= 0")
    return 2.0 * G / N


def sigma_moment(r: int, m: int, mu_max: float) -> float:
    """sigma(r) = mu_max^r 3^r (m+r-1)!, the moment scale of the innovations."""
    if r < 1 or m < 2 or mu_max <= 0:
        raise InputError("need r >= 1, m >= 2, mu_max > 0")
    return math.exp(r * math.log(3.0 * mu_max) + math.lgamma(m + r))


def central_moment_bound(N: int, r: int, m: int, mu_max: float, ge: float) -> float:
    """Bound (1/N) sigma(r) 4 (r-1) G_e^(2r) on E[(L - infinite-past loss)^r]."""
    if not (isinstance(r, (int, np.integer)) and r >= 2 and r % 2 == 0):
        raise InputError(f"r must be an even integer >= 2, got {r}")
    return sigma_moment(r, m, mu_max) * 4.0 * (r - 1.0) * ge ** (2 * r) / N


def mgf_upper_bound(N: int, lam: float, m: int, mu_max: float, ge: float) -> float:
    """Bound on E exp(lambda N (L - infinite-past loss)) for admissible lambda."""
    if lam <= 0:
        raise InputError(f"lambda must be positive, got {lam}")
    k = lam * mu_max * ge**2
    denom = 1.0 - 3.0 * (m + 1) * k
    if denom <= 0:
        raise ConstraintError(
            "lambda too large: 3 (m+1) lambda mu_max G_e^2 must stay below 1"
        )
    return 1.0 + 2.0 / N * math.factorial(m + 1) * (3.0 * k) ** 2 / denom


# Batch engine: the same constants over stacks of predictors.


def _stack3(a, name: str) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 3:
        raise DimensionError(f"{name} must be a (batch, rows, cols) stack")
    if not np.all(np.isfinite(a)):
        raise InputError(f"{name} contains non-finite entries")
    return a


def _svdmax(stack: np.ndarray) -> np.ndarray:
    """Largest singular value per stack element, with row/column fast paths."""
    _, r, c = stack.shape
    if r == 1 or c == 1:
        return np.sqrt(np.einsum("bij,bij->b", stack, stack))
    return np.linalg.svd(stack, compute_uv=False)[:, 0]


def _fro(stack: np.ndarray) -> np.ndarray:
    return np.sqrt(np.einsum("bij,bij->b", stack, stack))


def _batch_contraction(A: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-element (q, gamma, R) with Frobenius norms: ||A^q||_F = gamma <= 1/2,
    and ||A^b||_F <= R for every b < q."""
    B = A.shape[0]
    q = np.zeros(B, dtype=np.int64)
    gamma = np.zeros(B)
    R = np.ones(B)
    running = np.ones(B)
    done = np.zeros(B, dtype=bool)
    S = A.copy()
    for level in range(41):
        f = _fro(S)
        if not np.all(np.isfinite(f[~done])):
            raise StabilityError("batch contains an unstable system")
        newly = (~done) & (f <= 0.5)
        q[newly] = 2**level
        gamma[newly] = f[newly]
        R[newly] = running[newly]
        done |= newly
        if np.all(done):
            return q, gamma, R
        running = running * np.maximum(1.0, f)
        S = S @ S
    raise StabilityError(
        f"{int(np.sum(~done))} batch elements have spectral radius at (or too "
        "close to) 1"
    )


def _batch_tail_const(
    q: np.ndarray, gamma: np.ndarray, R: np.ndarray, power: int
) -> np.ndarray:
    """sum_{i>=1} ||A^i||^power envelope per element; inf marks nilpotent
    elements whose tail must instead be cut off at i >= q."""
    out = np.full(q.shape, np.inf)
    pos = gamma > 0.0
    c = gamma[pos] ** (power / q[pos])
    out[pos] = (R[pos] / gamma[pos]) ** power * c / (1.0 - c)
    return out


def _batch_error_system(
    g: Generator,
    As: np.ndarray,
    Bs: np.ndarray,
    Cs: np.ndarray,
    Ds: np.ndarray,
    mode: FeatureMode,
):
    n, m, n_y = g.n, g.m, g.n_y
    As = _stack3(As, "As")
    Bs = _stack3(Bs, "Bs")
    Cs = _stack3(Cs, "Cs")
    Ds = _stack3(Ds, "Ds")
    B, nh, _ = As.shape
    n_w = g.n_u if mode is FeatureMode.INPUT_ONLY else m
    if Bs.shape != (B, nh, n_w) or Cs.shape[2] != nh or Ds.shape[2] != n_w:
        raise DimensionError("batch predictor stacks have inconsistent shapes")
    if mode is FeatureMode.INPUT_ONLY:
        C_w = g.C_2
        S = np.hstack([np.zeros((g.n_u, n_y)), np.eye(g.n_u)])
    else:
        C_w = g.C_g
        S = np.eye(m)

    nz = n + nh
    A_e = np.zeros((B, nz, nz))
    A_e[:, :n, :n] = g.A_g
    A_e[:, n:, :n] = Bs @ C_w
    A_e[:, n:, n:] = As
    K_e = np.empty((B, nz, m))
    K_e[:, :n, :] = g.K_g
    K_e[:, n:, :] = Bs @ S
    C_e = np.concatenate([g.C_1 - Ds @ C_w, -Cs], axis=2)
    D_e = (np.hstack([np.eye(n_y), np.zeros((n_y, g.n_u))]) - Ds @ S)
    return A_e, K_e, C_e, D_e


def _batch_markov_sum(
    A: np.ndarray, left: np.ndarray, right: np.ndarray, tol: float
) -> np.ndarray:
    """Per-element sum_k ||L A^k R||_2 with certified Frobenius-envelope tails."""
    q, gamma, R = _batch_contraction(A)
    T1 = _batch_tail_const(q, gamma, R, power=1)
    rfro = _fro(right)
    W = left.copy()
    total = np.zeros(A.shape[0])
    for k in range(_BATCH_SERIES_CAP):
        total += _svdmax(W @ right)
        with np.errstate(invalid="ignore"):
            # 0 * inf for nilpotent blocks; resolved by the mask below.
            tail = _fro(W) * rfro * T1
        nil = ~np.isfinite(T1)
        tail[nil & (k + 1 >= q)] = 0.0
        if np.all(tail <= tol * (1.0 + total)):
            return total
        W = W @ A
    raise ConvergenceError("batch norm series did not converge within the cap")


def _batch_power_sum(A: np.ndarray, power: int, tol: float) -> np.ndarray:
    """Per-element sum_k ||A^k||_2^power (k >= 0) with certified tails."""
    q, gamma, R = _batch_contraction(A)
    Tc = _batch_tail_const(q, gamma, R, power=power)
    total = np.ones(A.shape[0])  # k = 0 term
    P = A.copy()
    for k in range(1, _BATCH_SERIES_CAP):
        total += _svdmax(P) ** power
        with np.errstate(invalid="ignore"):
            # 0 * inf for nilpotent blocks; resolved by the mask below.
            tail = _fro(P) ** power * Tc
        nil = ~np.isfinite(Tc)
        tail[nil & (k + 1 >= q)] = 0.0
        if np.all(tail <= tol * (1.0 + total)):
            return total
        P = P @ A
    raise ConvergenceError("batch norm series did not converge within the cap")


@dataclass(frozen=True)
class BatchConstants:
    """Array-valued twin of BoundConstants over a stack of predictors."""

    G_e: np.ndarray
    G_m1: np.ndarray
    G_0: np.ndarray
    G_1: np.ndarray
    G_2: np.ndarray
    G_3: float
    G: np.ndarray
    K_w: float
    mu_max: float


def batch_constants(
    g: Generator,
    As: np.ndarray,
    Bs: np.ndarray,
    Cs: np.ndarray,
    Ds: np.ndarray,
    mode: FeatureMode,
    *,
    tol: float = 1e-9,
    kw_method: str = "exact",
    output_index: int | None = None,
    ge_only: bool = False,
) -> BatchConstants:
    """Bound constants for a stack of predictors sharing one feature mode.

    ge_only skips everything except G_e (the array the class-level
    quantities sup G_e and E[G_e^(2r)] need), which avoids the batched
    full-matrix norm series.  Other fields are then filled with NaN/0.
    """
    A_e, K_e, C_e, D_e = _batch_error_system(g, As, Bs, Cs, Ds, mode)
    C_hat, D_hat = _stack3(Cs, "Cs"), _stack3(Ds, "Ds")
    if output_index is not None:
        n_y = C_e.shape[1]
        if not 0 <= output_index < n_y:
            raise InputError(f"output_index {output_index} out of range")
        sel = slice(output_index, output_index + 1)
        C_e, D_e = C_e[:, sel, :], D_e[:, sel, :]
        C_hat, D_hat = C_hat[:, sel, :], D_hat[:, sel, :]

    de = _svdmax(D_e)
    ge = de + _batch_markov_sum(A_e, C_e, K_e, tol)
    k_w = compute_Kw(g, mode, method=kw_method)
    mu = g.mu_max()
    g_3 = math.sqrt(mu * k_w)
    B = A_e.shape[0]
    if ge_only:
        nanarr = np.full(B, np.nan)
        return BatchConstants(
            G_e=ge,
            G_m1=nanarr,
            G_0=nanarr,
            G_1=nanarr,
            G_2=nanarr,
            G_3=g_3,
            G=nanarr,
            K_w=k_w,
            mu_max=mu,
        )

    s2 = _batch_power_sum(A_e, power=2, tol=tol)
    s1 = _batch_power_sum(np.asarray(As, dtype=float), power=1, tol=tol)
    g_m1 = np.sqrt(2.0 * s2 + 4.0)
    g_1 = np.sqrt(de**2 + _svdmax(C_e) ** 2 * _svdmax(K_e) ** 2 * s2)
    g_2 = _svdmax(D_hat) + _svdmax(C_hat) * _svdmax(_stack3(Bs, "Bs")) * s1
    return BatchConstants(
        G_e=ge,
        G_m1=g_m1,
        G_0=s1,
        G_1=g_1,
        G_2=g_2,
        G_3=g_3,
        G=g_m1 * s1 * g_1 * g_2 * g_3,
        K_w=k_w,
        mu_max=mu,
    )


def batch_generalization_loss(
    g: Generator,
    As: np.ndarray,
    Bs: np.ndarray,
    Cs: np.ndarray,
    Ds: np.ndarray,
    mode: FeatureMode,
    *,
    tol: float = 1e-12,
    output_index: int | None = None,
) -> np.ndarray:
    """Closed-form generalization losses for a stack of predictors.

    Solves the stacked Lyapunov equations by doubling and returns the
    (batch,) array trace(C_e P C_e^T + D_e Q_e D_e^T).
    """
    A_e, K_e, C_e, D_e = _batch_error_system(g, As, Bs, Cs, Ds, mode)
    if output_index is not None:
        sel = slice(output_index, output_index + 1)
        C_e, D_e = C_e[:, sel, :], D_e[:, sel, :]
    Q = K_e @ g.Q_e @ K_e.transpose(0, 2, 1)
    qscale = 1.0 + _fro(Q)
    amp = 1.0 + _fro(A_e) ** 2
    S = A_e.copy()
    P = Q.copy()
    for _ in range(200):
        err = _fro(S) ** 2 * (1.0 + _fro(P)) * amp
        if np.all(err <= 0.1 * tol * qscale):
            break
        P = P + S @ P @ S.transpose(0, 2, 1)
        P = 0.5 * (P + P.transpose(0, 2, 1))
        S = S @ S
    else:
        raise ConvergenceError("batched Lyapunov doubling did not converge")
    CP = C_e @ P @ C_e.transpose(0, 2, 1)
    DQ = D_e @ g.Q_e @ D_e.transpose(0, 2, 1)
    return np.einsum("bii->b", CP) + np.einsum("bii->b", DQ)
