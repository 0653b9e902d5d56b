"""Dense real-matrix numerics for the certification toolkit.

Norms, spectral radii, certified-tail geometric norm series, discrete
Lyapunov solves and PSD factorization.  Everything here is a pure function
of its arguments; matrices are plain float64 numpy arrays ("Mat").

The series routines return a :class:`SeriesResult` carrying the partial sum
together with a certified upper bound on the discarded tail, so constants
assembled from them inherit an explicit truncation-error budget instead of
a silent cutoff.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ConvergenceError,
    DimensionError,
    InputError,
    NumericError,
    StabilityError,
)

Mat = np.ndarray

# Levels of repeated squaring explored when hunting for a contracting matrix
# power: 2**20 > 1e6, the documented iteration cap.
_MAX_SQUARINGS = 20
# Cap on terms accumulated by a certified series before giving up.
_MAX_SERIES_TERMS = 5_000_000


@dataclass(frozen=True)
class SeriesResult:
    """A truncated nonnegative series with a certified tail bound.

    value ~= full sum - tail, with tail <= truncation_bound.
    """

    value: float
    terms_used: int
    truncation_bound: float


def as_matrix(a, name: str = "matrix") -> Mat:
    """Coerce to a finite 2-d float64 array, raising InputError otherwise."""
    M = np.asarray(a, dtype=float)
    if M.ndim == 1:
        M = M.reshape(1, -1)
    if M.ndim != 2:
        raise DimensionError(f"{name} must be 2-dimensional, got ndim={M.ndim}")
    if M.size == 0:
        raise DimensionError(f"{name} must be nonempty")
    if not np.all(np.isfinite(M)):
        raise InputError(f"{name} contains non-finite entries")
    return M


def _require_square(M: Mat, name: str) -> Mat:
    M = as_matrix(M, name)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {M.shape}")
    return M


def spectral_radius(M: Mat) -> float:
    """Largest eigenvalue modulus of a square matrix."""
    M = _require_square(M, "M")
    try:
        eigs = np.linalg.eigvals(M)
    except np.linalg.LinAlgError as exc:
        raise NumericError(
            f"eigenvalue computation failed for {M.shape} matrix: {exc}"
        ) from exc
    return float(np.max(np.abs(eigs))) if M.size else 0.0


def operator_norm_2(M: Mat) -> float:
    """Induced 2-norm (largest singular value)."""
    M = as_matrix(M, "M")
    try:
        return float(np.linalg.norm(M, 2))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"SVD failed for {M.shape} matrix: {exc}") from exc


def _contraction_data(A: Mat) -> tuple[int, float, float]:
    """Find a power q with ||A^q|| <= 1/2 via repeated squaring.

    Returns (q, gamma, R_bound) with gamma = ||A^q|| and R_bound an upper
    bound on max_{0 <= b < q} ||A^b||, assembled from the squaring ladder
    (||A^b|| <= prod of the ladder norms over the binary digits of b).
    """
    if spectral_radius(A) >= 1.0:
        raise StabilityError(
            f"matrix has spectral radius {spectral_radius(A):.6g} >= 1; "
            "geometric norm series diverges"
        )
    q = 1
    P = A.copy()
    gamma = operator_norm_2(P)
    R_bound = 1.0
    level = 0
    while gamma > 0.5:
        R_bound *= max(1.0, gamma)
        level += 1
        if level > _MAX_SQUARINGS:
            raise ConvergenceError(
                "no contracting power ||A^q|| <= 1/2 found within the "
                f"{2 ** _MAX_SQUARINGS}-iteration cap"
            )
        P = P @ P
        q *= 2
        gamma = operator_norm_2(P)
    return q, gamma, R_bound


def _norm_series(
    A: Mat,
    power: int,
    tol: float,
    left: Mat | None = None,
    right: Mat | None = None,
) -> SeriesResult:
    """Certified evaluation of sum_k ||L A^k R||_2^power.

    The tail after the last retained term K satisfies

        sum_{j>=1} ||L A^{K+j} R||^p <= ||L A^K||^p ||R||^p T_A

    with T_A = (R_q/gamma)^p c/(1-c), c = gamma^(p/q), derived from a
    contracting power ||A^q|| = gamma <= 1/2; iteration stops once that
    bound drops to tol.
    """
    if tol <= 0:
        raise InputError(f"tol must be positive, got {tol}")
    q, gamma, R_bound = _contraction_data(A)
    n = A.shape[0]
    if gamma == 0.0:
        # Nilpotent within q steps: sum exactly q + (terms beyond are zero).
        tail_const = 0.0
        c = 0.0
    else:
        c = gamma ** (power / q)
        tail_const = (R_bound / gamma) ** power * c / (1.0 - c)

    right_norm = 1.0 if right is None else operator_norm_2(right)
    W = np.eye(n) if left is None else np.array(left, dtype=float)

    total = 0.0
    k = 0
    while True:
        term_mat = W if right is None else W @ right
        total += operator_norm_2(term_mat) ** power
        envelope = operator_norm_2(W)
        if gamma == 0.0:
            # A^q is exactly zero, so the series terminates at q terms.
            tail = 0.0 if (k + 1 >= q or envelope == 0.0) else np.inf
        else:
            tail = envelope**power * right_norm**power * tail_const
        if tail <= tol:
            return SeriesResult(value=total, terms_used=k + 1, truncation_bound=tail)
        k += 1
        if k > _MAX_SERIES_TERMS:
            raise ConvergenceError(
                f"series tail still {tail:.3g} > tol after {k} terms"
            )
        W = W @ A


def geometric_norm_sum(M: Mat, power: int, tol: float = 1e-12) -> SeriesResult:
    """sum_{k>=0} ||M^k||_2^power for a Schur matrix M, certified tail <= tol."""
    M = _require_square(M, "M")
    if power not in (1, 2):
        raise InputError(f"power must be 1 or 2, got {power}")
    return _norm_series(M, power, tol)


def markov_norm_series(
    A: Mat, left: Mat, right: Mat, tol: float = 1e-12
) -> SeriesResult:
    """sum_{k>=0} ||L A^k R||_2 for Schur A, certified tail <= tol."""
    A = _require_square(A, "A")
    left = as_matrix(left, "left")
    right = as_matrix(right, "right")
    if left.shape[1] != A.shape[0] or right.shape[0] != A.shape[1]:
        raise DimensionError(
            f"incompatible shapes: left {left.shape}, A {A.shape}, right {right.shape}"
        )
    return _norm_series(A, 1, tol, left=left, right=right)


def solve_discrete_lyapunov(A: Mat, Q: Mat, tol: float = 1e-12) -> Mat:
    """Solve P = A P A^T + Q for Schur A by doubling.

    The iterate P_j = sum_{k < 2^j} A^k Q (A^k)^T converges geometrically;
    each doubling squares the contraction factor.  The returned P is
    symmetrized and checked against the residual identity.
    """
    A = _require_square(A, "A")
    Q = _require_square(Q, "Q")
    if A.shape != Q.shape:
        raise DimensionError(f"A {A.shape} and Q {Q.shape} must match")
    asym = operator_norm_2(Q - Q.T)
    if asym > 1e-10 * (1.0 + operator_norm_2(Q)):
        raise InputError(f"Q is not symmetric (asymmetry {asym:.3g})")
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise StabilityError(
            f"A has spectral radius {rho:.6g} >= 1; Lyapunov equation has no PSD solution"
        )
    Q = 0.5 * (Q + Q.T)

    P = Q.copy()
    S = A.copy()
    # The truncation error after this step is S P_exact S^T with S = A^(2^j);
    # require it small enough that the residual identity also passes, which
    # adds a (1 + ||A||^2) amplification factor.
    amplify = 1.0 + operator_norm_2(A) ** 2
    for _ in range(200):
        P = P + S @ P @ S.T
        P = 0.5 * (P + P.T)
        S = S @ S
        err = operator_norm_2(S) ** 2 * (1.0 + operator_norm_2(P)) * amplify
        if err <= 0.1 * tol * (1.0 + operator_norm_2(Q)):
            break
    else:
        raise ConvergenceError("Lyapunov doubling iteration did not converge")

    residual = operator_norm_2(P - A @ P @ A.T - Q)
    if residual > tol * (1.0 + operator_norm_2(Q)):
        raise NumericError(
            f"Lyapunov residual {residual:.3g} exceeds tolerance "
            f"{tol * (1.0 + operator_norm_2(Q)):.3g}"
        )
    return P


def cholesky_psd(Q: Mat) -> Mat:
    """Lower-triangular L with L L^T = Q for symmetric PSD Q.

    Singular PSD matrices are handled by zeroing columns whose pivot falls
    below a scale-relative threshold (valid for PSD input, where a vanishing
    Schur-complement diagonal forces its whole column to vanish).
    """
    Q = _require_square(Q, "Q")
    n = Q.shape[0]
    scale = operator_norm_2(Q)
    asym = operator_norm_2(Q - Q.T)
    if asym > 1e-10 * (1.0 + scale):
        raise InputError(f"Q is not symmetric (asymmetry {asym:.3g})")
    Qs = 0.5 * (Q + Q.T)
    eigmin = float(np.min(np.linalg.eigvalsh(Qs)))
    if eigmin < -1e-8 * max(scale, 1.0):
        raise InputError(
            f"Q is indefinite: smallest eigenvalue {eigmin:.3g} < -1e-8*||Q||"
        )

    L = np.zeros((n, n))
    pivot_floor = 1e-14 * max(scale, 1.0)
    for j in range(n):
        d = Qs[j, j] - L[j, :j] @ L[j, :j]
        if d <= pivot_floor:
            continue  # rank-deficient direction: column stays zero
        L[j, j] = np.sqrt(d)
        if j + 1 < n:
            L[j + 1 :, j] = (Qs[j + 1 :, j] - L[j + 1 :, :j] @ L[j, :j]) / L[j, j]

    residual = operator_norm_2(L @ L.T - Qs)
    if residual > 1e-10 * (1.0 + scale):
        raise InputError(
            f"PSD factorization residual {residual:.3g} too large; "
            "Q is not positive semidefinite to working precision"
        )
    return L
