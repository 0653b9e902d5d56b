"""System models: stochastic data generators, LTI predictors, error systems.

A Generator is an innovation-form stochastic LTI system

    x(t+1) = A_g x(t) + K_g e_g(t),      [y(t); u(t)] = C_g x(t) + e_g(t),

with white Gaussian innovations e_g ~ N(0, Q_e) and both A_g and
A_g - K_g C_g Schur.  A Predictor is a deterministic stable LTI system
mapping feature histories w(0..t) to a one-step prediction of y(t), where
the feature is either the input alone (w = u) or the joint output/input
(w = [y; u]).  Stacking a generator with a predictor yields the error
system whose output, driven by e_g, is the infinite-past prediction error
y - yhat; its matrices carry every constant the bounds need.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import kernels
from .errors import (
    DimensionError,
    InputError,
    StabilityError,
    UnsupportedStructureError,
)
from .matnum import (
    Mat,
    _contraction_data,
    as_matrix,
    cholesky_psd,
    operator_norm_2,
    solve_discrete_lyapunov,
    spectral_radius,
)


class FeatureMode(Enum):
    """What the predictor observes: inputs only, or past outputs as well."""

    INPUT_ONLY = "input-only"
    INPUT_OUTPUT = "input-output"

    @classmethod
    def parse(cls, text: str) -> "FeatureMode":
        for mode in cls:
            if mode.value == text:
                return mode
        raise InputError(
            f"unknown feature mode {text!r}; expected 'input-only' or 'input-output'"
        )


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Generator:
    """Innovation-form data generator (A_g, K_g, C_g, Q_e) with m = n_y + n_u."""

    A_g: Mat
    K_g: Mat
    C_g: Mat
    Q_e: Mat
    n_y: int
    n_u: int

    def __post_init__(self):
        A = as_matrix(self.A_g, "A_g")
        K = as_matrix(self.K_g, "K_g")
        C = as_matrix(self.C_g, "C_g")
        Q = as_matrix(self.Q_e, "Q_e")
        n = A.shape[0]
        m = self.n_y + self.n_u
        if m < 2:
            raise InputError(f"need n_y + n_u >= 2, got {m}")
        if A.shape != (n, n):
            raise DimensionError(f"A_g must be square, got {A.shape}")
        if K.shape != (n, m):
            raise DimensionError(f"K_g must be {n}x{m}, got {K.shape}")
        if C.shape != (m, n):
            raise DimensionError(f"C_g must be {m}x{n}, got {C.shape}")
        if Q.shape != (m, m):
            raise DimensionError(f"Q_e must be {m}x{m}, got {Q.shape}")
        for name, val in (("A_g", A), ("K_g", K), ("C_g", C), ("Q_e", Q)):
            object.__setattr__(self, name, _frozen(val))

    @property
    def n(self) -> int:
        return self.A_g.shape[0]

    @property
    def m(self) -> int:
        return self.n_y + self.n_u

    @property
    def C_1(self) -> Mat:
        """Rows of C_g producing y."""
        return self.C_g[: self.n_y, :]

    @property
    def C_2(self) -> Mat:
        """Rows of C_g producing u."""
        return self.C_g[self.n_y :, :]

    def closed_loop(self) -> Mat:
        return self.A_g - self.K_g @ self.C_g

    def mu_max(self) -> float:
        return float(np.max(np.linalg.eigvalsh(0.5 * (self.Q_e + self.Q_e.T))))

    def stationary_state_cov(self) -> Mat:
        """P_x solving P = A_g P A_g^T + K_g Q_e K_g^T."""
        return solve_discrete_lyapunov(self.A_g, self.K_g @ self.Q_e @ self.K_g.T)


@dataclass(frozen=True)
class Predictor:
    """Deterministic LTI predictor (A_hat, B_hat, C_hat, D_hat) with a feature mode."""

    A_hat: Mat
    B_hat: Mat
    C_hat: Mat
    D_hat: Mat
    mode: FeatureMode

    def __post_init__(self):
        A = as_matrix(self.A_hat, "A_hat")
        B = as_matrix(self.B_hat, "B_hat")
        C = as_matrix(self.C_hat, "C_hat")
        D = as_matrix(self.D_hat, "D_hat")
        nh = A.shape[0]
        if A.shape != (nh, nh):
            raise DimensionError(f"A_hat must be square, got {A.shape}")
        if B.shape[0] != nh or C.shape[1] != nh:
            raise DimensionError(
                f"inconsistent predictor shapes: A {A.shape}, B {B.shape}, C {C.shape}"
            )
        if D.shape != (C.shape[0], B.shape[1]):
            raise DimensionError(
                f"D_hat must be {C.shape[0]}x{B.shape[1]}, got {D.shape}"
            )
        rho = spectral_radius(A)
        if rho >= 1.0:
            raise StabilityError(f"predictor A_hat has spectral radius {rho:.6g} >= 1")
        if self.mode is FeatureMode.INPUT_OUTPUT:
            n_y = C.shape[0]
            if D.shape[1] <= n_y:
                raise DimensionError(
                    "input-output predictor needs n_w = n_y + n_u > n_y feature width"
                )
            if np.any(D[:, :n_y] != 0.0):
                raise InputError(
                    "input-output predictor must not feed y(t) through directly: "
                    "the first n_y columns of D_hat must be exactly zero"
                )
        for name, val in (("A_hat", A), ("B_hat", B), ("C_hat", C), ("D_hat", D)):
            object.__setattr__(self, name, _frozen(val))

    @property
    def n_state(self) -> int:
        return self.A_hat.shape[0]

    @property
    def n_w(self) -> int:
        return self.B_hat.shape[1]

    @property
    def n_y(self) -> int:
        return self.C_hat.shape[0]


@dataclass(frozen=True)
class ErrorSystem:
    """Stacked system (A_e, K_e, C_e, D_e) whose output is y - yhat under e_g."""

    A_e: Mat
    K_e: Mat
    C_e: Mat
    D_e: Mat
    n: int
    n_hat: int

    def __post_init__(self):
        for name in ("A_e", "K_e", "C_e", "D_e"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))


@dataclass(frozen=True)
class GeneratorReport:
    rho_Ag: float
    rho_closed: float
    q_e_psd: bool
    ok: bool


@dataclass(frozen=True)
class Trajectory:
    """One simulated sample path: outputs, inputs, innovations, and replay data.

    w is derived from (y, u) according to the stored feature mode.  When the
    trajectory was simulated jointly with a predictor, joint_initial_state
    holds the stationary stacked state [x(0); xhat(0)] and predictor the
    predictor it belongs to.
    """

    y: np.ndarray
    u: np.ndarray
    e_g: np.ndarray
    seed: int
    N: int
    mode: FeatureMode
    joint_initial_state: np.ndarray | None = None
    predictor: Predictor | None = field(default=None, repr=False)

    def __post_init__(self):
        for name in ("y", "u", "e_g"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.joint_initial_state is not None:
            object.__setattr__(
                self, "joint_initial_state", _frozen(self.joint_initial_state)
            )
        if not (len(self.y) == len(self.u) == len(self.e_g) == self.N):
            raise DimensionError("trajectory arrays must all have length N")

    @property
    def w(self) -> np.ndarray:
        if self.mode is FeatureMode.INPUT_ONLY:
            return self.u
        return np.hstack([self.y, self.u])


def validate_generator(g: Generator) -> GeneratorReport:
    """Schur checks for A_g and A_g - K_g C_g plus PSD check on Q_e."""
    rho_a = spectral_radius(g.A_g)
    rho_c = spectral_radius(g.closed_loop())
    Qs = 0.5 * (g.Q_e + g.Q_e.T)
    eigmin = float(np.min(np.linalg.eigvalsh(Qs)))
    sym_ok = operator_norm_2(g.Q_e - g.Q_e.T) <= 1e-10 * (1.0 + operator_norm_2(g.Q_e))
    psd = bool(sym_ok and eigmin >= -1e-8 * max(1.0, operator_norm_2(Qs)))
    ok = bool(rho_a < 1.0 and rho_c < 1.0 and psd)
    return GeneratorReport(rho_Ag=rho_a, rho_closed=rho_c, q_e_psd=psd, ok=ok)


def build_error_system(g: Generator, f: Predictor) -> ErrorSystem:
    """Stack generator and predictor into the system driving y - yhat.

    With C_w the rows of C_g the feature observes and S the matching
    selector of e_g blocks:

        A_e = [[A_g, 0], [B_hat C_w, A_hat]],   K_e = [K_g; B_hat S],
        C_e = [C_1 - D_hat C_w, -C_hat],        D_e = [I_{n_y} 0] - D_hat S,

    so that for the stacked state z = [x; xhat],
    y(t) - yhat(t) = C_e z(t) + D_e e_g(t).
    """
    n, m, n_y = g.n, g.m, g.n_y
    nh = f.n_state
    if f.n_y != n_y:
        raise DimensionError(
            f"predictor outputs {f.n_y} components but the generator has n_y={n_y}"
        )
    expected_nw = g.n_u if f.mode is FeatureMode.INPUT_ONLY else m
    if f.n_w != expected_nw:
        raise DimensionError(
            f"predictor feature width {f.n_w} does not match mode {f.mode.value} "
            f"(expected {expected_nw})"
        )
    if f.mode is FeatureMode.INPUT_ONLY:
        C_w = g.C_2
        S = np.hstack([np.zeros((g.n_u, n_y)), np.eye(g.n_u)])
    else:
        C_w = g.C_g
        S = np.eye(m)

    B_w = f.B_hat @ S  # equals [0 B_hat] resp. B_hat
    D_w = f.D_hat @ S  # equals [0 D_hat] resp. D_hat

    A_e = np.zeros((n + nh, n + nh))
    A_e[:n, :n] = g.A_g
    A_e[n:, :n] = f.B_hat @ C_w
    A_e[n:, n:] = f.A_hat
    K_e = np.vstack([g.K_g, B_w])
    C_e = np.hstack([g.C_1 - f.D_hat @ C_w, -f.C_hat])
    D_e = np.hstack([np.eye(n_y), np.zeros((n_y, g.n_u))]) - D_w
    return ErrorSystem(A_e=A_e, K_e=K_e, C_e=C_e, D_e=D_e, n=n, n_hat=nh)


def _rng(seed: int, stream: int) -> np.random.Generator:
    """Counter-based generator; (seed, stream) fully determines the draws."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence((seed, stream))))


def _psd_factor(P: Mat) -> Mat:
    """Cholesky-type factor tolerant of the tiny asymmetry a solver leaves."""
    return cholesky_psd(0.5 * (P + P.T))


def simulate(
    g: Generator, N: int, seed: int, predictor: Predictor | None = None
) -> Trajectory:
    """Draw one stationary sample path of the generator.

    x(0) comes from the stationary law N(0, P_x).  When a predictor is
    supplied, the stacked state [x(0); xhat(0)] is drawn from the joint
    stationary law N(0, P_e), with the predictor block sampled
    conditionally on x(0) from a second stream so that y and u are
    identical with and without the predictor for the same seed.
    """
    report = validate_generator(g)
    if not report.ok:
        raise InputError(
            f"invalid generator: rho(A_g)={report.rho_Ag:.4g}, "
            f"rho(A_g-K_gC_g)={report.rho_closed:.4g}, Q_e PSD={report.q_e_psd}"
        )
    if N < 1:
        raise InputError(f"N must be >= 1, got {N}")
    if predictor is not None and predictor.n_y != g.n_y:
        raise DimensionError("predictor/generator output dimensions disagree")

    main = _rng(seed, 0)
    P_x = g.stationary_state_cov()
    L_x = _psd_factor(P_x)
    x0 = L_x @ main.standard_normal(g.n)
    L_e = cholesky_psd(g.Q_e)
    E = main.standard_normal((N, g.m)) @ L_e.T

    X = kernels.state_recursion(g.A_g, g.K_g, E, x0)
    YU = X @ g.C_g.T + E
    y = YU[:, : g.n_y]
    u = YU[:, g.n_y :]

    joint0 = None
    mode = FeatureMode.INPUT_ONLY
    if predictor is not None:
        mode = predictor.mode
        err = build_error_system(g, predictor)
        P_e = solve_discrete_lyapunov(err.A_e, err.K_e @ g.Q_e @ err.K_e.T)
        n = g.n
        S11 = P_e[:n, :n]
        S21 = P_e[n:, :n]
        S22 = P_e[n:, n:]
        gain = S21 @ np.linalg.pinv(0.5 * (S11 + S11.T), hermitian=True, rcond=1e-12)
        S_cond = S22 - gain @ S21.T
        L_c = _psd_factor(S_cond)
        xhat0 = gain @ x0 + L_c @ _rng(seed, 1).standard_normal(predictor.n_state)
        joint0 = np.concatenate([x0, xhat0])

    return Trajectory(
        y=y,
        u=u,
        e_g=E,
        seed=seed,
        N=N,
        mode=mode,
        joint_initial_state=joint0,
        predictor=predictor,
    )


def predictor_from_innovation_form(
    A: Mat, B: Mat, C: Mat, D: Mat, K: Mat, mode: FeatureMode
) -> Predictor:
    """Predictor associated with an innovation-form stochastic LTI system.

    Input-only: the deterministic part (A, B, C, D) itself.  Input-output:
    the one-step-ahead predictor (A - KC, [K, B - KD], C, [0, D]) obtained
    by rewriting the innovation as e = y - Cx - Du.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    C = as_matrix(C, "C")
    D = as_matrix(D, "D")
    K = as_matrix(K, "K")
    rho = spectral_radius(A)
    if rho >= 1.0:
        raise StabilityError(f"A has spectral radius {rho:.6g} >= 1")
    if mode is FeatureMode.INPUT_ONLY:
        return Predictor(A, B, C, D, FeatureMode.INPUT_ONLY)
    closed = A - K @ C
    rho_c = spectral_radius(closed)
    if rho_c >= 1.0:
        raise StabilityError(
            f"A - KC has spectral radius {rho_c:.6g} >= 1; "
            "the input-output predictor would be unstable"
        )
    n_y = C.shape[0]
    return Predictor(
        closed,
        np.hstack([K, B - K @ D]),
        C,
        np.hstack([np.zeros((n_y, n_y)), D]),
        FeatureMode.INPUT_OUTPUT,
    )


def invert_predictor_to_innovation_form(f: Predictor) -> tuple[Mat, Mat, Mat, Mat, Mat]:
    """Inverse of predictor_from_innovation_form for input-output predictors.

    Splitting B_hat = [K, B_u] and D_hat = [0, D_u] by the n_y leading
    columns, returns (A, B, C, D, K) = (A_hat + K C_hat, B_u + K D_u,
    C_hat, D_u, K).
    """
    if f.mode is not FeatureMode.INPUT_OUTPUT:
        raise InputError(
            "only input-output predictors carry an innovation-form inverse"
        )
    n_y = f.n_y
    K = f.B_hat[:, :n_y]
    B_u = f.B_hat[:, n_y:]
    D_u = f.D_hat[:, n_y:]
    A = f.A_hat + K @ f.C_hat
    B = B_u + K @ D_u
    return A, B, f.C_hat, D_u, K


def _zero_block(M: Mat, rows: slice, cols: slice) -> bool:
    block = M[rows, cols]
    if block.size == 0:
        return True
    scale = max(1.0, float(np.max(np.abs(M))))
    return bool(np.max(np.abs(block)) <= 1e-12 * scale)


def derive_case_predictors(
    g: Generator, split: int | None = None
) -> tuple[Predictor, Predictor]:
    """Optimal predictors for a block-triangular (feedback-free) generator.

    Requires A_g, K_g, C_g to be 2x2 upper block triangular with the state
    split (n1 | n2) where the lower-left blocks vanish and K's columns split
    as (n_y | n_u).  With D_0 = Q_{e,12} Q_{e,22}^{-1}, the u-driven
    realisation of y is

        At = [[A11, A12 - K12 C22 - K11 D0 C22], [0, A22 - K22 C22]],
        Ku = [K12 + K11 D0; K22],  Ky = [K11; 0],  Ct = [C11, C12 - D0 C22],

    and the returned pair is the input-only predictor (At, Ku, Ct, D0) and
    the input-output predictor obtained from the innovation form
    (At, Ku, Ct, D0) with gain Ky, i.e.
    (At - Ky Ct, [Ky, Ku - Ky D0], Ct, [0 D0]).
    """
    n, n_y, n_u = g.n, g.n_y, g.n_u
    candidates = [split] if split is not None else list(range(1, n))
    n1 = None
    for cand in candidates:
        if cand is None or not (1 <= cand <= n - 1):
            continue
        lower = slice(cand, n)
        if (
            _zero_block(g.A_g, lower, slice(0, cand))
            and _zero_block(g.K_g, lower, slice(0, n_y))
            and _zero_block(g.C_g, slice(n_y, g.m), slice(0, cand))
        ):
            n1 = cand
            break
    if n1 is None:
        raise UnsupportedStructureError(
            "generator lacks the block-triangular feedback-free structure "
            "(zero lower-left blocks of A_g, K_g, C_g) this derivation requires"
        )

    A11, A12 = g.A_g[:n1, :n1], g.A_g[:n1, n1:]
    A22 = g.A_g[n1:, n1:]
    K11, K12 = g.K_g[:n1, :n_y], g.K_g[:n1, n_y:]
    K22 = g.K_g[n1:, n_y:]
    C11, C12 = g.C_g[:n_y, :n1], g.C_g[:n_y, n1:]
    C22 = g.C_g[n_y:, n1:]

    Q12 = g.Q_e[:n_y, n_y:]
    Q22 = g.Q_e[n_y:, n_y:]
    try:
        D0 = np.linalg.solve(Q22.T, Q12.T).T
    except np.linalg.LinAlgError as exc:
        raise InputError("Q_e input block is singular; D_0 undefined") from exc

    At = np.block(
        [[A11, A12 - K12 @ C22 - K11 @ D0 @ C22], [np.zeros((n - n1, n1)), A22 - K22 @ C22]]
    )
    Ku = np.vstack([K12 + K11 @ D0, K22])
    Ky = np.vstack([K11, np.zeros((n - n1, n_y))])
    Ct = np.hstack([C11, C12 - D0 @ C22])

    f1 = Predictor(At, Ku, Ct, D0, FeatureMode.INPUT_ONLY)
    f2 = predictor_from_innovation_form(At, Ku, Ct, D0, Ky, FeatureMode.INPUT_OUTPUT)
    return f1, f2


def h2_norm(A: Mat, B: Mat, C: Mat, D: Mat, noise_cov: Mat | None = None) -> float:
    """H2 norm of a stable system driven by white noise of the given covariance.

    Defaults to identity input covariance: sqrt(trace(C P C^T + D D^T)) with
    P = A P A^T + B B^T.
    """
    A = as_matrix(A, "A")
    B = as_matrix(B, "B")
    C = as_matrix(C, "C")
    D = as_matrix(D, "D")
    Q = np.eye(B.shape[1]) if noise_cov is None else as_matrix(noise_cov, "noise_cov")
    P = solve_discrete_lyapunov(A, B @ Q @ B.T)
    return float(np.sqrt(np.trace(C @ P @ C.T + D @ Q @ D.T)))


def h2_distance(s1, s2, tol: float = 1e-10) -> float:
    """H2 distance between two stable systems given as (A, B, C, D) tuples.

    sqrt(||D1 - D2||_F^2 + sum_k ||C1 A1^k B1 - C2 A2^k B2||_F^2) with the
    discarded tail certified to change the result by at most tol.
    """
    A1, B1, C1, D1 = (as_matrix(M, f"s1[{i}]") for i, M in enumerate(s1))
    A2, B2, C2, D2 = (as_matrix(M, f"s2[{i}]") for i, M in enumerate(s2))
    if D1.shape != D2.shape:
        raise DimensionError(f"output/input dimensions differ: {D1.shape} vs {D2.shape}")

    # Per system: sum_{j>k} ||C A^j B||_F^2 <= ||C A^k||_F^2 ||B||_F^2 * T with
    # the geometric tail constant T from the contraction data, or exactly zero
    # for nilpotent A once every remaining power vanishes.
    data = [_contraction_data(A) for A in (A1, A2)]

    def tail_part(W: Mat, bn2: float, q: int, gamma: float, R: float, k: int) -> float:
        if gamma == 0.0:
            return 0.0 if k + 1 >= q else np.inf
        c = gamma ** (2.0 / q)
        return float(np.sum(W**2)) * bn2 * (R / gamma) ** 2 * c / (1.0 - c)

    total = float(np.sum((D1 - D2) ** 2))
    W1 = C1.copy()
    W2 = C2.copy()
    bn1 = float(np.sum(B1**2))
    bn2 = float(np.sum(B2**2))
    for k in range(5_000_000):
        diff = W1 @ B1 - W2 @ B2
        total += float(np.sum(diff**2))
        tail = 2.0 * (
            tail_part(W1, bn1, *data[0], k) + tail_part(W2, bn2, *data[1], k)
        )
        if np.sqrt(total + tail) - np.sqrt(total) <= tol:
            return float(np.sqrt(total))
        W1 = W1 @ A1
        W2 = W2 @ A2
    raise InputError("H2 distance series did not certify within the iteration cap")


def trajectory_to_csv(traj: Trajectory, path) -> None:
    """Write a trajectory as CSV with columns t, y_1..y_ny, u_1..u_nu."""
    n_y = traj.y.shape[1]
    n_u = traj.u.shape[1]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["t"]
            + [f"y_{i + 1}" for i in range(n_y)]
            + [f"u_{i + 1}" for i in range(n_u)]
        )
        for t in range(traj.N):
            writer.writerow(
                [t]
                + [repr(float(v)) for v in traj.y[t]]
                + [repr(float(v)) for v in traj.u[t]]
            )
