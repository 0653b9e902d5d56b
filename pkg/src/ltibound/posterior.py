"""Hypothesis classes, Gibbs posteriors, and their Monte-Carlo estimators.

A hypothesis class is a parameter box: template predictor matrices whose
marked entries range over a product of intervals, with the uniform prior
on the box.  The data-dependent Gibbs posterior reweights the prior by
exp(-lambda * empirical loss); everything the bounds need from it (the
normalizer, KL and Renyi divergences, posterior expectations, the class
supremum of G_e) is estimated from i.i.d. prior samples, a deterministic
grid, or a Metropolis random-walk chain, all in log space.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionError, InputError, StabilityError
from .lti import FeatureMode, Predictor, _rng


def log_sum_exp(values) -> float:
    """Stable ln sum(exp(values)); handles -inf entries and empty-sum underflow."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InputError("log_sum_exp of an empty array")
    hi = float(np.max(v))
    if hi == -np.inf:
        return -np.inf
    return hi + math.log(float(np.sum(np.exp(v - hi))))


def _parse_entry(raw, slots: list, i: int, j: int) -> float:
    if isinstance(raw, str):
        if not raw.startswith("theta"):
            raise InputError(f"template entry {raw!r} is neither a number nor 'theta<k>'")
        try:
            k = int(raw[5:])
        except ValueError as exc:
            raise InputError(f"bad parameter reference {raw!r}") from exc
        if k < 0:
            raise InputError(f"bad parameter reference {raw!r}")
        slots.append((i, j, k))
        return 0.0
    return float(raw)


def _parse_template(rows, name: str) -> tuple[np.ndarray, tuple]:
    slots: list = []
    try:
        base = np.array(
            [[_parse_entry(v, slots, i, j) for j, v in enumerate(row)] for i, row in enumerate(rows)],
            dtype=float,
        )
    except TypeError as exc:
        raise InputError(f"{name} template must be a matrix of numbers/references") from exc
    if base.ndim != 2:
        raise DimensionError(f"{name} template must be two-dimensional")
    return base, tuple(slots)


def _kronecker_points(d: int, count: int) -> np.ndarray:
    """Low-discrepancy points in (0,1)^d from an additive irrational recurrence."""
    primes = []
    cand = 2
    while len(primes) < d:
        if all(cand % p for p in primes):
            primes.append(cand)
        cand += 1
    alpha = np.sqrt(np.array(primes, dtype=float))
    alpha -= np.floor(alpha)
    idx = np.arange(1, count + 1, dtype=float)[:, None]
    return np.mod(idx * alpha[None, :], 1.0)


@dataclass(frozen=True)
class ParamBox:
    """Predictor template over a box of parameters with the uniform prior."""

    A_base: np.ndarray
    B_base: np.ndarray
    C_base: np.ndarray
    D_base: np.ndarray
    A_slots: tuple
    B_slots: tuple
    C_slots: tuple
    D_slots: tuple
    lows: np.ndarray
    highs: np.ndarray
    mode: FeatureMode

    @classmethod
    def from_template(cls, A, B, C, D, box, mode: FeatureMode) -> "ParamBox":
        """Build from matrices whose entries are numbers or 'theta<k>' references.

        box is a sequence of (low, high) pairs, one per parameter index; it
        must cover exactly the indices the templates reference.  Every probe
        point of the box must give a Schur A matrix, checked here once.
        """
        A_base, A_slots = _parse_template(A, "A")
        B_base, B_slots = _parse_template(B, "B")
        C_base, C_slots = _parse_template(C, "C")
        D_base, D_slots = _parse_template(D, "D")
        bounds = np.array([[float(lo), float(hi)] for lo, hi in box], dtype=float)
        if bounds.ndim != 2 or bounds.shape[0] < 1:
            raise InputError("box must list at least one (low, high) pair")
        if np.any(bounds[:, 0] >= bounds[:, 1]):
            raise InputError("each box interval needs low < high")
        used = {k for slots in (A_slots, B_slots, C_slots, D_slots) for (_, _, k) in slots}
        d = bounds.shape[0]
        if used != set(range(d)):
            raise InputError(
                f"templates reference parameter indices {sorted(used)} but the box "
                f"defines {d} intervals 0..{d - 1}"
            )
        obj = cls(
            A_base, B_base, C_base, D_base,
            A_slots, B_slots, C_slots, D_slots,
            bounds[:, 0].copy(), bounds[:, 1].copy(), mode,
        )
        obj._probe_stability()
        # One full materialization exercises every structural check
        # (shapes, the zero block of D under input-output features).
        obj.materialize(obj.center())
        return obj

    @property
    def dim(self) -> int:
        return len(self.lows)

    @property
    def volume(self) -> float:
        return float(np.prod(self.highs - self.lows))

    def center(self) -> np.ndarray:
        return 0.5 * (self.lows + self.highs)

    def contains(self, theta) -> bool:
        t = np.asarray(theta, dtype=float)
        return bool(np.all(t >= self.lows) and np.all(t <= self.highs))

    def contains_batch(self, thetas) -> np.ndarray:
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        return np.all((t >= self.lows) & (t <= self.highs), axis=1)

    def _fill(self, base: np.ndarray, slots: tuple, thetas: np.ndarray) -> np.ndarray:
        out = np.broadcast_to(base, (thetas.shape[0],) + base.shape).copy()
        for i, j, k in slots:
            out[:, i, j] = thetas[:, k]
        return out

    def materialize_batch(self, thetas) -> tuple:
        """(As, Bs, Cs, Ds) stacks for an array of parameter vectors."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if thetas.shape[1] != self.dim:
            raise DimensionError(
                f"parameter vectors must have length {self.dim}, got {thetas.shape[1]}"
            )
        return (
            self._fill(self.A_base, self.A_slots, thetas),
            self._fill(self.B_base, self.B_slots, thetas),
            self._fill(self.C_base, self.C_slots, thetas),
            self._fill(self.D_base, self.D_slots, thetas),
        )

    def materialize(self, theta) -> Predictor:
        As, Bs, Cs, Ds = self.materialize_batch(np.asarray(theta, dtype=float)[None, :])
        return Predictor(As[0], Bs[0], Cs[0], Ds[0], self.mode)

    def probe_points(self) -> np.ndarray:
        """Deterministic stability-probe set: a grid for one parameter,
        corners plus low-discrepancy interior points otherwise."""
        d = self.dim
        if d == 1:
            u = np.linspace(0.0, 1.0, 101)[:, None]
        else:
            n_corners = min(2**d, 1024)
            corners = np.array(
                [[(k >> b) & 1 for b in range(d)] for k in range(n_corners)],
                dtype=float,
            )
            u = np.vstack([corners, _kronecker_points(d, 101 * d)])
        return self.lows + u * (self.highs - self.lows)

    def _probe_stability(self) -> None:
        thetas = self.probe_points()
        As = self._fill(self.A_base, self.A_slots, thetas)
        rho = np.max(np.abs(np.linalg.eigvals(As)), axis=1)
        bad = np.flatnonzero(rho >= 1.0 - 1e-9)
        if bad.size:
            theta = thetas[bad[0]]
            raise StabilityError(
                f"parameter box contains unstable predictors, e.g. theta={theta} "
                f"with spectral radius {rho[bad[0]]:.6g}"
            )

    def sample_prior(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """n i.i.d. draws from the uniform prior on the box, shape (n, dim)."""
        if n < 1:
            raise InputError(f"need n >= 1, got {n}")
        return rng.uniform(self.lows, self.highs, size=(n, self.dim))

    def grid(self, points: int) -> np.ndarray:
        """Midpoint grid with the given number of cells per dimension (dim 1 only)."""
        if self.dim != 1:
            raise InputError("grids are only used for one-parameter boxes")
        width = self.highs[0] - self.lows[0]
        delta = width / points
        return (self.lows[0] + (np.arange(points) + 0.5) * delta)[:, None]


def prior_rng(seed: int) -> np.random.Generator:
    """Counter-based generator for prior sampling, distinct from the data streams."""
    return _rng(seed, 3)


@dataclass(frozen=True)
class LogDensity:
    """Log density (possibly unnormalized) on a parameter box.

    evaluator maps an (M, dim) array of in-support points to their (M,)
    log values; points outside the support evaluate to -inf by contract,
    enforced here so evaluators never see them.
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    support: ParamBox

    def batch(self, thetas) -> np.ndarray:
        t = np.atleast_2d(np.asarray(thetas, dtype=float))
        if t.shape[1] != self.support.dim:
            raise DimensionError(
                f"points must have dimension {self.support.dim}, got {t.shape[1]}"
            )
        out = np.full(t.shape[0], -np.inf)
        inside = self.support.contains_batch(t)
        if np.any(inside):
            vals = np.asarray(self.evaluator(t[inside]), dtype=float)
            out[inside] = vals
        return out

    def __call__(self, theta) -> float:
        return float(self.batch(np.asarray(theta, dtype=float)[None, :])[0])


def uniform_log_density(box: ParamBox) -> LogDensity:
    """The normalized uniform prior on the box."""
    level = -math.log(box.volume)
    return LogDensity(lambda t: np.full(t.shape[0], level), box)


def gibbs_target(
    box: ParamBox,
    lam: float,
    loss_fn: Callable[[np.ndarray], np.ndarray],
    *,
    prior: LogDensity | None = None,
    g_penalty: Callable[[np.ndarray], np.ndarray] | None = None,
    penalty_weight: float = 0.0,
) -> LogDensity:
    """Unnormalized Gibbs log density ln prior - lambda * loss (vectorized).

    loss_fn maps (M, dim) parameter arrays to (M,) empirical losses.  With
    g_penalty supplied the exponent gains -lambda * penalty_weight * G(theta),
    the variant that folds the constants' deviation term into the posterior.
    """
    if lam < 0:
        raise InputError(f"lambda must be nonnegative, got {lam}")
    if prior is None:
        prior = uniform_log_density(box)

    def evaluator(t: np.ndarray) -> np.ndarray:
        val = np.asarray(prior.evaluator(t), dtype=float) - lam * np.asarray(
            loss_fn(t), dtype=float
        )
        if g_penalty is not None:
            val = val - lam * penalty_weight * np.asarray(g_penalty(t), dtype=float)
        return val

    return LogDensity(evaluator, box)


def log_gibbs_density(
    theta,
    lam: float,
    loss: Callable,
    prior: LogDensity,
    g_penalty: Callable | None = None,
    penalty_weight: float = 0.0,
) -> float:
    """ln prior(theta) - lambda*(loss + penalty_weight*G)(theta), unnormalized.

    loss and g_penalty take a single parameter vector; outside the prior's
    support the value is -inf.
    """
    if lam < 0:
        raise InputError(f"lambda must be nonnegative, got {lam}")
    t = np.asarray(theta, dtype=float)
    base = prior(t)
    if base == -np.inf:
        return -np.inf
    val = base - lam * float(loss(t))
    if g_penalty is not None:
        val -= lam * penalty_weight * float(g_penalty(t))
    return val


def estimate_logZ(prior_losses, lam: float) -> float:
    """ln of the Gibbs normalizer E_prior[exp(-lambda * loss)] from i.i.d. samples."""
    losses = np.asarray(prior_losses, dtype=float)
    return log_sum_exp(-lam * losses) - math.log(losses.size)


def estimate_Dr(prior_losses, lam: float, r: int = 2) -> float:
    """Order-r Renyi divergence of the Gibbs posterior from the prior.

    D_r = (E_prior[(d posterior/d prior)^(r/(r-1))])^((r-1)/r), estimated
    from the prior-sample losses that also give the normalizer; exactly 1
    when lambda = 0 or all losses coincide.
    """
    if not (isinstance(r, (int, np.integer)) and r >= 2):
        raise InputError(f"r must be an integer >= 2, got {r}")
    lw = -lam * np.asarray(prior_losses, dtype=float)
    n = math.log(lw.size)
    s = r / (r - 1.0)
    ln_dr = (1.0 / s) * (log_sum_exp(s * lw) - n) - (log_sum_exp(lw) - n)
    return math.exp(ln_dr)


def estimate_KL_grid(
    posterior: LogDensity,
    prior: LogDensity | None = None,
    grid_points: int = 10_000,
    *,
    log_z: float | None = None,
    posterior_samples: np.ndarray | None = None,
) -> float:
    """KL(posterior || prior) for a posterior given by its unnormalized log density.

    One-parameter supports use a midpoint-grid Riemann sum; log_z defaults
    to the normalizer computed by the same quadrature (pass the sampling
    estimate to mirror a Monte-Carlo-normalized density instead).  Cells
    of zero posterior mass contribute zero.  Multi-parameter supports need
    posterior_samples (draws from the posterior) together with log_z and
    use the sample mean of ln(posterior) - ln(prior).
    """
    box = posterior.support
    if prior is None:
        prior = uniform_log_density(box)
    if box.dim == 1:
        if grid_points < 2:
            raise InputError(f"need grid_points >= 2, got {grid_points}")
        thetas = box.grid(grid_points)
        log_delta = math.log(box.volume / grid_points)
        lu = posterior.batch(thetas)
        lp = prior.batch(thetas)
        if log_z is None:
            log_z = log_sum_exp(lu) + log_delta
        ln_rho = lu - log_z
        pos = np.isfinite(ln_rho)
        terms = np.exp(ln_rho[pos] + log_delta) * (ln_rho[pos] - lp[pos])
        return float(np.sum(terms))
    if posterior_samples is None or log_z is None:
        raise InputError(
            "multi-parameter supports need posterior_samples and log_z "
            "to estimate the KL divergence"
        )
    samples = np.atleast_2d(np.asarray(posterior_samples, dtype=float))
    vals = posterior.batch(samples) - log_z - prior.batch(samples)
    return float(np.mean(vals))


@dataclass(frozen=True)
class GeSupEstimate:
    """Sample maximum of G_e over the class, with the count behind it."""

    value: float
    n_samples: int


def estimate_Ge_sup(prior_samples, ge) -> GeSupEstimate:
    """Monte-Carlo supremum of G_e over the class: max over prior samples.

    ge is either a vectorized map from (M, dim) parameter arrays to (M,)
    values or the precomputed value array aligned with prior_samples.
    """
    samples = np.atleast_2d(np.asarray(prior_samples, dtype=float))
    if samples.shape[0] < 1:
        raise InputError("need at least one prior sample")
    values = np.asarray(ge(samples) if callable(ge) else ge, dtype=float)
    if values.shape[0] != samples.shape[0]:
        raise DimensionError(
            f"{values.shape[0]} values for {samples.shape[0]} samples"
        )
    return GeSupEstimate(value=float(np.max(values)), n_samples=samples.shape[0])


@dataclass(frozen=True)
class McEstimate:
    mean: float
    std_error: float


def mc_mean(values) -> tuple[float, float]:
    """Sample mean and its standard error."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise InputError("need at least two values")
    return float(np.mean(v)), float(np.std(v, ddof=1) / math.sqrt(v.size))


def mc_expectation(samples, g) -> McEstimate:
    """Monte-Carlo expectation of g over the samples, with its standard error.

    g is a vectorized map from (M, dim) parameter arrays to (M,) values,
    or the precomputed value array aligned with samples.
    """
    pts = np.atleast_2d(np.asarray(samples, dtype=float))
    values = np.asarray(g(pts) if callable(g) else g, dtype=float)
    if values.shape[0] != pts.shape[0]:
        raise DimensionError(f"{values.shape[0]} values for {pts.shape[0]} samples")
    mean, se = mc_mean(values)
    return McEstimate(mean=mean, std_error=se)


@dataclass(frozen=True)
class PosteriorChain:
    """Recorded Metropolis samples with their losses and acceptance flags."""

    samples: np.ndarray
    losses: np.ndarray
    accepted: np.ndarray
    accept_rate: float
    seed: int
    burn_in: int
    thinning: int


def mh_sample(
    target: LogDensity,
    init,
    n_steps: int,
    seed: int,
    *,
    proposal_std: np.ndarray | float | None = None,
    burn_in: int | None = None,
    thinning: int = 1,
    loss_fn=None,
) -> PosteriorChain:
    """Random-walk Metropolis on the target's support, started at init.

    Proposals are Gaussian steps (componentwise std defaulting to a tenth
    of each box width); moves leaving the support are rejected through the
    -inf contract.  The first burn_in steps (default: 10% of n_steps) are
    discarded and the rest thinned.  loss_fn, when given, is evaluated at
    each newly accepted point so the chain can record per-sample losses
    (NaN otherwise).  Warns when the overall acceptance rate leaves
    [0.1, 0.6].
    """
    box = target.support
    if n_steps < 1:
        raise InputError(f"need n_steps >= 1, got {n_steps}")
    if burn_in is None:
        burn_in = n_steps // 10
    if not 0 <= burn_in < n_steps:
        raise InputError(f"burn_in {burn_in} must lie in [0, n_steps)")
    if thinning < 1:
        raise InputError(f"thinning must be >= 1, got {thinning}")
    theta = np.asarray(init, dtype=float).reshape(-1)
    if theta.shape[0] != box.dim:
        raise DimensionError(f"init must have dimension {box.dim}, got {theta.shape[0]}")
    if not box.contains(theta):
        raise InputError(f"init {theta} lies outside the support box")
    widths = box.highs - box.lows
    if proposal_std is None:
        std = 0.1 * widths
    else:
        std = np.broadcast_to(np.asarray(proposal_std, dtype=float), (box.dim,)).copy()
        if np.any(std <= 0):
            raise InputError("proposal_std must be positive")

    rng = _rng(seed, 2)
    lp = target(theta)
    if lp == -np.inf:
        raise InputError("target evaluates to -inf at init")
    loss = float(loss_fn(theta)) if loss_fn is not None else math.nan
    kept_t, kept_l, kept_a = [], [], []
    n_accept = 0
    for step in range(n_steps):
        prop = theta + std * rng.standard_normal(box.dim)
        accept = False
        prop_lp = target(prop)
        if prop_lp > -np.inf:
            log_alpha = prop_lp - lp
            if log_alpha >= 0.0 or rng.uniform() < math.exp(log_alpha):
                theta, lp, accept = prop, prop_lp, True
                if loss_fn is not None:
                    loss = float(loss_fn(theta))
        n_accept += accept
        if step >= burn_in and (step - burn_in) % thinning == 0:
            kept_t.append(theta.copy())
            kept_l.append(loss)
            kept_a.append(accept)
    rate = n_accept / n_steps
    if not 0.1 <= rate <= 0.6:
        warnings.warn(
            f"Metropolis acceptance rate {rate:.3f} outside [0.1, 0.6]; "
            "consider adjusting proposal_std",
            stacklevel=2,
        )
    return PosteriorChain(
        samples=np.array(kept_t),
        losses=np.array(kept_l),
        accepted=np.array(kept_a, dtype=bool),
        accept_rate=rate,
        seed=seed,
        burn_in=burn_in,
        thinning=thinning,
    )


def chain_to_csv(chain: PosteriorChain, path) -> None:
    """Write a chain as CSV: index,theta_1..theta_d,loss,accepted."""
    d = chain.samples.shape[1] if chain.samples.ndim == 2 else 1
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["index"] + [f"theta_{i + 1}" for i in range(d)] + ["loss", "accepted"])
        for i in range(len(chain.samples)):
            row = [i] + [repr(float(v)) for v in np.atleast_1d(chain.samples[i])]
            row += [repr(float(chain.losses[i])), int(chain.accepted[i])]
            writer.writerow(row)
