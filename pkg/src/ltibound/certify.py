"""End-to-end certification: data, Gibbs posteriors, bounds, artifacts.

One run takes a generator, one hypothesis class per feature mode, and a
list of sample lengths N.  Per class it estimates the class-level
quantities (sup of G_e, the admissible KL inverse temperature, prior
moments of the constants); per N it simulates one trajectory, forms the
two Gibbs posteriors (one per bound), estimates their divergences from
the prior, and evaluates both bounds.  Posterior expectations are
computed by self-normalized importance reweighting of the i.i.d. prior
sample; Metropolis chains are run alongside for their own artifacts (and
for the KL divergence when the box has more than one parameter).

The coverage entry point repeats the per-N evaluation over many
independent trajectories and reports how often each certified bound
actually covers the true posterior loss.
"""

from __future__ import annotations

import json
import math
import multiprocessing
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .bounds import (
    KlBoundResult,
    RenyiBoundResult,
    batch_constants,
    batch_generalization_loss,
    bound_results_to_csv,
    kl_bound,
    lambda_max,
    psi_moment_term,
    renyi_bound,
)
from .config import RunConfig
from .errors import ConstraintError, InputError, UnsupportedStructureError
from .loss import batch_empirical_loss, empirical_loss
from .lti import FeatureMode, Generator, Trajectory, simulate
from .posterior import (
    ParamBox,
    PosteriorChain,
    chain_to_csv,
    estimate_Dr,
    estimate_Ge_sup,
    estimate_KL_grid,
    estimate_logZ,
    gibbs_target,
    mh_sample,
    prior_rng,
)

# The KL bound needs lambda strictly below its admissible supremum; "auto"
# backs off by this factor so that the worst prior sample stays clear of
# the pole in the psi penalty.
AUTO_LAMBDA_SAFETY = 0.999


@dataclass(frozen=True)
class ClassData:
    """Data-independent quantities of one hypothesis class."""

    mode: FeatureMode
    box: ParamBox
    thetas: np.ndarray
    stacks: tuple
    ge: np.ndarray
    G: np.ndarray | None
    L: np.ndarray | None
    ge_sup: float
    lam_kl: float
    psi_term_mean: float
    e_pi_ge_2r: float
    mu_max: float
    m: int
    k_w: float


def resolve_kl_lambda(setting, m: int, mu_max: float, ge_sup: float) -> float:
    """Turn the configured KL lambda ('auto' or a number) into a value."""
    cap = lambda_max(m, mu_max, ge_sup)
    if isinstance(setting, str):
        return AUTO_LAMBDA_SAFETY * cap
    lam = float(setting)
    if not 0.0 < lam < cap:
        raise ConstraintError(
            f"configured lambda {lam:.6g} outside the admissible range (0, {cap:.6g})"
        )
    return lam


def prepare_class(
    g: Generator,
    box: ParamBox,
    cfg: RunConfig,
    *,
    need_G: bool = True,
    need_L: bool = True,
) -> ClassData:
    """Sample the prior and precompute everything that does not touch data."""
    if box.C_base.shape[0] != 1:
        raise UnsupportedStructureError(
            "the certification pipeline handles scalar-output classes; "
            "combine per-output runs (output_index) for more outputs"
        )
    rng = prior_rng(cfg.estimator_seed)
    thetas = box.sample_prior(cfg.prior_samples, rng)
    stacks = box.materialize_batch(thetas)
    bc = batch_constants(g, *stacks, box.mode, ge_only=not need_G)
    # The Monte-Carlo supremum, refined with the deterministic probe set so
    # the admissible-lambda cap stays on the safe side of boundary maxima.
    mc_sup = estimate_Ge_sup(thetas, bc.G_e)
    probe = box.probe_points()
    probe_bc = batch_constants(g, *box.materialize_batch(probe), box.mode, ge_only=True)
    ge_sup = float(max(mc_sup.value, np.max(probe_bc.G_e)))
    lam_kl = resolve_kl_lambda(cfg.kl_lambda, g.m, bc.mu_max, ge_sup)
    psi_mean = float(np.mean(psi_moment_term(lam_kl * bc.mu_max * bc.G_e**2, g.m)))
    e_pi_ge_2r = float(np.mean(bc.G_e ** (2 * cfg.r)))
    L = batch_generalization_loss(g, *stacks, box.mode) if need_L else None
    return ClassData(
        mode=box.mode,
        box=box,
        thetas=thetas,
        stacks=stacks,
        ge=bc.G_e,
        G=bc.G if need_G else None,
        L=L,
        ge_sup=ge_sup,
        lam_kl=lam_kl,
        psi_term_mean=psi_mean,
        e_pi_ge_2r=e_pi_ge_2r,
        mu_max=bc.mu_max,
        m=g.m,
        k_w=bc.K_w,
    )


def _softmax(log_weights: np.ndarray) -> np.ndarray:
    w = np.exp(log_weights - np.max(log_weights))
    return w / np.sum(w)


@dataclass(frozen=True)
class BoundEvaluation:
    """Both bounds on one trajectory, with the posterior truths beside them."""

    mode_value: str
    N: int
    data_seed: int
    kl: KlBoundResult
    renyi: RenyiBoundResult
    post_empirical_kl: float
    post_empirical_renyi: float
    post_loss_kl: float
    post_loss_renyi: float
    log_z_kl: float
    log_z_renyi: float
    kl_div: float
    d_r: float

    @property
    def kl_covered(self) -> bool:
        return self.post_loss_kl <= self.post_empirical_kl + self.kl.r_hat

    @property
    def renyi_covered(self) -> bool:
        return self.post_loss_renyi <= self.post_empirical_renyi + self.renyi.r_hat


def evaluate_bounds(
    g: Generator,
    cd: ClassData,
    cfg: RunConfig,
    traj: Trajectory,
    *,
    posterior_samples: np.ndarray | None = None,
) -> BoundEvaluation:
    """Evaluate the KL and Renyi bounds for the class on one trajectory."""
    if cd.G is None or cd.L is None:
        raise InputError("class data was prepared without G and L; rerun prepare_class")
    losses = batch_empirical_loss(*cd.stacks, traj, cd.mode)

    def loss_at(thetas):
        return batch_empirical_loss(*cd.box.materialize_batch(thetas), traj, cd.mode)

    lam = cd.lam_kl
    lw_kl = -lam * losses
    log_z_kl = estimate_logZ(losses, lam)
    w_kl = _softmax(lw_kl)
    if cd.box.dim == 1:
        kl_div = estimate_KL_grid(
            gibbs_target(cd.box, lam, loss_at), grid_points=cfg.grid_points
        )
    else:
        if posterior_samples is None:
            raise InputError(
                "multi-parameter classes need posterior samples (a chain) for "
                "the KL divergence"
            )
        kl_div = estimate_KL_grid(
            gibbs_target(cd.box, lam, loss_at),
            grid_points=cfg.grid_points,
            posterior_samples=posterior_samples,
            log_z=log_z_kl,
        )
    kl_res = kl_bound(
        traj.N,
        cfg.delta,
        lam,
        cd.m,
        cd.mu_max,
        float(w_kl @ cd.G),
        kl_div,
        psi_term_mean=cd.psi_term_mean,
    )

    lam_r = cfg.renyi_gibbs_lambda
    lw_r = -lam_r * losses
    w_r = _softmax(lw_r)
    d_r = estimate_Dr(losses, lam_r, cfg.r)
    ren_res = renyi_bound(
        traj.N,
        cfg.delta,
        cfg.r,
        cd.m,
        cd.mu_max,
        float(w_r @ cd.G),
        d_r,
        cd.e_pi_ge_2r,
    )
    return BoundEvaluation(
        mode_value=cd.mode.value,
        N=traj.N,
        data_seed=traj.seed,
        kl=kl_res,
        renyi=ren_res,
        post_empirical_kl=float(w_kl @ losses),
        post_empirical_renyi=float(w_r @ losses),
        post_loss_kl=float(w_kl @ cd.L),
        post_loss_renyi=float(w_r @ cd.L),
        log_z_kl=log_z_kl,
        log_z_renyi=estimate_logZ(losses, lam_r),
        kl_div=kl_div,
        d_r=d_r,
    )


@dataclass(frozen=True)
class CertificationRow:
    """One (class, N) line of a certification run."""

    evaluation: BoundEvaluation
    chain_kl: PosteriorChain | None
    chain_renyi: PosteriorChain | None


def _chain_seed(base: int, N: int, kind: int, mode_idx: int) -> int:
    return (base * 1_000_003 + N * 4 + kind * 2 + mode_idx) & 0x7FFFFFFF


def _run_chain(
    box: ParamBox, traj: Trajectory, lam: float, n_kept: int, seed: int
) -> PosteriorChain:
    n_steps = max(math.ceil(n_kept / 0.9), 10)

    def batch_loss(thetas):
        return batch_empirical_loss(*box.materialize_batch(thetas), traj, box.mode)

    def loss_fn(theta):
        return empirical_loss(box.materialize(theta), traj)

    target = gibbs_target(box, lam, batch_loss)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        return mh_sample(target, box.center(), n_steps, seed, loss_fn=loss_fn)


def certify(
    cfg: RunConfig,
    modes=None,
    out_dir=None,
    *,
    write_chains: bool = True,
) -> list[CertificationRow]:
    """Run the full pipeline for every selected class and sample length.

    When out_dir is given, writes bounds.csv (the bound rows),
    certification.csv (posterior empirical losses and certified totals),
    the Metropolis chains, and metadata.json.
    """
    g = cfg.generator
    selected = _select_modes(cfg, modes)
    rows: list[CertificationRow] = []
    meta_classes = {}
    for mode_idx, mode in enumerate(selected):
        box = cfg.classes[mode]
        cd = prepare_class(g, box, cfg)
        meta_classes[mode.value] = {
            "lambda_kl": cd.lam_kl,
            "ge_sup": cd.ge_sup,
            "K_w": cd.k_w,
            "mu_max": cd.mu_max,
            "psi_term_mean": cd.psi_term_mean,
            "e_pi_ge_2r": cd.e_pi_ge_2r,
        }
        for N in cfg.N_values:
            data_seed = cfg.data_seed ^ N
            traj = simulate(g, N, data_seed)
            chain_kl = chain_renyi = None
            post_samples = None
            if write_chains or cd.box.dim > 1:
                chain_kl = _run_chain(
                    box,
                    traj,
                    cd.lam_kl,
                    cfg.posterior_samples,
                    _chain_seed(cfg.estimator_seed, N, 0, mode_idx),
                )
                chain_renyi = _run_chain(
                    box,
                    traj,
                    cfg.renyi_gibbs_lambda,
                    cfg.posterior_samples,
                    _chain_seed(cfg.estimator_seed, N, 1, mode_idx),
                )
                post_samples = chain_kl.samples
            ev = evaluate_bounds(g, cd, cfg, traj, posterior_samples=post_samples)
            rows.append(CertificationRow(ev, chain_kl, chain_renyi))
    if out_dir is not None:
        _write_certification(cfg, rows, meta_classes, Path(out_dir))
    return rows


def _select_modes(cfg: RunConfig, modes) -> list[FeatureMode]:
    if modes is None:
        selected = list(cfg.classes)
    else:
        selected = [m if isinstance(m, FeatureMode) else FeatureMode.parse(m) for m in modes]
        missing = [m.value for m in selected if m not in cfg.classes]
        if missing:
            raise InputError(f"configuration defines no class for mode(s) {missing}")
    return selected


def _write_certification(cfg, rows, meta_classes, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    results = []
    for row in rows:
        results.append(row.evaluation.kl)
        results.append(row.evaluation.renyi)
    bound_results_to_csv(results, out / "bounds.csv")

    with open(out / "certification.csv", "w", newline="") as fh:
        fh.write(
            "mode,N,kind,posterior_empirical,r_hat,certified_total,"
            "posterior_loss,covered\n"
        )
        for row in rows:
            ev = row.evaluation
            for kind, emp, res, true_loss in (
                ("KL", ev.post_empirical_kl, ev.kl, ev.post_loss_kl),
                ("Renyi", ev.post_empirical_renyi, ev.renyi, ev.post_loss_renyi),
            ):
                fh.write(
                    f"{ev.mode_value},{ev.N},{kind},{emp!r},{res.r_hat!r},"
                    f"{emp + res.r_hat!r},{true_loss!r},"
                    f"{int(true_loss <= emp + res.r_hat)}\n"
                )

    chain_dir = out / "chains"
    for row in rows:
        ev = row.evaluation
        for kind, chain in (("kl", row.chain_kl), ("renyi", row.chain_renyi)):
            if chain is not None:
                chain_dir.mkdir(exist_ok=True)
                chain_to_csv(
                    chain, chain_dir / f"chain_{ev.mode_value}_N{ev.N}_{kind}.csv"
                )

    meta = {
        "backend": kernels.BACKEND,
        "delta": cfg.delta,
        "r": cfg.r,
        "renyi_gibbs_lambda": cfg.renyi_gibbs_lambda,
        "N_values": list(cfg.N_values),
        "data_seed": cfg.data_seed,
        "estimator_seed": cfg.estimator_seed,
        "prior_samples": cfg.prior_samples,
        "posterior_samples": cfg.posterior_samples,
        "grid_points": cfg.grid_points,
        "classes": meta_classes,
    }
    with open(out / "metadata.json", "w") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


@dataclass(frozen=True)
class CoverageResult:
    mode_value: str
    N: int
    delta: float
    trials: tuple
    kl_rate: float
    renyi_rate: float


_COVERAGE_CTX: dict = {}


def _coverage_trial(args) -> BoundEvaluation:
    trial = args
    g = _COVERAGE_CTX["g"]
    cd = _COVERAGE_CTX["cd"]
    cfg = _COVERAGE_CTX["cfg"]
    N = _COVERAGE_CTX["N"]
    base_seed = _COVERAGE_CTX["base_seed"]
    traj = simulate(g, N, base_seed + trial)
    return evaluate_bounds(g, cd, cfg, traj)


def coverage(
    cfg: RunConfig,
    mode,
    n_trials: int,
    base_seed: int,
    N: int = 200,
    *,
    jobs: int = 1,
    out_dir=None,
) -> CoverageResult:
    """Fraction of independent trajectories on which each bound covers.

    Each trial t simulates a fresh trajectory with seed base_seed + t and
    checks posterior_loss <= posterior_empirical + r_hat for both bounds.
    The box must have a single parameter here (no chains are run).
    """
    if n_trials < 1:
        raise InputError(f"need n_trials >= 1, got {n_trials}")
    mode = mode if isinstance(mode, FeatureMode) else FeatureMode.parse(mode)
    if mode not in cfg.classes:
        raise InputError(f"configuration defines no class for mode {mode.value}")
    box = cfg.classes[mode]
    if box.dim != 1:
        raise InputError("coverage runs need a one-parameter class")
    cd = prepare_class(cfg.generator, box, cfg)
    _COVERAGE_CTX.update(
        {"g": cfg.generator, "cd": cd, "cfg": cfg, "N": N, "base_seed": base_seed}
    )
    try:
        if jobs > 1 and multiprocessing.get_start_method(allow_none=False) == "fork":
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                trials = list(pool.map(_coverage_trial, range(n_trials), chunksize=8))
        else:
            trials = [_coverage_trial(t) for t in range(n_trials)]
    finally:
        _COVERAGE_CTX.clear()
    kl_rate = sum(t.kl_covered for t in trials) / n_trials
    renyi_rate = sum(t.renyi_covered for t in trials) / n_trials
    result = CoverageResult(
        mode_value=mode.value,
        N=N,
        delta=cfg.delta,
        trials=tuple(trials),
        kl_rate=kl_rate,
        renyi_rate=renyi_rate,
    )
    if out_dir is not None:
        _write_coverage(result, base_seed, Path(out_dir))
    return result


def _write_coverage(result: CoverageResult, base_seed: int, out: Path) -> None:
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"coverage_{result.mode_value}.csv", "w", newline="") as fh:
        fh.write(
            "trial,seed,kind,posterior_empirical,r_hat,posterior_loss,covered\n"
        )
        for t, ev in enumerate(result.trials):
            for kind, emp, res, true_loss, cov in (
                ("KL", ev.post_empirical_kl, ev.kl, ev.post_loss_kl, ev.kl_covered),
                (
                    "Renyi",
                    ev.post_empirical_renyi,
                    ev.renyi,
                    ev.post_loss_renyi,
                    ev.renyi_covered,
                ),
            ):
                fh.write(
                    f"{t},{base_seed + t},{kind},{emp!r},{res.r_hat!r},"
                    f"{true_loss!r},{int(cov)}\n"
                )


_PLOT_SCRIPT = '''"""Plot certified bounds against sample length from fig1_data.csv.

Run from the directory containing fig1_data.csv; needs matplotlib.
"""

import csv
from collections import defaultdict

import matplotlib.pyplot as plt

rows = defaultdict(list)
with open("fig1_data.csv") as fh:
    for row in csv.DictReader(fh):
        rows[row["mode"]].append(row)

curves = [
    ("kl_certified_total", "KL certified total", "tab:blue", "o-"),
    ("renyi_certified_total", "Renyi certified total", "tab:red", "s-"),
    ("renyi_posterior_empirical", "posterior empirical loss", "black", "--"),
    ("renyi_posterior_loss", "posterior generalization loss", "gray", ":"),
]
modes = sorted(rows)
fig, axes = plt.subplots(1, len(modes), figsize=(6 * len(modes), 4.5), squeeze=False)
for ax, mode in zip(axes[0], modes):
    pts = sorted(rows[mode], key=lambda r: int(r["N"]))
    Ns = [int(r["N"]) for r in pts]
    for column, label, color, style in curves:
        ax.loglog(Ns, [float(r[column]) for r in pts], style, color=color,
                  label=label)
    ax.set_xlabel("N")
    ax.set_ylabel("loss")
    ax.set_title(mode)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend()
fig.tight_layout()
fig.savefig("fig1.png", dpi=150)
print("wrote fig1.png")
'''


def reproduce_example(
    cfg: RunConfig, out_dir, modes=None, *, write_chains: bool = True
) -> list[CertificationRow]:
    """Certification sweep over N for the example study, with plot data.

    Writes everything certify writes, plus fig1_data.csv and a standalone
    plot_fig1.py script (matplotlib needed only to run that script).
    """
    out = Path(out_dir)
    rows = certify(cfg, modes=modes, out_dir=out, write_chains=write_chains)
    # One row per (mode, N) holding all four curves of the example figure,
    # for each of the two posteriors (the KL bound's and the Renyi bound's).
    with open(out / "fig1_data.csv", "w", newline="") as fh:
        fh.write(
            "mode,N,kl_posterior_empirical,kl_posterior_loss,kl_r_hat,"
            "kl_certified_total,renyi_posterior_empirical,renyi_posterior_loss,"
            "renyi_r_hat,renyi_certified_total\n"
        )
        for row in rows:
            ev = row.evaluation
            fh.write(
                f"{ev.mode_value},{ev.N},"
                f"{ev.post_empirical_kl!r},{ev.post_loss_kl!r},"
                f"{ev.kl.r_hat!r},{ev.post_empirical_kl + ev.kl.r_hat!r},"
                f"{ev.post_empirical_renyi!r},{ev.post_loss_renyi!r},"
                f"{ev.renyi.r_hat!r},{ev.post_empirical_renyi + ev.renyi.r_hat!r}\n"
            )
    with open(out / "plot_fig1.py", "w") as fh:
        fh.write(_PLOT_SCRIPT)
    return rows
