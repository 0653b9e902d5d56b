"""Prediction losses: empirical, infinite-past, and closed-form expectations.

Three quantities are attached to a predictor f on data of length N:

* empirical loss  (1/N) sum_i ||yhat_f(i|0) - y(i)||^2  with the predictor
  started from the zero state (all it can do in practice);
* infinite-past loss  (1/N) sum_i ||y(i) - yhat_f(i)||^2  with the predictor
  state started from its stationary law, jointly with the generator state
  (an unbiased estimate of the generalization loss);
* generalization loss  L(f) = E ||y(t) - yhat_f(t)||^2  in closed form from
  the error system via a Lyapunov equation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DimensionError, InputError
from .lti import FeatureMode, Generator, Predictor, Trajectory, build_error_system, simulate
from .matnum import solve_discrete_lyapunov


def features(traj: Trajectory, mode: FeatureMode) -> np.ndarray:
    """Feature sequence the given mode exposes to a predictor: u or [y, u]."""
    if mode is FeatureMode.INPUT_ONLY:
        return traj.u
    return np.hstack([traj.y, traj.u])


def finite_past_predict(f: Predictor, w: np.ndarray) -> np.ndarray:
    """Run the predictor over w(0..N-1) from the zero state; returns yhat (N, n_y)."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 2 or w.shape[1] != f.n_w:
        raise DimensionError(
            f"feature array must be (N, {f.n_w}), got {w.shape}"
        )
    X = kernels.state_recursion(f.A_hat, f.B_hat, w, np.zeros(f.n_state))
    return X @ f.C_hat.T + w @ f.D_hat.T


def _residual_finite(f: Predictor, traj: Trajectory) -> np.ndarray:
    yhat = finite_past_predict(f, features(traj, f.mode))
    return yhat - traj.y


def empirical_loss(f: Predictor, traj: Trajectory) -> float:
    """Mean squared prediction error from the zero initial predictor state."""
    r = _residual_finite(f, traj)
    return float(np.mean(np.sum(r**2, axis=1)))


def empirical_loss_components(f: Predictor, traj: Trajectory) -> np.ndarray:
    """Per-output-component empirical losses; sums to empirical_loss."""
    r = _residual_finite(f, traj)
    return np.mean(r**2, axis=0)


def _check_cosimulated(f: Predictor, traj: Trajectory) -> None:
    if traj.joint_initial_state is None or traj.predictor is None:
        raise InputError(
            "infinite-past loss needs a trajectory co-simulated with the "
            "predictor (simulate(..., predictor=f)); this one carries no "
            "joint initial state"
        )
    p = traj.predictor
    same = (
        p.mode is f.mode
        and p.A_hat.shape == f.A_hat.shape
        and np.array_equal(p.A_hat, f.A_hat)
        and np.array_equal(p.B_hat, f.B_hat)
        and np.array_equal(p.C_hat, f.C_hat)
        and np.array_equal(p.D_hat, f.D_hat)
    )
    if not same:
        raise InputError(
            "trajectory was co-simulated with a different predictor; its "
            "stationary initial state does not apply to this one"
        )


def infinite_past_loss(f: Predictor, traj: Trajectory) -> float:
    """Mean squared error of the stationary predictor run.

    The predictor state is reconstructed from the stored stationary joint
    initial state, so the result is exactly the error the stacked system
    produces along this sample path.
    """
    _check_cosimulated(f, traj)
    xhat0 = traj.joint_initial_state[-f.n_state :]
    w = features(traj, f.mode)
    X = kernels.state_recursion(f.A_hat, f.B_hat, w, xhat0)
    yhat = X @ f.C_hat.T + w @ f.D_hat.T
    r = yhat - traj.y
    return float(np.mean(np.sum(r**2, axis=1)))


def generalization_loss(
    g: Generator, f: Predictor, output_index: int | None = None
) -> float:
    """L(f) = trace(C_e P C_e^T + D_e Q_e D_e^T), P = A_e P A_e^T + K_e Q_e K_e^T.

    With output_index set, only that row of (C_e, D_e) is kept, giving the
    p-th component E (y_p - yhat_p)^2 of the loss.
    """
    err = build_error_system(g, f)
    C_e, D_e = err.C_e, err.D_e
    if output_index is not None:
        if not 0 <= output_index < C_e.shape[0]:
            raise InputError(
                f"output_index {output_index} out of range for n_y={C_e.shape[0]}"
            )
        C_e = C_e[output_index : output_index + 1]
        D_e = D_e[output_index : output_index + 1]
    P = solve_discrete_lyapunov(err.A_e, err.K_e @ g.Q_e @ err.K_e.T)
    return float(np.trace(C_e @ P @ C_e.T + D_e @ g.Q_e @ D_e.T))


def batch_empirical_loss(
    As: np.ndarray,
    Bs: np.ndarray,
    Cs: np.ndarray,
    Ds: np.ndarray,
    traj: Trajectory,
    mode: FeatureMode,
) -> np.ndarray:
    """Empirical losses of a stacked batch of predictors on one trajectory.

    As..Ds are (B, ., .) stacks of predictor matrices sharing the feature
    mode; returns the (B,) vector of empirical losses.
    """
    return kernels.batch_mse(As, Bs, Cs, Ds, features(traj, mode), traj.y)


@dataclass(frozen=True)
class LossReport:
    """One row of a loss evaluation: all three losses for a predictor at N."""

    N: int
    empirical: float
    infinite_past: float
    generalization: float
    seed: int


def evaluate(g: Generator, f: Predictor, N: int, seed: int) -> LossReport:
    """Simulate one co-sampled trajectory and report all three losses."""
    traj = simulate(g, N, seed, predictor=f)
    return LossReport(
        N=N,
        empirical=empirical_loss(f, traj),
        infinite_past=infinite_past_loss(f, traj),
        generalization=generalization_loss(g, f),
        seed=seed,
    )


def loss_reports_to_csv(reports, path) -> None:
    """Write loss reports as CSV: N,empirical,infinite_past,generalization,seed."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "empirical", "infinite_past", "generalization", "seed"])
        for rep in reports:
            writer.writerow(
                [
                    rep.N,
                    repr(rep.empirical),
                    repr(rep.infinite_past),
                    repr(rep.generalization),
                    rep.seed,
                ]
            )
