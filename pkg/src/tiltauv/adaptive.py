"""Model-update mechanisms for the two cascade loops.

The pose loop never estimates anything: its input matrix is recomputed from
the measured attitude every cycle (feedforward_gamma).  The velocity loop
estimates its increment-form matrices online: with Theta = [A | B] and the
regressor X_k = [x_k; du_k], the one-step prediction error

    xt_{k+1} = x_{k+1}^measured - Theta_hat X_k

drives the gradient update  Theta_hat += gain * xt_{k+1} X_k^T,  applied
only while  gain * ||X_k||^2 <= 2 - alpha  (alpha in [0, 2]).  Under that
gate the parameter error is non-increasing for a noiseless linear plant,
which is what keeps the adaptation from destabilizing itself.  A gate
violation is not an error; the update is skipped (or, with the 'scale'
policy, applied with the gain reduced to the gate boundary).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import Pose, kinematic_jacobian
from .mpc import AugmentedModel

GATE_POLICIES = ("skip", "scale")


@dataclass
class EstimatedModel:
    """Estimate of the increment-form [A | B] block and its update state."""

    theta_hat: np.ndarray
    gain: float = 0.05          # adaptation gain (the law's lambda)
    alpha: float = 0.5          # gate margin in [0, 2]
    gate_policy: str = "skip"
    update_count: int = 0
    skip_count: int = 0
    last_gate_applied: bool = field(default=False, repr=False)
    last_prediction_error: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.theta_hat = np.array(self.theta_hat, dtype=float)
        if self.theta_hat.ndim != 2:
            raise ValueError("theta_hat must be a matrix")
        if not np.all(np.isfinite(self.theta_hat)):
            raise ValueError("theta_hat must be finite")
        if self.gain <= 0.0:
            raise ValueError("gain must be positive")
        if not 0.0 <= self.alpha <= 2.0:
            raise ValueError("alpha must lie in [0, 2]")
        if self.gate_policy not in GATE_POLICIES:
            raise ValueError(f"gate_policy must be one of {GATE_POLICIES}")

    @property
    def n_rows(self):
        return self.theta_hat.shape[0]

    @property
    def n_regressor(self):
        return self.theta_hat.shape[1]

    def predict(self, regressor):
        return self.theta_hat @ regressor

    def split(self):
        """(A_hat, B_hat) views of the packed parameter block."""
        n = self.n_rows
        return self.theta_hat[:, :n], self.theta_hat[:, n:]


@dataclass
class RegressorSample:
    """One transition (x_k, du_k, x_{k+1}) of the augmented velocity model."""

    x_k: np.ndarray
    delta_u_k: np.ndarray
    x_next_measured: np.ndarray

    def __post_init__(self):
        self.x_k = np.asarray(self.x_k, dtype=float).ravel()
        self.delta_u_k = np.asarray(self.delta_u_k, dtype=float).ravel()
        self.x_next_measured = np.asarray(self.x_next_measured, dtype=float).ravel()
        if self.x_next_measured.shape != self.x_k.shape:
            raise ValueError("x_next_measured must match x_k")

    def regressor(self):
        return np.concatenate([self.x_k, self.delta_u_k])


def feedforward_gamma(eta: Pose, dt: float, dofs=(0, 1, 2, 3, 4, 5)) -> np.ndarray:
    """Pose-loop input matrix J(eta) * dt restricted to the selected DOFs."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    idx = np.asarray(tuple(dofs), dtype=int)
    return dt * kinematic_jacobian(eta)[np.ix_(idx, idx)]


def adaptive_update(est: EstimatedModel, sample: RegressorSample) -> EstimatedModel:
    """Apply one gated update in place; returns est for chaining.

    est.last_* diagnostics: gate_applied (bool), prediction_error (vector).
    """
    x_reg = sample.regressor()
    if x_reg.shape != (est.n_regressor,):
        raise ValueError(
            f"regressor dim {x_reg.shape[0]} does not match theta columns "
            f"{est.n_regressor}")
    error = sample.x_next_measured - est.predict(x_reg)
    norm_sq = float(x_reg @ x_reg)

    gate_ok = est.gain * norm_sq <= 2.0 - est.alpha
    if gate_ok:
        est.theta_hat += est.gain * np.outer(error, x_reg)
        est.update_count += 1
    elif est.gate_policy == "scale" and norm_sq > 0.0:
        est.theta_hat += ((2.0 - est.alpha) / norm_sq) * np.outer(error, x_reg)
        est.update_count += 1
        gate_ok = True
    else:
        est.skip_count += 1

    est.last_gate_applied = gate_ok
    est.last_prediction_error = error
    return est


def estimation_error_norm(est: EstimatedModel, true_model: AugmentedModel) -> float:
    """Frobenius norm of [A - A_hat | B - B_hat]."""
    truth = true_model.theta()
    if truth.shape != est.theta_hat.shape:
        raise ValueError(
            f"true model block {truth.shape} does not match estimate "
            f"{est.theta_hat.shape}")
    return float(np.linalg.norm(truth - est.theta_hat))
