"""Closed-loop controllers: the adaptive cascade and its two baselines.

The cascade runs two incremental MPC loops at the same rate.  The outer
(pose) loop treats body velocity as its input; its model is exact by
construction (pose integrates J(eta) u), so instead of estimating anything
it recomputes its input matrix from the measured attitude every cycle.  The
inner (velocity) loop treats the wrench as its input; its matrices depend on
hydrodynamic terms that cannot be measured, so it re-linearizes its analytic
model at the measured velocity each cycle and keeps an additively adapted
correction on top, updated from one-step prediction errors through the gated
law in tiltauv.adaptive.  The outer loop's solution becomes the inner loop's
velocity reference (zero-order hold across the horizon).

The plain-MPC baseline is the identical cascade with both mechanisms frozen
at their initial values; the PID baseline maps pose error straight to wrench
components.  All controllers consume the same feedback and emit the wrench
components of their task's DOF subset; the caller reports back the actually
applied wrench (post saturation) so increment bookkeeping and the adaptive
regressor stay consistent with reality.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adaptive import EstimatedModel, RegressorSample, adaptive_update, feedforward_gamma
from .model import BodyVelocity, ModelParams, Pose, discretize, wrap_angle
from .mpc import AugmentedModel, MpcConfig, augment, solve_step

ANGULAR_DOFS = (3, 4, 5)


def dof_difference(curr, prev, dofs):
    """Component-wise difference, wrapped on the angular DOFs."""
    out = np.asarray(curr, dtype=float) - np.asarray(prev, dtype=float)
    for i, dof in enumerate(dofs):
        if dof in ANGULAR_DOFS:
            out[i] = wrap_angle(out[i])
    return out


def biased_phi2(pair_phi2, bias_factor):
    """Scale phi2's deviation from the identity by (1 + bias_factor)."""
    eye = np.eye(pair_phi2.shape[0])
    return eye - (1.0 + bias_factor) * (eye - pair_phi2)


def model_from_theta(theta, n_state, n_output) -> AugmentedModel:
    """Rebuild an increment-form model from a packed [A | B] block."""
    n_aug = n_state + n_output
    a = theta[:, :n_aug]
    b = theta[:, n_aug:]
    c = np.hstack([np.zeros((n_output, n_state)), np.eye(n_output)])
    return AugmentedModel(a=a, b=b, c=c, n_state=n_state, n_output=n_output)


@dataclass
class AdaptiveConfig:
    gain: float = 0.05
    alpha: float = 0.5
    gate_policy: str = "skip"


@dataclass
class CascadeConfig:
    """Everything both cascade controllers share."""

    dofs: tuple
    params: ModelParams            # the controller's believed parameter set
    outer: MpcConfig = field(default_factory=MpcConfig)
    inner: MpcConfig = field(default_factory=MpcConfig)
    adaptive: AdaptiveConfig = field(default_factory=AdaptiveConfig)
    phi2_bias: float = 0.0         # multiplicative error on phi2's decay terms

    def __post_init__(self):
        self.dofs = tuple(int(d) for d in self.dofs)
        if self.outer.dt != self.inner.dt:
            raise ValueError("outer and inner loops must share the sampling time")


class CascadeController:
    """FF-AMPC when both update mechanisms are on; plain MPC when frozen."""

    def __init__(self, config: CascadeConfig, initial_eta: Pose,
                 initial_u: BodyVelocity, feedforward=True, adaptation=True):
        self.config = config
        self.feedforward = feedforward
        self.adaptation = adaptation
        self.dofs = config.dofs
        self._idx = np.asarray(config.dofs, dtype=int)
        self._initial_eta = initial_eta
        self._initial_u = initial_u
        self.reset()

    # -- lifecycle -----------------------------------------------------

    def reset(self):
        """Back to the as-constructed state; reruns are bit-identical."""
        cfg = self.config
        n = len(cfg.dofs)
        self._frozen_gamma1 = feedforward_gamma(self._initial_eta,
                                                cfg.outer.dt, cfg.dofs)
        analytic0 = self._analytic_inner(self._initial_u)
        self._frozen_inner = analytic0
        self.estimate = EstimatedModel(
            theta_hat=analytic0.theta().copy(),
            gain=cfg.adaptive.gain,
            alpha=cfg.adaptive.alpha,
            gate_policy=cfg.adaptive.gate_policy,
        )
        self._correction = np.zeros_like(self.estimate.theta_hat)
        self._prev_eta_sel = self._initial_eta.as_array()[self._idx].copy()
        self._prev_u_sel = self._initial_u.as_array()[self._idx].copy()
        self._tau_applied = np.zeros(n)
        self._delta_tau_applied = np.zeros(n)
        self._x2_prev = None
        self._pending_commit = None

    @property
    def horizon(self):
        return self.config.outer.np_horizon

    def notify_applied(self, tau_applied):
        """Report the wrench that actually reached the plant this step."""
        self._commit(np.asarray(tau_applied, dtype=float))
        self._pending_commit = None

    def _commit(self, tau):
        self._delta_tau_applied = tau - self._tau_applied
        self._tau_applied = tau.copy()

    # -- model bookkeeping ----------------------------------------------

    def _analytic_inner(self, vel: BodyVelocity) -> AugmentedModel:
        pair = discretize(self.config.params, vel, self.config.inner.dt,
                          dofs=self.config.dofs)
        phi2 = biased_phi2(pair.phi2, self.config.phi2_bias)
        return augment(phi2, pair.gamma2)

    def estimated_theta(self) -> np.ndarray:
        """Current inner-loop [A | B] (adapted or frozen)."""
        if self.adaptation:
            return self.estimate.theta_hat.copy()
        return self._frozen_inner.theta().copy()

    # -- one control cycle ----------------------------------------------

    def step(self, eta_ref_seq, eta_fb: Pose, u_fb: BodyVelocity):
        """One cycle: returns (wrench components on the task DOFs, diag)."""
        if self._pending_commit is not None:
            self._commit(self._pending_commit)
            self._pending_commit = None

        cfg = self.config
        n = len(cfg.dofs)
        refs = np.asarray(eta_ref_seq, dtype=float).reshape(cfg.outer.np_horizon, n)
        eta_sel = eta_fb.as_array()[self._idx]
        u_sel = u_fb.as_array()[self._idx]

        # measured increment-form states
        x1 = np.concatenate([dof_difference(eta_sel, self._prev_eta_sel, cfg.dofs),
                             eta_sel])
        x2 = np.concatenate([u_sel - self._prev_u_sel, u_sel])

        # adaptive layer: refresh the analytic part, put the learned
        # correction on top, then absorb the newest transition
        gate = -1
        if self.adaptation:
            analytic = self._analytic_inner(u_fb)
            self.estimate.theta_hat = analytic.theta() + self._correction
            if self._x2_prev is not None:
                sample = RegressorSample(self._x2_prev, self._delta_tau_applied, x2)
                adaptive_update(self.estimate, sample)
                gate = int(self.estimate.last_gate_applied)
                self._correction = self.estimate.theta_hat - analytic.theta()
            inner_model = model_from_theta(self.estimate.theta_hat, n, n)
        else:
            inner_model = self._frozen_inner

        # outer loop: pose -> velocity target
        gamma1 = (feedforward_gamma(eta_fb, cfg.outer.dt, cfg.dofs)
                  if self.feedforward else self._frozen_gamma1)
        outer_model = augment(np.eye(n), gamma1)
        sol1 = solve_step(outer_model, cfg.outer, x1, refs)
        u_r = u_sel + sol1.first_increment

        # inner loop: velocity target -> wrench increment
        inner_refs = np.tile(u_r, (cfg.inner.np_horizon, 1))
        sol2 = solve_step(inner_model, cfg.inner, x2, inner_refs)
        tau = self._tau_applied + sol2.first_increment

        # bookkeeping for the next cycle
        self._prev_eta_sel = eta_sel.copy()
        self._prev_u_sel = u_sel.copy()
        self._x2_prev = x2
        self._pending_commit = tau.copy()

        diag = {
            "u_r": u_r.copy(),
            "gate": gate,
            "delta_tau": sol2.first_increment.copy(),
            "outer_kkt": sol1.kkt_residual,
            "inner_kkt": sol2.kkt_residual,
        }
        return tau, diag


def ffampc_controller(config, initial_eta, initial_u) -> CascadeController:
    return CascadeController(config, initial_eta, initial_u,
                             feedforward=True, adaptation=True)


def mpc_controller(config, initial_eta, initial_u) -> CascadeController:
    """Identical cascade with the model frozen at its initial values."""
    return CascadeController(config, initial_eta, initial_u,
                             feedforward=False, adaptation=False)


@dataclass
class PidConfig:
    """Parallel-form gains per controlled DOF."""

    kp: tuple
    ki: tuple
    kd: tuple
    integral_clamp: float = 5.0
    derivative_filter: float = 0.5  # pole of the derivative low-pass in [0, 1)
    dt: float = 0.05

    def __post_init__(self):
        self.kp = tuple(float(v) for v in self.kp)
        self.ki = tuple(float(v) for v in self.ki)
        self.kd = tuple(float(v) for v in self.kd)
        if not (len(self.kp) == len(self.ki) == len(self.kd)):
            raise ValueError("kp, ki, kd must have equal lengths")
        if self.integral_clamp <= 0.0:
            raise ValueError("integral clamp must be positive")
        if not 0.0 <= self.derivative_filter < 1.0:
            raise ValueError("derivative filter must lie in [0, 1)")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


class PidController:
    """Pose-error PID mapped directly onto the task's wrench components."""

    def __init__(self, config: PidConfig, dofs):
        if len(config.kp) != len(dofs):
            raise ValueError("gain vectors must match the DOF count")
        self.config = config
        self.dofs = tuple(int(d) for d in dofs)
        self._idx = np.asarray(self.dofs, dtype=int)
        self.reset()

    def reset(self):
        n = len(self.dofs)
        self._integral = np.zeros(n)
        self._prev_error = None
        self._deriv = np.zeros(n)

    @property
    def horizon(self):
        return 1

    def notify_applied(self, tau_applied):
        pass

    def step(self, eta_ref_seq, eta_fb: Pose, u_fb: BodyVelocity):
        cfg = self.config
        ref_now = np.asarray(eta_ref_seq, dtype=float).reshape(-1, len(self.dofs))[0]
        error = dof_difference(ref_now, eta_fb.as_array()[self._idx], self.dofs)

        self._integral = np.clip(self._integral + error * cfg.dt,
                                 -cfg.integral_clamp, cfg.integral_clamp)
        raw = (np.zeros_like(error) if self._prev_error is None
               else (error - self._prev_error) / cfg.dt)
        a = cfg.derivative_filter
        self._deriv = a * self._deriv + (1.0 - a) * raw
        self._prev_error = error

        tau = (np.array(cfg.kp) * error
               + np.array(cfg.ki) * self._integral
               + np.array(cfg.kd) * self._deriv)
        diag = {"u_r": np.full(len(self.dofs), np.nan), "gate": -1,
                "delta_tau": np.full(len(self.dofs), np.nan),
                "outer_kkt": np.nan, "inner_kkt": np.nan}
        return tau, diag
