"""Incremental-form MPC with a terminal equality constraint.

A discrete model (phi, gamma) with full state output is lifted into
increment form

    x_{k+1} = A x_k + B du_k,   y_k = C x_k,
    A = [[phi, 0], [phi, I]],   B = [[gamma], [gamma]],   C = [0, I],

where x_k stacks the state increment on top of the output, so the applied
input accumulates increments (integral action).  Each cycle minimizes

    J = (Y - R)^T R1 (Y - R) + dU^T R2 dU

over the stacked increments dU (held at zero beyond the control horizon),
subject to the predicted output meeting its reference exactly at the end of
the control horizon.  The equality-constrained QP is solved through its
dense KKT system; a singular system raises rather than falling back.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class MpcSolverError(RuntimeError):
    """KKT system singular or solved to insufficient accuracy."""


@dataclass
class AugmentedModel:
    """Increment-form (A, B, C) plus the underlying dimensions."""

    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    n_state: int   # underlying model state dimension
    n_output: int  # output dimension (== input dimension here)

    @property
    def n_aug(self):
        return self.n_state + self.n_output

    @property
    def n_input(self):
        return self.b.shape[1]

    def theta(self) -> np.ndarray:
        """[A | B] packed side by side, the adaptive layer's parameter block."""
        return np.hstack([self.a, self.b])


@dataclass
class MpcConfig:
    """Horizons and weights; r2 > 0 keeps the QP strictly convex."""

    np_horizon: int = 20
    nc_horizon: int = 4
    r1_weight: float = 1.0
    r2_weight: float = 0.1
    dt: float = 0.05

    def __post_init__(self):
        if not (1 <= self.nc_horizon <= self.np_horizon):
            raise ValueError("need 1 <= Nc <= Np")
        if self.r1_weight < 0.0 or self.r2_weight <= 0.0:
            raise ValueError("need r1 >= 0 and r2 > 0")
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")


@dataclass
class QpSolution:
    delta_u_sequence: np.ndarray   # (Nc, m) increments
    first_increment: np.ndarray    # (m,) the applied du_k
    predicted_outputs: np.ndarray  # (Np, m)
    kkt_residual: float


def augment(phi: np.ndarray, gamma: np.ndarray) -> AugmentedModel:
    """Lift (phi, gamma) with identity output into increment form."""
    phi = np.atleast_2d(np.asarray(phi, dtype=float))
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    n = phi.shape[0]
    if phi.shape != (n, n):
        raise ValueError("phi must be square")
    if gamma.shape[0] != n:
        raise ValueError("gamma rows must match phi")
    m = n  # identity output map: y is the full model state
    a = np.zeros((n + m, n + m))
    a[:n, :n] = phi
    a[n:, :n] = phi
    a[n:, n:] = np.eye(m)
    b = np.vstack([gamma, gamma])
    c = np.hstack([np.zeros((m, n)), np.eye(m)])
    return AugmentedModel(a=a, b=b, c=c, n_state=n, n_output=m)


def prediction_matrices(model: AugmentedModel, config: MpcConfig):
    """(F, G) with Y = F x_k + G dU for stacked predictions.

    Y stacks y_{k+1..k+Np}; dU stacks the Nc free increments, later ones
    held at zero.
    """
    n_aug, m, nu = model.n_aug, model.n_output, model.n_input
    np_h, nc_h = config.np_horizon, config.nc_horizon

    # c @ a^i rows, built by recursion
    f = np.zeros((np_h * m, n_aug))
    ca = model.c.copy()
    ca_list = []
    for i in range(np_h):
        ca = ca @ model.a
        ca_list.append(ca)
        f[i * m:(i + 1) * m] = ca

    # impulse responses h_j = c a^(j-1) b, j = 1..Np
    h = np.zeros((np_h, m, nu))
    ca = model.c.copy()
    for j in range(np_h):
        h[j] = ca @ model.b
        ca = ca @ model.a

    g = np.zeros((np_h * m, nc_h * nu))
    for i in range(np_h):
        for j in range(min(i + 1, nc_h)):
            g[i * m:(i + 1) * m, j * nu:(j + 1) * nu] = h[i - j]
    return f, g


def solve_step(model: AugmentedModel, config: MpcConfig, x_k: np.ndarray,
               reference_sequence: np.ndarray) -> QpSolution:
    """One receding-horizon solve; returns the full increment plan.

    reference_sequence must hold Np rows of future references; the terminal
    equality pins the predicted output at the control-horizon end to its
    reference.
    """
    x_k = np.asarray(x_k, dtype=float).ravel()
    refs = np.atleast_2d(np.asarray(reference_sequence, dtype=float))
    if refs.ndim == 2 and refs.shape[1] != model.n_output:
        refs = refs.reshape(config.np_horizon, model.n_output)
    if refs.shape != (config.np_horizon, model.n_output):
        raise ValueError(
            f"reference must have {config.np_horizon} rows of dim {model.n_output}")
    if x_k.shape != (model.n_aug,):
        raise ValueError(f"augmented state must have dim {model.n_aug}")

    m, nu, nc_h = model.n_output, model.n_input, config.nc_horizon
    f, g = prediction_matrices(model, config)
    r_stack = refs.ravel()

    r1 = np.full(g.shape[0], config.r1_weight)
    r2 = np.full(g.shape[1], config.r2_weight)

    err0 = f @ x_k - r_stack
    hess = 2.0 * (g.T * r1) @ g + 2.0 * np.diag(r2)
    grad0 = 2.0 * (g.T * r1) @ err0

    # terminal equality: output block at step Nc
    rows = slice((nc_h - 1) * m, nc_h * m)
    a_eq = g[rows]
    b_eq = refs[nc_h - 1] - (f @ x_k)[rows]

    n_var = g.shape[1]
    kkt = np.zeros((n_var + m, n_var + m))
    kkt[:n_var, :n_var] = hess
    kkt[:n_var, n_var:] = a_eq.T
    kkt[n_var:, :n_var] = a_eq
    rhs = np.concatenate([-grad0, b_eq])

    try:
        sol = np.linalg.solve(kkt, rhs)
    except np.linalg.LinAlgError as exc:
        raise MpcSolverError(f"singular KKT system: {exc}") from exc

    # one iterative-refinement pass keeps the residual at solver precision
    sol = sol + np.linalg.solve(kkt, rhs - kkt @ sol)

    du = sol[:n_var]
    lagrange = sol[n_var:]
    grad_res = hess @ du + grad0 + a_eq.T @ lagrange
    eq_res = a_eq @ du - b_eq
    residual = max(np.max(np.abs(grad_res)), np.max(np.abs(eq_res)))
    if not np.isfinite(residual) or residual > 1e-9:
        raise MpcSolverError(f"KKT residual {residual:.3e} exceeds 1e-9")

    y = (f @ x_k + g @ du).reshape(config.np_horizon, m)
    du_seq = du.reshape(nc_h, nu)
    return QpSolution(
        delta_u_sequence=du_seq,
        first_increment=du_seq[0].copy(),
        predicted_outputs=y,
        kkt_residual=float(residual),
    )


def objective_value(model: AugmentedModel, config: MpcConfig, x_k, reference_sequence,
                    delta_u) -> float:
    """Cost of an arbitrary stacked increment plan (for optimality checks)."""
    f, g = prediction_matrices(model, config)
    refs = np.asarray(reference_sequence, dtype=float).reshape(
        config.np_horizon, model.n_output)
    du = np.asarray(delta_u, dtype=float).ravel()
    err = f @ np.asarray(x_k, dtype=float).ravel() + g @ du - refs.ravel()
    return float(config.r1_weight * err @ err + config.r2_weight * du @ du)
