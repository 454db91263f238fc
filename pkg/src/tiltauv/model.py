"""Rigid-body hydrodynamic model of the vehicle.

6-DOF equations of motion in the body frame,

    M u' + C(u) u + D(u) u = tau_E + tau,
    eta' = J(eta) u,

with a diagonal mass matrix (rigid body plus added mass), velocity-dependent
Coriolis coupling, diagonal linear+quadratic damping and zero restoring
forces (the vehicle is neutrally buoyant with coincident centers of mass and
buoyancy).  The truth plant integrates these with fixed-step RK4; the
controller-side discretization is forward Euler, so the two deliberately do
not match exactly.

Conventions: body x forward (surge), y starboard (sway), z down-ish (heave);
attitude as ZYX Euler angles (roll phi, pitch theta, yaw psi), wrapped to
(-pi, pi].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

DOF_NAMES = ("x", "y", "z", "roll", "pitch", "yaw")
VEL_NAMES = ("u", "v", "w", "p", "q", "r")

GIMBAL_MARGIN = 1e-6  # pitch must stay this far from +/- pi/2


class GimbalLockError(ValueError):
    """Pitch too close to +/- pi/2 for the Euler-rate map."""


def wrap_angle(a):
    """Wrap angle(s) to (-pi, pi]."""
    w = np.mod(np.asarray(a, dtype=float) + np.pi, 2.0 * np.pi) - np.pi
    w = np.where(w == -np.pi, np.pi, w)
    return float(w) if np.isscalar(a) else w


def skew(v):
    """3x3 cross-product matrix: skew(a) @ b == cross(a, b)."""
    return np.array([
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ])


@dataclass
class Pose:
    """Position and ZYX Euler attitude in the inertial frame [m, rad]."""

    x: float = 0.0
    y: float = 0.0
    z: float = 0.0
    phi: float = 0.0
    theta: float = 0.0
    psi: float = 0.0

    def __post_init__(self):
        self.phi = wrap_angle(self.phi)
        self.theta = wrap_angle(self.theta)
        self.psi = wrap_angle(self.psi)

    def as_array(self):
        return np.array([self.x, self.y, self.z, self.phi, self.theta, self.psi])

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))


@dataclass
class BodyVelocity:
    """Linear [m/s] and angular [rad/s] velocity in the body frame."""

    u: float = 0.0
    v: float = 0.0
    w: float = 0.0
    p: float = 0.0
    q: float = 0.0
    r: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("body velocity components must be finite")

    def as_array(self):
        return np.array([self.u, self.v, self.w, self.p, self.q, self.r])

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))


@dataclass
class Wrench:
    """Body-frame force [N] and moment [N*m] 6-vector."""

    fx: float = 0.0
    fy: float = 0.0
    fz: float = 0.0
    mx: float = 0.0
    my: float = 0.0
    mz: float = 0.0

    def __post_init__(self):
        if not np.all(np.isfinite(self.as_array())):
            raise ValueError("wrench components must be finite")

    def as_array(self):
        return np.array([self.fx, self.fy, self.fz, self.mx, self.my, self.mz])

    @classmethod
    def from_array(cls, a):
        return cls(*(float(v) for v in a))

    def __add__(self, other):
        return Wrench.from_array(self.as_array() + other.as_array())


# Exact key set of the model JSON document.
_MODEL_KEYS = {
    "mass", "inertia", "added_mass", "linear_damping",
    "quadratic_damping", "length_l", "width_d",
}


@dataclass
class ModelParams:
    """Inertia, added-mass and damping description of the vehicle.

    mass [kg], inertia_diag = (Ixx, Iyy, Izz) [kg m^2], six added-mass
    coefficients, six linear and six quadratic damping coefficients
    (diagonal, dissipative), and the mounting geometry lengths l, d [m].
    """

    mass: float
    inertia_diag: tuple
    added_mass_diag: tuple
    linear_damping_diag: tuple
    quadratic_damping_diag: tuple
    length_l: float
    width_d: float

    def __post_init__(self):
        self.inertia_diag = tuple(float(v) for v in self.inertia_diag)
        self.added_mass_diag = tuple(float(v) for v in self.added_mass_diag)
        self.linear_damping_diag = tuple(float(v) for v in self.linear_damping_diag)
        self.quadratic_damping_diag = tuple(float(v) for v in self.quadratic_damping_diag)
        if len(self.inertia_diag) != 3:
            raise ValueError("inertia must have 3 entries (Ixx, Iyy, Izz)")
        for name in ("added_mass_diag", "linear_damping_diag", "quadratic_damping_diag"):
            if len(getattr(self, name)) != 6:
                raise ValueError(f"{name} must have 6 entries")
        m = self.mass_matrix()
        if not np.all(np.linalg.eigvalsh(m) > 0.0):
            raise ValueError("rigid-body + added-mass matrix must be positive definite")
        if min(self.linear_damping_diag) < 0 or min(self.quadratic_damping_diag) < 0:
            raise ValueError("damping coefficients must be non-negative")

    def mass_matrix(self):
        """Diagonal rigid-body + added-mass matrix M (6x6)."""
        rigid = np.array([self.mass] * 3 + list(self.inertia_diag))
        return np.diag(rigid + np.array(self.added_mass_diag))

    def to_dict(self):
        return {
            "mass": self.mass,
            "inertia": list(self.inertia_diag),
            "added_mass": list(self.added_mass_diag),
            "linear_damping": list(self.linear_damping_diag),
            "quadratic_damping": list(self.quadratic_damping_diag),
            "length_l": self.length_l,
            "width_d": self.width_d,
        }

    @classmethod
    def from_dict(cls, d):
        keys = set(d)
        if keys != _MODEL_KEYS:
            missing = sorted(_MODEL_KEYS - keys)
            extra = sorted(keys - _MODEL_KEYS)
            raise ValueError(f"model document keys mismatch: missing {missing}, unexpected {extra}")
        return cls(
            mass=float(d["mass"]),
            inertia_diag=tuple(d["inertia"]),
            added_mass_diag=tuple(d["added_mass"]),
            linear_damping_diag=tuple(d["linear_damping"]),
            quadratic_damping_diag=tuple(d["quadratic_damping"]),
            length_l=float(d["length_l"]),
            width_d=float(d["width_d"]),
        )

    @classmethod
    def load(cls, path):
        with open(path) as f:
            return cls.from_dict(json.load(f))

    @classmethod
    def canonical(cls):
        """The shipped parameter set all default scenarios are defined on."""
        doc = resources.files("tiltauv").joinpath("data/canonical_model.json")
        return cls.from_dict(json.loads(doc.read_text()))

    def save(self, path):
        with open(path, "w") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")


@dataclass
class LinearModelPair:
    """Controller-side discrete models: pose and velocity loops.

    Pose loop:      eta_{k+1} = phi1 eta_k + gamma1 u_k      (phi1 == I)
    Velocity loop:  u_{k+1}   = phi2 u_k   + gamma2 tau_k

    Both restricted to the task's DOF subset.
    """

    phi1: np.ndarray
    gamma1: np.ndarray
    phi2: np.ndarray
    gamma2: np.ndarray
    dt: float
    dofs: tuple = field(default=(0, 1, 2, 3, 4, 5))


def coriolis_matrix(params: ModelParams, vel: BodyVelocity) -> np.ndarray:
    """Skew-symmetric Coriolis/centripetal matrix C(u) for diagonal M."""
    m = params.mass_matrix()
    nu = vel.as_array()
    s1 = skew(np.diag(m)[:3] * nu[:3])   # (m + added) * linear velocity
    s2 = skew(np.diag(m)[3:] * nu[3:])   # (I + added) * angular velocity
    c = np.zeros((6, 6))
    c[:3, 3:] = -s1
    c[3:, :3] = -s1
    c[3:, 3:] = -s2
    return c


def damping_matrix(params: ModelParams, vel: BodyVelocity) -> np.ndarray:
    """Diagonal damping D(u) with entries lin_i + quad_i * |u_i|."""
    nu = vel.as_array()
    lin = np.array(params.linear_damping_diag)
    quad = np.array(params.quadratic_damping_diag)
    return np.diag(lin + quad * np.abs(nu))


def rotation_matrix(phi, theta, psi):
    """Body-to-inertial ZYX rotation."""
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array([
        [cp * ct, -sp * cf + cp * st * sf, sp * sf + cp * cf * st],
        [sp * ct, cp * cf + sf * st * sp, -cp * sf + st * sp * cf],
        [-st, ct * sf, ct * cf],
    ])


def euler_rate_matrix(phi, theta):
    """Body angular rate -> Euler angle rate map T(phi, theta)."""
    cf, sf = np.cos(phi), np.sin(phi)
    ct, tt = np.cos(theta), np.tan(theta)
    return np.array([
        [1.0, sf * tt, cf * tt],
        [0.0, cf, -sf],
        [0.0, sf / ct, cf / ct],
    ])


def kinematic_jacobian(eta: Pose) -> np.ndarray:
    """Block-diagonal J(eta) mapping body velocity to pose rate.

    Raises GimbalLockError when pitch is within GIMBAL_MARGIN of +/- pi/2.
    """
    if abs(abs(eta.theta) - np.pi / 2.0) < GIMBAL_MARGIN:
        raise GimbalLockError(f"pitch {eta.theta:.8f} rad too close to +/- pi/2")
    j = np.zeros((6, 6))
    j[:3, :3] = rotation_matrix(eta.phi, eta.theta, eta.psi)
    j[3:, 3:] = euler_rate_matrix(eta.phi, eta.theta)
    return j


def acceleration(params: ModelParams, eta: Pose, vel: BodyVelocity,
                 tau: Wrench, tau_e: Wrench) -> np.ndarray:
    """Body-frame acceleration u' = M^-1 (tau + tau_E - C u - D u)."""
    nu = vel.as_array()
    rhs = tau.as_array() + tau_e.as_array() \
        - coriolis_matrix(params, vel) @ nu \
        - damping_matrix(params, vel) @ nu
    return rhs / np.diag(params.mass_matrix())


def step_plant(params: ModelParams, eta: Pose, vel: BodyVelocity,
               tau: Wrench, tau_e: Wrench, dt: float):
    """Advance (eta, u) one classic RK4 step under constant applied wrench.

    Returns the new (Pose, BodyVelocity); angles are wrapped after the step.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")

    tau_total = tau.as_array() + tau_e.as_array()
    m_diag = np.diag(params.mass_matrix())

    def deriv(x):
        eta_vec, nu_vec = x[:6], x[6:]
        p = Pose(*eta_vec)  # wrapping mid-stage is harmless, J is 2pi-periodic
        vel_k = BodyVelocity.from_array(nu_vec)
        eta_dot = kinematic_jacobian(p) @ nu_vec
        nu_dot = (tau_total
                  - coriolis_matrix(params, vel_k) @ nu_vec
                  - damping_matrix(params, vel_k) @ nu_vec) / m_diag
        return np.concatenate([eta_dot, nu_dot])

    x0 = np.concatenate([eta.as_array(), vel.as_array()])
    k1 = deriv(x0)
    k2 = deriv(x0 + 0.5 * dt * k1)
    k3 = deriv(x0 + 0.5 * dt * k2)
    k4 = deriv(x0 + dt * k3)
    x1 = x0 + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)

    new_eta = x1[:6].copy()
    new_eta[3:] = wrap_angle(new_eta[3:])
    return Pose.from_array(new_eta), BodyVelocity.from_array(x1[6:])


def discretize(params: ModelParams, vel_lin: BodyVelocity, dt: float,
               dofs=(0, 1, 2, 3, 4, 5), eta: Pose | None = None) -> LinearModelPair:
    """Forward-Euler state-space pair about a velocity linearization point.

    phi1 = I and gamma1 = J(eta) * dt restricted to the selected DOFs (the
    feedforward layer recomputes gamma1 from measured attitude each cycle;
    eta=None uses level attitude, where J is the identity).  phi2 freezes
    C and D at vel_lin:  phi2 = I - dt M^-1 (C + D),  gamma2 = dt M^-1.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    dofs = tuple(dofs)
    idx = np.asarray(dofs, dtype=int)

    j = np.eye(6) if eta is None else kinematic_jacobian(eta)
    gamma1 = dt * j[np.ix_(idx, idx)]
    phi1 = np.eye(len(dofs))

    m_inv = np.linalg.inv(params.mass_matrix())
    cd = coriolis_matrix(params, vel_lin) + damping_matrix(params, vel_lin)
    phi2_full = np.eye(6) - dt * m_inv @ cd
    gamma2_full = dt * m_inv
    phi2 = phi2_full[np.ix_(idx, idx)]
    gamma2 = gamma2_full[np.ix_(idx, idx)]

    return LinearModelPair(phi1=phi1, gamma1=gamma1, phi2=phi2,
                           gamma2=gamma2, dt=dt, dofs=dofs)


def kinetic_energy(params: ModelParams, vel: BodyVelocity) -> float:
    """0.5 u^T M u [J]; monotonically decays in unforced motion."""
    nu = vel.as_array()
    return 0.5 * float(nu @ params.mass_matrix() @ nu)
