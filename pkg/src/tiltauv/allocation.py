"""Thrust allocation for the four tilting thrusters.

Each thruster i produces a body wrench  [e_i; L_i x e_i] * f_i  where e_i is
the unit thrust direction (the zero-tilt direction rotated about the tilt
axis by theta_i) and L_i the mounting position.  The canonical layout:

    1: ( 0, +d/2, 0), tilts about +y -> e = (sin t, 0, cos t)
    2: ( 0, -d/2, 0), tilts about +y -> e = (sin t, 0, cos t)
    3: (-l/2,  0, 0), tilts about -x -> e = (0, sin t, cos t)
    4: (+l/2,  0, 0), tilts about -x -> e = (0, sin t, cos t)

so the left/right pair covers surge, heave, roll and yaw, and the front/rear
pair covers sway, heave, pitch and yaw.  Every wrench component is reachable
and the force planes are near-square (a thruster at max force can still be
tilted, so maxing one axis does not zero the others).

Closed-form inverses cover the two controller tasks: a single-axis mode for
the 1-DOF trajectory loop and the (heave, roll, pitch, yaw) mode for the
depth-orientation loop.  Unreachable targets raise SaturationError carrying
the uniform scale factor that puts the request on the feasible boundary and
the correspondingly scaled commands.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import Wrench

WRENCH_AXES = ("fx", "fy", "fz", "mx", "my", "mz")

SCALAR_MODES = ("surge", "sway", "heave", "roll", "pitch", "yaw")
SCALAR_MODE_AXIS = {"surge": 0, "sway": 1, "heave": 2, "roll": 3, "pitch": 4, "yaw": 5}


class AllocationError(ValueError):
    """Commanded thrust violates force or tilt limits."""


class SaturationError(AllocationError):
    """Target wrench outside the feasible set.

    scale:    largest s in (0, 1) with s * target feasible
    commands: the allocator output for the scaled target
    """

    def __init__(self, message, scale, commands):
        super().__init__(message)
        self.scale = scale
        self.commands = commands


@dataclass
class ThrusterGeometry:
    """Mounting positions, tilt axes, zero-tilt directions and limits."""

    positions: np.ndarray       # (4, 3) [m]
    tilt_axes: np.ndarray       # (4, 3) unit vectors
    zero_directions: np.ndarray  # (4, 3) unit vectors
    f_max: float = 5.0          # [N]
    tilt_limit: float = np.pi / 2.0  # [rad]

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.tilt_axes = np.asarray(self.tilt_axes, dtype=float)
        self.zero_directions = np.asarray(self.zero_directions, dtype=float)
        for name in ("positions", "tilt_axes", "zero_directions"):
            if getattr(self, name).shape != (4, 3):
                raise ValueError(f"{name} must have shape (4, 3)")
        norms_a = np.linalg.norm(self.tilt_axes, axis=1)
        norms_z = np.linalg.norm(self.zero_directions, axis=1)
        if np.any(np.abs(norms_a - 1.0) > 1e-12) or np.any(np.abs(norms_z - 1.0) > 1e-12):
            raise ValueError("tilt axes and zero-tilt directions must be unit vectors")
        dots = np.abs(np.sum(self.tilt_axes * self.zero_directions, axis=1))
        if np.any(dots > 1e-12):
            raise ValueError("tilt axis must be orthogonal to the zero-tilt direction")
        if self.f_max <= 0 or self.tilt_limit <= 0:
            raise ValueError("limits must be positive")

    @classmethod
    def canonical(cls, length_l=0.665, width_d=0.57, f_max=5.0, tilt_limit=np.pi / 2.0):
        """Standard layout for body length l and width d."""
        half_l, half_d = length_l / 2.0, width_d / 2.0
        return cls(
            positions=np.array([
                [0.0, half_d, 0.0],
                [0.0, -half_d, 0.0],
                [-half_l, 0.0, 0.0],
                [half_l, 0.0, 0.0],
            ]),
            tilt_axes=np.array([
                [0.0, 1.0, 0.0],
                [0.0, 1.0, 0.0],
                [-1.0, 0.0, 0.0],
                [-1.0, 0.0, 0.0],
            ]),
            zero_directions=np.array([[0.0, 0.0, 1.0]] * 4),
            f_max=f_max,
            tilt_limit=tilt_limit,
        )

    @property
    def half_length(self):
        return float(np.max(np.abs(self.positions[2:, 0])))

    @property
    def half_width(self):
        return float(np.max(np.abs(self.positions[:2, 1])))


@dataclass
class ThrusterCommand:
    """Per-thruster force [N] and tilt [rad]."""

    forces: np.ndarray
    tilts: np.ndarray

    def __post_init__(self):
        self.forces = np.asarray(self.forces, dtype=float)
        self.tilts = np.asarray(self.tilts, dtype=float)
        if self.forces.shape != (4,) or self.tilts.shape != (4,):
            raise ValueError("forces and tilts must be length-4 vectors")

    @classmethod
    def zero(cls):
        return cls(np.zeros(4), np.zeros(4))

    def check_limits(self, geometry: ThrusterGeometry, tol=1e-9):
        for i in range(4):
            if abs(self.forces[i]) > geometry.f_max + tol:
                raise AllocationError(
                    f"thruster {i + 1} force {self.forces[i]:.6f} N exceeds "
                    f"limit {geometry.f_max} N")
            if abs(self.tilts[i]) > geometry.tilt_limit + tol:
                raise AllocationError(
                    f"thruster {i + 1} tilt {self.tilts[i]:.6f} rad exceeds "
                    f"limit {geometry.tilt_limit} rad")


@dataclass
class EnvelopePlane:
    """A pair of wrench axes plus the per-command grid resolution."""

    axes: tuple
    resolution: int = 33

    def __post_init__(self):
        self.axes = tuple(a.lower() for a in self.axes)
        if len(self.axes) != 2 or self.axes[0] == self.axes[1]:
            raise ValueError("plane needs two distinct axes")
        for a in self.axes:
            if a not in WRENCH_AXES:
                raise ValueError(f"unknown wrench axis {a!r}")
        if self.resolution < 9:
            raise ValueError("resolution must be at least 9 per command dimension")

    @classmethod
    def parse(cls, name, resolution=33):
        """Parse 'fx-fy' style plane names."""
        parts = name.lower().split("-")
        if len(parts) != 2:
            raise ValueError(f"plane name {name!r} must look like 'fx-fy'")
        return cls(axes=tuple(parts), resolution=resolution)

    @property
    def name(self):
        return f"{self.axes[0]}-{self.axes[1]}"

    @property
    def indices(self):
        return WRENCH_AXES.index(self.axes[0]), WRENCH_AXES.index(self.axes[1])


def _rodrigues(axis, v, theta):
    return (v * np.cos(theta)
            + np.cross(axis, v) * np.sin(theta)
            + axis * (axis @ v) * (1.0 - np.cos(theta)))


def thruster_direction(geometry: ThrusterGeometry, i: int, theta: float) -> np.ndarray:
    """Unit thrust direction of thruster i at tilt theta."""
    if abs(theta) > geometry.tilt_limit + 1e-9:
        raise AllocationError(
            f"tilt {theta:.6f} rad exceeds limit {geometry.tilt_limit} rad")
    e = _rodrigues(geometry.tilt_axes[i], geometry.zero_directions[i], theta)
    return e / np.linalg.norm(e)


def thruster_wrench(geometry: ThrusterGeometry, i: int, force: float,
                    theta: float) -> Wrench:
    """Body wrench of a single thruster: force along e, moment L x e * f."""
    if abs(force) > geometry.f_max + 1e-9:
        raise AllocationError(
            f"thruster {i + 1} force {force:.6f} N exceeds limit {geometry.f_max} N")
    e = thruster_direction(geometry, i, theta)
    moment = np.cross(geometry.positions[i], e)
    return Wrench.from_array(force * np.concatenate([e, moment]))


def total_wrench(geometry: ThrusterGeometry, command: ThrusterCommand) -> Wrench:
    """Sum of the four thruster wrenches."""
    command.check_limits(geometry)
    out = np.zeros(6)
    for i in range(4):
        out += thruster_wrench(geometry, i, command.forces[i],
                               command.tilts[i]).as_array()
    return Wrench.from_array(out)


def _saturation_scale(forces, f_max):
    peak = np.max(np.abs(forces))
    if peak <= f_max + 1e-12:
        return 1.0
    return f_max / peak


def allocate_depth_orientation(target, geometry: ThrusterGeometry) -> ThrusterCommand:
    """Invert (Fz, Mx, My, Mz) targets into thruster commands.

    Thrusters 1, 2 stay vertical and split heave/roll; thrusters 3, 4 run
    opposed (f4 = -f3) with a shared tilt so their net force stays zero
    while the pair delivers the pitch/yaw moment.  Raises SaturationError
    with the feasible uniform scale when any force would exceed the limit.
    """
    tau_z, tau_k, tau_m, tau_n = (float(v) for v in target)
    d = 2.0 * geometry.half_width
    l = 2.0 * geometry.half_length

    f1 = tau_z / 2.0 + tau_k / d
    f2 = tau_z / 2.0 - tau_k / d

    rho = np.hypot(tau_m, tau_n) / l
    if tau_m >= 0.0:
        f3 = rho
        theta = np.arctan2(-tau_n, tau_m) if rho > 0.0 else 0.0
    else:
        f3 = -rho
        theta = np.arctan2(tau_n, -tau_m)

    scale = _saturation_scale(np.array([f1, f2, f3]), geometry.f_max)
    command = ThrusterCommand(
        forces=np.array([f1, f2, f3, -f3]) * scale,
        tilts=np.array([0.0, 0.0, theta, theta]),
    )
    if scale < 1.0:
        raise SaturationError(
            f"depth-orientation target {target} unreachable; feasible at scale "
            f"{scale:.6f}", scale, command)
    return command


def allocate_scalar(target: float, geometry: ThrusterGeometry, mode: str) -> ThrusterCommand:
    """Single-axis allocation (one wrench component, all others zero).

    surge/heave/roll/yaw use the left/right pair, sway/pitch the front/rear
    pair; rotational modes run the pair opposed, translational modes run it
    in unison.
    """
    if mode not in SCALAR_MODES:
        raise ValueError(f"unknown mode {mode!r}, expected one of {SCALAR_MODES}")
    target = float(target)
    d = 2.0 * geometry.half_width
    l = 2.0 * geometry.half_length
    half = np.pi / 2.0

    forces = np.zeros(4)
    tilts = np.zeros(4)
    if mode == "surge":
        forces[:2] = target / 2.0
        tilts[:2] = half
    elif mode == "sway":
        forces[2:] = target / 2.0
        tilts[2:] = half
    elif mode == "heave":
        forces[:2] = target / 2.0
    elif mode == "roll":
        forces[0], forces[1] = target / d, -target / d
    elif mode == "pitch":
        forces[2], forces[3] = target / l, -target / l
    elif mode == "yaw":
        forces[0], forces[1] = -target / d, target / d
        tilts[:2] = half

    scale = _saturation_scale(forces, geometry.f_max)
    command = ThrusterCommand(forces=forces * scale, tilts=tilts)
    if scale < 1.0:
        raise SaturationError(
            f"{mode} target {target:.6f} unreachable; feasible at scale "
            f"{scale:.6f}", scale, command)
    return command


def convex_hull(points) -> np.ndarray:
    """Convex hull (Andrew monotone chain), counter-clockwise, no epsilon.

    Collinear boundary points are dropped.  Degenerate inputs return their
    extreme points (2 for a segment, 1 for a single point).
    """
    pts = np.unique(np.asarray(points, dtype=float), axis=0)
    if len(pts) <= 2:
        return pts
    # unique + lexsort: pts already sorted by (x, y)

    def build(seq):
        out = []
        for p in seq:
            while len(out) >= 2:
                a, b = out[-1] - out[-2], p - out[-2]
                if a[0] * b[1] - a[1] * b[0] > 0.0:
                    break
                out.pop()
            out.append(p)
        return out

    lower = build(pts)
    upper = build(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        # all points collinear: keep the two extremes
        return np.array([pts[0], pts[-1]])
    return hull


def polygon_area_perimeter(hull):
    """Shoelace area and edge-length perimeter of a CCW polygon."""
    x, y = hull[:, 0], hull[:, 1]
    area = 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
    edges = np.roll(hull, -1, axis=0) - hull
    perimeter = float(np.sum(np.hypot(edges[:, 0], edges[:, 1])))
    return float(area), perimeter


def circularity(points) -> float:
    """Cox roundness 4*pi*A/P^2 of the convex hull of a 2-D point set."""
    pts = np.asarray(points, dtype=float)
    if len(pts) < 3:
        raise ValueError("need at least 3 points")
    hull = convex_hull(pts)
    if len(hull) < 3:
        raise ValueError("points are collinear, roundness undefined")
    area, perimeter = polygon_area_perimeter(hull)
    if perimeter <= 0.0:
        raise ValueError("degenerate hull")
    return float(np.clip(4.0 * np.pi * area / perimeter ** 2, 0.0, 1.0))


def _thruster_plane_points(geometry, i, plane, resolution):
    """Projection of one thruster's command grid onto the plane axes."""
    ia, ib = plane.indices
    f = np.linspace(-geometry.f_max, geometry.f_max, resolution)
    th = np.linspace(-geometry.tilt_limit, geometry.tilt_limit, resolution)
    rows = np.empty((resolution, 2))
    for k, t in enumerate(th):
        e = thruster_direction(geometry, i, t)
        w = np.concatenate([e, np.cross(geometry.positions[i], e)])
        rows[k] = w[ia], w[ib]
    pts = (f[:, None, None] * rows[None, :, :]).reshape(-1, 2)
    return pts


def _minkowski_extremes(point_sets):
    """Extreme points of the Minkowski sum of the given planar point sets.

    conv(A + B) == conv(conv(A) + conv(B)), so summing hull vertices and
    re-hulling after each set keeps this exact while staying small.
    """
    acc = convex_hull(point_sets[0])
    for pts in point_sets[1:]:
        verts = convex_hull(pts)
        sums = (acc[:, None, :] + verts[None, :, :]).reshape(-1, 2)
        acc = convex_hull(sums)
    return acc


def sample_envelope(geometry: ThrusterGeometry, plane: EnvelopePlane) -> np.ndarray:
    """Reachable-set projection onto a wrench plane, from a full grid sweep.

    Sweeps every thruster's (force, tilt) grid at the plane's resolution and
    composes the total-wrench projection as the Minkowski sum of the four
    per-thruster projections (the total wrench is their sum, and the sum
    commutes with the projection).  Returns the extreme points of that sum
    -- whose convex hull equals the hull of the full product-grid sweep
    exactly -- plus the all-zero-command point, sorted lexicographically.
    """
    per_thruster = [
        _thruster_plane_points(geometry, i, plane, plane.resolution)
        for i in range(4)
    ]
    extremes = _minkowski_extremes(per_thruster)
    pts = np.vstack([extremes, np.zeros((1, 2))])
    order = np.lexsort((pts[:, 1], pts[:, 0]))
    return np.unique(pts[order], axis=0)


def point_in_hull(point, hull, tol=1e-9) -> bool:
    """True if point lies inside (or within tol of) a CCW convex polygon."""
    p = np.asarray(point, dtype=float)
    if len(hull) == 1:
        return bool(np.linalg.norm(p - hull[0]) <= tol)
    nxt = np.roll(hull, -1, axis=0)
    edge = nxt - hull
    rel = p[None, :] - hull
    cross = edge[:, 0] * rel[:, 1] - edge[:, 1] * rel[:, 0]
    scale = np.hypot(edge[:, 0], edge[:, 1])
    scale[scale == 0.0] = 1.0
    return bool(np.all(cross / scale >= -tol))


def circularity_report(geometry: ThrusterGeometry, resolution=33, planes=None) -> dict:
    """Circularity score per plane name (all six planes by default)."""
    if planes is None:
        planes = ["fx-fy", "fy-fz", "fx-fz", "mx-my", "my-mz", "mx-mz"]
    out = {}
    for name in planes:
        plane = EnvelopePlane.parse(name, resolution=resolution)
        out[plane.name] = circularity(sample_envelope(geometry, plane))
    return out
