"""Scenario execution, run logging, metrics and controller comparison.

A scenario (JSON document) fixes the task DOFs, initial state, reference and
disturbance signals, the model bias injected into the controller, and the
controller parameters.  Running one produces a RunLog: a fixed-step trace of
reference, state, cascade wire, wrench, thruster commands and adaptive
diagnostics, serialized as CSV with a `# schema=v1` first line.  Metrics
(RMSE, settling time, peak-to-peak oscillation) and multi-controller
comparisons are computed from those logs.

The loop itself is plain: perfect state observation, controller step,
thrust allocation (saturating targets are scaled uniformly onto the feasible
boundary, and the controller is told the wrench that actually applied), then
one RK4 plant step with the disturbance wrench added.  Everything is
deterministic for a fixed scenario.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .allocation import (
    SaturationError,
    ThrusterGeometry,
    allocate_depth_orientation,
    allocate_scalar,
    total_wrench,
)
from .controllers import (
    ANGULAR_DOFS,
    AdaptiveConfig,
    CascadeController,
    CascadeConfig,
    PidConfig,
    PidController,
    ffampc_controller,
    mpc_controller,
)
from .model import (
    BodyVelocity,
    ModelParams,
    Pose,
    Wrench,
    discretize,
    step_plant,
    wrap_angle,
)
from .mpc import MpcConfig, augment

LOG_SCHEMA = "v1"

DOF_INDEX = {"x": 0, "y": 1, "z": 2, "roll": 3, "pitch": 4, "yaw": 5}
DOF_BY_INDEX = {v: k for k, v in DOF_INDEX.items()}
SCALAR_MODE_FOR_DOF = {0: "surge", 1: "sway", 2: "heave",
                       3: "roll", 4: "pitch", 5: "yaw"}
WRENCH_COLUMNS = ("fx", "fy", "fz", "mx", "my", "mz")
CONTROLLER_TYPES = ("ffampc", "mpc", "pid")


class ScenarioError(ValueError):
    """Malformed scenario or controller configuration."""


class SimulationError(RuntimeError):
    """Numeric failure during a run; carries the failing step index."""

    def __init__(self, message, step):
        super().__init__(f"step {step}: {message}")
        self.step = step


@dataclass
class Scenario:
    """Validated scenario description (see Scenario.from_dict for the schema)."""

    name: str
    duration: float
    dt: float
    dofs: tuple                 # DOF names, e.g. ("yaw",) or ("z","roll","pitch","yaw")
    initial_pose: Pose
    initial_velocity: BodyVelocity
    reference: dict
    disturbance: dict
    model_bias: float
    controller: dict
    seed: int = 0

    def __post_init__(self):
        if self.duration <= 0.0 or self.dt <= 0.0:
            raise ScenarioError("duration and dt must be positive")
        steps = self.duration / self.dt
        if abs(steps - round(steps)) > 1e-9:
            raise ScenarioError("duration must be an integer number of steps")
        for d in self.dofs:
            if d not in DOF_INDEX:
                raise ScenarioError(f"unknown DOF name {d!r}")
        if self.reference.get("type") not in ("sine", "constant", "step"):
            raise ScenarioError("reference type must be sine, constant or step")
        if self.reference["type"] == "sine":
            if self.reference.get("amplitude", 0.0) <= 0.0 \
                    or self.reference.get("period", 0.0) <= 0.0:
                raise ScenarioError("sine reference needs positive amplitude and period")
            if self.reference.get("axis") not in self.dofs:
                raise ScenarioError("sine reference axis must be a scenario DOF")
        if self.disturbance.get("type") not in ("none", "sine"):
            raise ScenarioError("disturbance type must be none or sine")

    @property
    def step_count(self):
        return int(round(self.duration / self.dt))

    @property
    def dof_indices(self):
        return tuple(DOF_INDEX[d] for d in self.dofs)

    @classmethod
    def from_dict(cls, doc):
        try:
            initial = doc.get("initial", {})
            return cls(
                name=doc["name"],
                duration=float(doc["duration"]),
                dt=float(doc["dt"]),
                dofs=tuple(doc["dofs"]),
                initial_pose=Pose.from_array(initial.get("pose", [0.0] * 6)),
                initial_velocity=BodyVelocity.from_array(
                    initial.get("velocity", [0.0] * 6)),
                reference=dict(doc["reference"]),
                disturbance=dict(doc.get("disturbance", {"type": "none"})),
                model_bias=float(doc.get("model_bias", {}).get("phi2_factor", 0.0)),
                controller=dict(doc["controller"]),
                seed=int(doc.get("seed", 0)),
            )
        except (KeyError, TypeError) as exc:
            raise ScenarioError(f"invalid scenario document: {exc}") from exc

    @classmethod
    def load(cls, path):
        try:
            with open(path) as f:
                doc = json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise ScenarioError(f"cannot read scenario {path}: {exc}") from exc
        return cls.from_dict(doc)

    # -- signals ---------------------------------------------------------

    def reference_at(self, t):
        """Reference values for the task DOFs at time t."""
        ref = self.reference
        n = len(self.dofs)
        if ref["type"] == "sine":
            out = np.zeros(n)
            i = self.dofs.index(ref["axis"])
            out[i] = ref["amplitude"] * np.sin(2.0 * np.pi * t / ref["period"])
            return out
        if ref["type"] == "constant":
            return np.asarray(ref["values"], dtype=float).copy()
        # step
        if t >= ref.get("time", 0.0):
            return np.asarray(ref["values"], dtype=float).copy()
        return np.zeros(n)

    def reference_window(self, t, horizon):
        """Future references r(t+dt) .. r(t+horizon*dt)."""
        return np.stack([self.reference_at(t + (i + 1) * self.dt)
                         for i in range(horizon)])

    def disturbance_at(self, t) -> Wrench:
        dist = self.disturbance
        if dist["type"] == "none":
            return Wrench()
        amp = np.asarray(dist["amplitude"], dtype=float)
        return Wrench.from_array(
            amp * np.sin(2.0 * np.pi * dist["frequency"] * t))


def build_controller(scenario: Scenario, params: ModelParams, ctype=None):
    """Instantiate the scenario's controller (or an override type)."""
    ctype = (ctype or scenario.controller.get("type", "ffampc")).lower()
    if ctype not in CONTROLLER_TYPES:
        raise ScenarioError(f"unknown controller type {ctype!r}")
    dofs = scenario.dof_indices
    ctl = scenario.controller

    if ctype == "pid":
        pid = ctl.get("pid")
        if pid is None:
            raise ScenarioError("scenario has no pid section")
        config = PidConfig(
            kp=pid["kp"], ki=pid["ki"], kd=pid["kd"],
            integral_clamp=float(pid.get("integral_clamp", 5.0)),
            derivative_filter=float(pid.get("derivative_filter", 0.5)),
            dt=scenario.dt,
        )
        return PidController(config, dofs)

    def mpc_config(section):
        sec = ctl.get(section, {})
        return MpcConfig(
            np_horizon=int(sec.get("np", 20)),
            nc_horizon=int(sec.get("nc", 4)),
            r1_weight=float(sec.get("r1", 1.0)),
            r2_weight=float(sec.get("r2", 0.1)),
            dt=scenario.dt,
        )

    ad = ctl.get("adaptive", {})
    config = CascadeConfig(
        dofs=dofs,
        params=params,
        outer=mpc_config("outer"),
        inner=mpc_config("inner"),
        adaptive=AdaptiveConfig(
            gain=float(ad.get("lambda", 0.05)),
            alpha=float(ad.get("alpha", 0.5)),
            gate_policy=ad.get("gate_policy", "skip"),
        ),
        phi2_bias=scenario.model_bias,
    )
    factory = ffampc_controller if ctype == "ffampc" else mpc_controller
    return factory(config, scenario.initial_pose, scenario.initial_velocity)


def allocate_task_wrench(dof_indices, tau_sel, geometry):
    """Thruster commands for the task's wrench components.

    Returns (commands, scale); scale < 1 means the request saturated and was
    shrunk uniformly onto the feasible boundary.
    """
    tau_sel = np.asarray(tau_sel, dtype=float)
    if len(dof_indices) == 1:
        mode = SCALAR_MODE_FOR_DOF[dof_indices[0]]
        try:
            return allocate_scalar(tau_sel[0], geometry, mode), 1.0
        except SaturationError as err:
            return err.commands, err.scale
    if tuple(dof_indices) == (2, 3, 4, 5):
        try:
            return allocate_depth_orientation(tau_sel, geometry), 1.0
        except SaturationError as err:
            return err.commands, err.scale
    raise ScenarioError(f"no allocator for DOF set {dof_indices}")


@dataclass
class RunLog:
    """Fixed-step trace of one closed-loop run."""

    scenario_name: str
    controller_type: str
    dofs: tuple
    columns: list
    data: np.ndarray
    schema: str = LOG_SCHEMA

    def column(self, name):
        return self.data[:, self.columns.index(name)]

    @property
    def time(self):
        return self.column("t")

    def value(self, dof_name):
        return self.column(dof_name)

    def reference(self, dof_name):
        return self.column(f"ref_{dof_name}")

    def error(self, dof_name):
        """Tracking error, wrapped for angular DOFs."""
        diff = self.value(dof_name) - self.reference(dof_name)
        if DOF_INDEX[dof_name] in ANGULAR_DOFS:
            diff = wrap_angle(diff)
        return diff

    def to_csv(self, path):
        with open(path, "w", newline="\n") as f:
            f.write(f"# schema={self.schema}\n")
            f.write(",".join(self.columns) + "\n")
            for row in self.data:
                f.write(",".join(repr(float(v)) for v in row) + "\n")

    @classmethod
    def from_csv(cls, path, scenario_name="", controller_type="", dofs=()):
        with open(path) as f:
            first = f.readline().strip()
            if first != f"# schema={LOG_SCHEMA}":
                raise ScenarioError(f"unsupported log schema line {first!r}")
            columns = f.readline().strip().split(",")
            data = np.loadtxt(f, delimiter=",", ndmin=2)
        if data.shape[1] != len(columns):
            raise ScenarioError("log column count mismatch")
        dofs = dofs or tuple(c[4:] for c in columns if c.startswith("ref_"))
        return cls(scenario_name=scenario_name, controller_type=controller_type,
                   dofs=tuple(dofs), columns=columns, data=data)


def _log_columns(dof_names):
    cols = ["t"]
    cols += [f"ref_{d}" for d in dof_names]
    cols += ["x", "y", "z", "roll", "pitch", "yaw"]
    cols += ["u", "v", "w", "p", "q", "r"]
    cols += [f"ur_{d}" for d in dof_names]
    cols += [f"tau_{w}" for w in WRENCH_COLUMNS]
    cols += [f"tauE_{w}" for w in WRENCH_COLUMNS]
    cols += [f"f{i}" for i in range(1, 5)] + [f"tilt{i}" for i in range(1, 5)]
    cols += ["sat_scale", "gate", "theta_err"]
    return cols


def controller_label(controller) -> str:
    if isinstance(controller, PidController):
        return "pid"
    if isinstance(controller, CascadeController):
        return "ffampc" if controller.adaptation else "mpc"
    return type(controller).__name__


def run_scenario(scenario: Scenario, params: ModelParams | None = None,
                 controller=None, controller_type=None) -> RunLog:
    """Execute the closed loop and return the per-step log."""
    params = params or ModelParams.canonical()
    controller = controller or build_controller(scenario, params, controller_type)
    ctype = controller_label(controller)
    geometry = ThrusterGeometry.canonical(params.length_l, params.width_d)
    dofs = scenario.dof_indices
    dof_names = scenario.dofs
    n = len(dofs)

    eta, vel = scenario.initial_pose, scenario.initial_velocity
    columns = _log_columns(dof_names)
    rows = np.zeros((scenario.step_count + 1, len(columns)))

    def truth_theta(vel_fb):
        pair = discretize(params, vel_fb, scenario.dt, dofs=dofs)
        return augment(pair.phi2, pair.gamma2).theta()

    def theta_error(vel_fb):
        est = getattr(controller, "estimated_theta", None)
        if est is None:
            return np.nan
        return float(np.linalg.norm(truth_theta(vel_fb) - est()))

    def record(i, t, ref, ur, tau6, tau_e6, forces, tilts, scale, gate, terr):
        rows[i] = np.concatenate([
            [t], ref, eta.as_array(), vel.as_array(), ur, tau6, tau_e6,
            forces, tilts, [scale, gate, terr],
        ])

    record(0, 0.0, scenario.reference_at(0.0), np.full(n, np.nan),
           np.zeros(6), np.zeros(6), np.zeros(4), np.zeros(4),
           1.0, -1, theta_error(vel))

    for k in range(scenario.step_count):
        t = k * scenario.dt
        try:
            window = scenario.reference_window(t, controller.horizon)
            tau_sel, diag = controller.step(window, eta, vel)
            command, scale = allocate_task_wrench(dofs, tau_sel, geometry)
            tau_full = total_wrench(geometry, command)
            controller.notify_applied(tau_full.as_array()[list(dofs)])
            tau_e = scenario.disturbance_at(t)
            eta, vel = step_plant(params, eta, vel, tau_full, tau_e, scenario.dt)
        except (ValueError, RuntimeError) as exc:
            raise SimulationError(str(exc), k) from exc
        record(k + 1, t + scenario.dt, scenario.reference_at(t + scenario.dt),
               diag["u_r"], tau_full.as_array(), tau_e.as_array(),
               command.forces, command.tilts, scale, diag["gate"],
               theta_error(vel))

    return RunLog(scenario_name=scenario.name, controller_type=ctype,
                  dofs=dof_names, columns=columns, data=rows)


# -- metrics ------------------------------------------------------------


def rmse(log: RunLog, dof_name: str) -> float:
    """Root-mean-square tracking error over the whole log."""
    if dof_name not in log.dofs:
        raise ValueError(f"DOF {dof_name!r} is not tracked in this log")
    err = log.error(dof_name)
    return float(np.sqrt(np.mean(err ** 2)))


def settling_time(log: RunLog, dof_name: str, band_fraction=0.05):
    """Earliest time after which |error| stays within band * |initial error|.

    Returns None when the error never stays inside the band.
    """
    if band_fraction <= 0.0:
        raise ValueError("band fraction must be positive")
    err = np.abs(log.error(dof_name))
    if err[0] == 0.0:
        raise ValueError("settling time undefined for zero initial error")
    band = band_fraction * err[0]
    outside = np.nonzero(err > band)[0]
    if len(outside) == 0:
        return 0.0
    first_inside = outside[-1] + 1
    if first_inside >= len(err):
        return None
    return float(log.time[first_inside])


def oscillation(log: RunLog, dof_name: str, window=None, band_fraction=0.05):
    """Peak-to-peak value over the post-settling window (or a given one)."""
    t = log.time
    if window is None:
        ts = settling_time(log, dof_name, band_fraction)
        if ts is None:
            raise ValueError("run never settled; pass an explicit window")
        window = (ts, t[-1])
    lo, hi = window
    mask = (t >= lo) & (t <= hi)
    if not np.any(mask):
        raise ValueError("empty oscillation window")
    values = log.value(dof_name)[mask]
    return float(np.max(values) - np.min(values))


def metrics_report(log: RunLog, band_fraction=0.05) -> dict:
    """Per-DOF rmse/settling/oscillation with the band that produced each.

    Falls back from the requested band to 10% (recorded per DOF); a run that
    never settles reports oscillation over the final quarter of the window.
    """
    report = {"scenario": log.scenario_name, "controller": log.controller_type,
              "band_requested": band_fraction, "dofs": {}}
    t_final = log.time[-1]
    for d in log.dofs:
        entry = {"rmse": rmse(log, d)}
        ts, used = None, None
        for band in (band_fraction, 0.10):
            ts = settling_time(log, d, band)
            if ts is not None:
                used = band
                break
        entry["settling_time"] = ts
        entry["band_used"] = used
        if ts is not None:
            entry["oscillation"] = oscillation(log, d, window=(ts, t_final))
            entry["oscillation_window"] = [ts, t_final]
        else:
            entry["oscillation"] = oscillation(
                log, d, window=(0.75 * t_final, t_final))
            entry["oscillation_window"] = [0.75 * t_final, t_final]
        report["dofs"][d] = entry
    return report


def compare(scenario: Scenario, controllers=("ffampc", "mpc", "pid"),
            params: ModelParams | None = None, band_fraction=0.05):
    """Run several controllers on the identical scenario.

    Returns (logs, report): logs maps controller name to RunLog (absent on
    failure); the report holds per-controller metrics plus pairwise RMSE
    reductions in percent.
    """
    if len(controllers) < 2:
        raise ValueError("need at least two controllers to compare")
    params = params or ModelParams.canonical()
    logs, report = {}, {"scenario": scenario.name, "controllers": {},
                        "rmse_reduction_pct": {}}
    for name in controllers:
        try:
            log = run_scenario(scenario, params=params, controller_type=name)
        except (ScenarioError, SimulationError) as exc:
            report["controllers"][name] = {"error": str(exc)}
            continue
        logs[name] = log
        report["controllers"][name] = metrics_report(log, band_fraction)

    for a in controllers:
        for b in controllers:
            if a == b or a not in logs or b not in logs:
                continue
            entry = {}
            for d in scenario.dofs:
                ra = report["controllers"][a]["dofs"][d]["rmse"]
                rb = report["controllers"][b]["dofs"][d]["rmse"]
                entry[d] = 100.0 * (rb - ra) / rb if rb > 0.0 else 0.0
            report["rmse_reduction_pct"][f"{a}_vs_{b}"] = entry
    return logs, report
