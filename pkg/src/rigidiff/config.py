"""Task configuration files (YAML; plain JSON also parses).

Schema (all lengths in m, angles in rad, time in s)::

    drone:
      inertia: [0.01, 0.01, 0.02]     # diagonal, or a full 3x3 nested list
      mass: 0.5
      dt: 0.01
      gravity: [0, 0, -9.81]          # optional
    horizon: 100
    initial_state:                    # optional; defaults to rest at the origin
      position: [0, 0, 0]
      velocity: [0, 0, 0]
      attitude: [0, 0, 0, 1]          # scalar-last quaternion
      omega: [0, 0, 0]
    reference:                        # optional
      kind: hold | ramp | terminal | waypoints
      target: [0, 0, 1]               # hold / ramp / terminal
      positions: [[x, y, z] | null, ...]   # waypoints: horizon + 1 entries
      level: true                     # track level attitude at every step
    weights: {position: 1.0, attitude: 0.0, regularization: 0.0}
    initial_controls:                 # optional; default hover
      perturb_torque: 0.0             # std-dev of Gaussian noise (N m)
      perturb_thrust: 0.0             # std-dev on the thrust pre-activation
    optimizer: {steps, learning_rate, beta1, beta2, eps, clip_norm, tolerance, window}
    seed: 0
    outputs: {trajectory, summary, controls, loss_history}   # file names
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from rigidiff.drone import DroneParams, DroneState, InertiaMatrix
from rigidiff.rotation import Rotation
from rigidiff.trajopt import ControlSequence, OptimizerConfig, ReferenceTrajectory

DEFAULT_OUTPUTS = {
    "trajectory": "trajectory.csv",
    "summary": "summary.json",
    "controls": "controls.csv",
    "loss_history": "loss_history.csv",
}


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        self.field = key
        super().__init__(f"config field '{key}': {message}")


def _get(d: dict, key: str, path: str, default=...):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected a mapping")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    return d[key]


def _number(x, name: str, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(x, bool) or not isinstance(x, (int, float)):
        raise ConfigError(name, f"expected a number, got {x!r}")
    x = float(x)
    if not math.isfinite(x):
        raise ConfigError(name, "must be finite")
    if positive and x <= 0.0:
        raise ConfigError(name, "must be positive")
    if nonneg and x < 0.0:
        raise ConfigError(name, "must be nonnegative")
    return x


def _vector(x, n: int, name: str) -> tuple:
    if not isinstance(x, (list, tuple)) or len(x) != n:
        raise ConfigError(name, f"expected a list of {n} numbers")
    return tuple(_number(c, f"{name}[{i}]") for i, c in enumerate(x))


def _integer(x, name: str, minimum: int) -> int:
    if isinstance(x, bool) or not isinstance(x, int):
        raise ConfigError(name, f"expected an integer, got {x!r}")
    if x < minimum:
        raise ConfigError(name, f"must be at least {minimum}")
    return x


@dataclass
class TaskConfig:
    drone: DroneParams
    horizon: int
    initial_state: DroneState
    reference: ReferenceTrajectory
    optimizer: OptimizerConfig
    perturb_torque: float = 0.0
    perturb_thrust: float = 0.0
    seed: int = 0
    outputs: dict = field(default_factory=lambda: dict(DEFAULT_OUTPUTS))

    def initial_controls(self) -> ControlSequence:
        u = ControlSequence.hover(self.drone, self.horizon)
        if self.perturb_torque == 0.0 and self.perturb_thrust == 0.0:
            return u
        rng = np.random.default_rng(self.seed)
        scale = np.tile([self.perturb_torque] * 3 + [self.perturb_thrust], self.horizon)
        return ControlSequence(u.as_array() + scale * rng.standard_normal(4 * self.horizon))


def _parse_drone(d) -> DroneParams:
    inertia = _get(d, "inertia", "drone")
    if isinstance(inertia, (list, tuple)) and len(inertia) == 3 and all(
        isinstance(r, (list, tuple)) for r in inertia
    ):
        J = tuple(_vector(r, 3, f"drone.inertia[{i}]") for i, r in enumerate(inertia))
    else:
        diag = _vector(inertia, 3, "drone.inertia")
        J = ((diag[0], 0.0, 0.0), (0.0, diag[1], 0.0), (0.0, 0.0, diag[2]))
    mass = _number(_get(d, "mass", "drone"), "drone.mass", positive=True)
    dt = _number(_get(d, "dt", "drone"), "drone.dt", positive=True)
    gravity = _vector(_get(d, "gravity", "drone", [0.0, 0.0, -9.81]), 3, "drone.gravity")
    try:
        J = InertiaMatrix(J)
    except ValueError as e:
        raise ConfigError("drone.inertia", str(e)) from None
    return DroneParams(J=J, mass=mass, dt=dt, gravity=gravity)


def _parse_state(d) -> DroneState:
    if d is None:
        d = {}
    p = _vector(_get(d, "position", "initial_state", [0, 0, 0]), 3, "initial_state.position")
    v = _vector(_get(d, "velocity", "initial_state", [0, 0, 0]), 3, "initial_state.velocity")
    q = _vector(_get(d, "attitude", "initial_state", [0, 0, 0, 1]), 4, "initial_state.attitude")
    w = _vector(_get(d, "omega", "initial_state", [0, 0, 0]), 3, "initial_state.omega")
    try:
        rot = Rotation.from_quat(q)
    except ValueError as e:
        raise ConfigError("initial_state.attitude", str(e)) from None
    return DroneState(q=rot, omega=w, p=p, v=v)


def _parse_reference(d, horizon: int, s0: DroneState, weights: dict) -> ReferenceTrajectory:
    if d is None:
        d = {"kind": "hold"}
    kind = _get(d, "kind", "reference", "hold")
    level = _get(d, "level", "reference", True)
    if not isinstance(level, bool):
        raise ConfigError("reference.level", "expected true or false")
    if kind in ("hold", "ramp", "terminal"):
        target = _vector(_get(d, "target", "reference", list(s0.p)), 3, "reference.target")
        if kind == "hold":
            return ReferenceTrajectory.hold(target, horizon, level=level, **weights)
        if kind == "ramp":
            return ReferenceTrajectory.ramp(s0.p, target, horizon, level=level, **weights)
        positions = [None] * horizon + [target]
    elif kind == "waypoints":
        raw = _get(d, "positions", "reference")
        if not isinstance(raw, list) or len(raw) != horizon + 1:
            raise ConfigError("reference.positions", f"expected {horizon + 1} entries (horizon + 1)")
        positions = [
            None if p is None else _vector(p, 3, f"reference.positions[{k}]") for k, p in enumerate(raw)
        ]
    else:
        raise ConfigError("reference.kind", f"unknown kind {kind!r}")
    attitudes = [Rotation.identity()] * (horizon + 1) if level else None
    return ReferenceTrajectory(positions, attitudes, **weights)


def _parse_optimizer(d) -> OptimizerConfig:
    if d is None:
        d = {}
    if not isinstance(d, dict):
        raise ConfigError("optimizer", "expected a mapping")
    kwargs = {}
    known = OptimizerConfig.__dataclass_fields__
    for key, val in d.items():
        if key not in known:
            raise ConfigError(f"optimizer.{key}", "unknown field")
        if key in ("steps", "window"):
            kwargs[key] = _integer(val, f"optimizer.{key}", 1)
        else:
            kwargs[key] = _number(val, f"optimizer.{key}", positive=True)
    try:
        return OptimizerConfig(**kwargs)
    except ValueError as e:
        raise ConfigError("optimizer", str(e)) from None


def parse_config(raw: dict) -> TaskConfig:
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping at the top level")
    drone = _parse_drone(_get(raw, "drone", ""))
    horizon = _integer(_get(raw, "horizon", ""), "horizon", 1)
    s0 = _parse_state(raw.get("initial_state"))
    w = raw.get("weights") or {}
    if not isinstance(w, dict):
        raise ConfigError("weights", "expected a mapping")
    weights = {
        "w_pos": _number(w.get("position", 1.0), "weights.position", nonneg=True),
        "w_att": _number(w.get("attitude", 0.0), "weights.attitude", nonneg=True),
        "w_reg": _number(w.get("regularization", 0.0), "weights.regularization", nonneg=True),
    }
    ref = _parse_reference(raw.get("reference"), horizon, s0, weights)
    opt = _parse_optimizer(raw.get("optimizer"))
    ic = raw.get("initial_controls") or {}
    if not isinstance(ic, dict):
        raise ConfigError("initial_controls", "expected a mapping")
    seed = _integer(raw.get("seed", 0), "seed", 0)
    outputs = dict(DEFAULT_OUTPUTS)
    out_raw = raw.get("outputs") or {}
    if not isinstance(out_raw, dict):
        raise ConfigError("outputs", "expected a mapping")
    for key, val in out_raw.items():
        if key not in DEFAULT_OUTPUTS:
            raise ConfigError(f"outputs.{key}", "unknown output")
        if not isinstance(val, str) or not val:
            raise ConfigError(f"outputs.{key}", "expected a file name")
        outputs[key] = val
    return TaskConfig(
        drone=drone,
        horizon=horizon,
        initial_state=s0,
        reference=ref,
        optimizer=opt,
        perturb_torque=_number(ic.get("perturb_torque", 0.0), "initial_controls.perturb_torque", nonneg=True),
        perturb_thrust=_number(ic.get("perturb_thrust", 0.0), "initial_controls.perturb_thrust", nonneg=True),
        seed=seed,
        outputs=outputs,
    )


def load_config(path: str | Path) -> TaskConfig:
    text = Path(path).read_text()
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigError("<file>", f"not valid YAML: {e}") from None
    return parse_config(raw)
