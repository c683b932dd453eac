"""Quadrotor rigid-body dynamics with group-exponential attitude updates.

Rotational part (body frame)::

    omega_dot = J^-1 (tau - omega x (J omega))
    q_dot     = 1/2 q (x) [omega, 0]

Attitude is advanced by composing with ``exp(omega * dt)``, which keeps the
quaternion on the unit sphere without any projection step.

The translational part (point mass, collective thrust along body z,
gravity) is an addition on top of the rotational model so that position
trajectories exist; it is kept in :func:`step` only.

Everything here is scalar-generic: feeding :class:`~rigidiff.scalar.Dual`
controls through :func:`rollout` yields state tangents.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

from rigidiff import _kernels as K
from rigidiff import scalar as S
from rigidiff.rotation import Rotation, _as_vec3


class SimulationDiverged(RuntimeError):
    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite state at step {step}")


def _matvec(m, v):
    return tuple(row[0] * v[0] + row[1] * v[1] + row[2] * v[2] for row in m)


@dataclass(frozen=True)
class InertiaMatrix:
    """Symmetric positive-definite inertia tensor with a cached inverse."""

    J: tuple
    J_inv: tuple = field(init=False, repr=False)

    def __post_init__(self):
        j = tuple(tuple(float(e) for e in row) for row in self.J)
        if len(j) != 3 or any(len(row) != 3 for row in j):
            raise ValueError("inertia matrix must be 3x3")
        if not all(math.isfinite(e) for row in j for e in row):
            raise ValueError("inertia matrix has non-finite entries")
        for a in range(3):
            for b in range(a + 1, 3):
                if abs(j[a][b] - j[b][a]) > 1e-12:
                    raise ValueError("inertia matrix is not symmetric")
        m1 = j[0][0]
        m2 = j[0][0] * j[1][1] - j[0][1] * j[1][0]
        cof = (
            (
                j[1][1] * j[2][2] - j[1][2] * j[2][1],
                j[0][2] * j[2][1] - j[0][1] * j[2][2],
                j[0][1] * j[1][2] - j[0][2] * j[1][1],
            ),
            (
                j[1][2] * j[2][0] - j[1][0] * j[2][2],
                j[0][0] * j[2][2] - j[0][2] * j[2][0],
                j[0][2] * j[1][0] - j[0][0] * j[1][2],
            ),
            (
                j[1][0] * j[2][1] - j[1][1] * j[2][0],
                j[0][1] * j[2][0] - j[0][0] * j[2][1],
                j[0][0] * j[1][1] - j[0][1] * j[1][0],
            ),
        )
        det = j[0][0] * cof[0][0] + j[0][1] * cof[1][0] + j[0][2] * cof[2][0]
        if not (m1 > 0.0 and m2 > 0.0 and det > 0.0):
            raise ValueError("inertia matrix is not positive definite")
        object.__setattr__(self, "J", j)
        object.__setattr__(self, "J_inv", tuple(tuple(c / det for c in row) for row in cof))

    @classmethod
    def diag(cls, jx: float, jy: float, jz: float) -> InertiaMatrix:
        return cls(((jx, 0.0, 0.0), (0.0, jy, 0.0), (0.0, 0.0, jz)))


@dataclass(frozen=True)
class DroneParams:
    J: InertiaMatrix
    mass: float
    dt: float
    gravity: tuple = (0.0, 0.0, -9.81)

    def __post_init__(self):
        if not isinstance(self.J, InertiaMatrix):
            object.__setattr__(self, "J", InertiaMatrix(self.J))
        if not (math.isfinite(self.mass) and self.mass > 0.0):
            raise ValueError(f"mass must be positive, got {self.mass}")
        if not (math.isfinite(self.dt) and self.dt > 0.0):
            raise ValueError(f"dt must be positive, got {self.dt}")
        g = tuple(float(c) for c in _as_vec3(self.gravity))
        if not all(math.isfinite(c) for c in g):
            raise ValueError("gravity must be finite")
        object.__setattr__(self, "gravity", g)

    @classmethod
    def default(cls) -> DroneParams:
        # small-quadrotor ballpark numbers
        return cls(J=InertiaMatrix.diag(0.01, 0.01, 0.02), mass=0.5, dt=0.01)

    @property
    def hover_thrust(self) -> float:
        g = self.gravity
        return self.mass * math.sqrt(g[0] * g[0] + g[1] * g[1] + g[2] * g[2])


@dataclass(frozen=True)
class DroneState:
    q: Rotation  # body-to-world attitude
    omega: tuple = (0.0, 0.0, 0.0)  # rad/s, body frame
    p: tuple = (0.0, 0.0, 0.0)  # m, world frame
    v: tuple = (0.0, 0.0, 0.0)  # m/s, world frame

    @classmethod
    def at_rest(cls, position: Sequence[float] = (0.0, 0.0, 0.0)) -> DroneState:
        return cls(Rotation.identity(), p=tuple(position))

    def values(self) -> list:
        """Flat float view ``[px, py, pz, vx, vy, vz, qx, qy, qz, qw, wx, wy, wz]``."""
        comps = (*self.p, *self.v, *self.q.as_quat(), *self.omega)
        return [float(S.value_of(c)) for c in comps]


@dataclass(frozen=True)
class ControlInput:
    tau: tuple  # N m, body frame
    thrust: object = 0.0  # N along body z


def angular_acceleration(params: DroneParams, omega, tau) -> tuple:
    """Euler's rotation equation ``J^-1 (tau - omega x J omega)``."""
    j_omega = _matvec(params.J.J, omega)
    gyro = K.cross(omega, j_omega)
    return _matvec(params.J.J_inv, (tau[0] - gyro[0], tau[1] - gyro[1], tau[2] - gyro[2]))


def quat_derivative(q: Rotation, omega) -> tuple:
    """``1/2 q (x) [omega, 0]`` as a scalar-last 4-tuple."""
    d = K.quat_mul(q.as_quat(), (omega[0], omega[1], omega[2], 0.0))
    return tuple(0.5 * c for c in d)


def integrate_ang_vel(rot: Rotation, omega, dt: float) -> Rotation:
    return rot * Rotation.from_rotvec((omega[0] * dt, omega[1] * dt, omega[2] * dt))


def step(params: DroneParams, s: DroneState, u: ControlInput) -> DroneState:
    """Semi-implicit Euler: angular velocity first, then attitude with the new rate."""
    dt = params.dt
    alpha = angular_acceleration(params, s.omega, u.tau)
    omega = tuple(w + dt * a for w, a in zip(s.omega, alpha))
    q = integrate_ang_vel(s.q, omega, dt)

    # translational extension: body-z thrust plus gravity
    body_z = s.q.apply((0.0, 0.0, 1.0))
    k = u.thrust / params.mass
    acc = tuple(g + k * b for g, b in zip(params.gravity, body_z))
    v = tuple(vi + dt * ai for vi, ai in zip(s.v, acc))
    p = tuple(pi + dt * vi for pi, vi in zip(s.p, v))
    return DroneState(q=q, omega=omega, p=p, v=v)


def rollout(
    params: DroneParams, s0: DroneState, controls: Sequence[ControlInput], check_finite: bool = False
) -> list:
    """States ``[s0, s1, ..., sH]`` under the given controls."""
    if len(controls) < 1:
        raise ValueError("rollout needs at least one control")
    states = [s0]
    s = s0
    for k, u in enumerate(controls):
        if check_finite:
            try:
                s = step(params, s, u)
            except (ValueError, OverflowError):
                # math.sin/cos reject infinite angles before the state check sees them
                raise SimulationDiverged(k + 1) from None
            if not all(math.isfinite(c) for c in s.values()):
                raise SimulationDiverged(k + 1)
        else:
            s = step(params, s, u)
        states.append(s)
    return states


def rotational_energy(params: DroneParams, omega) -> float:
    j_omega = _matvec(params.J.J, omega)
    return 0.5 * (omega[0] * j_omega[0] + omega[1] * j_omega[1] + omega[2] * j_omega[2])


def with_dt(params: DroneParams, dt: float) -> DroneParams:
    return replace(params, dt=dt)
