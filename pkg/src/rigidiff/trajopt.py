"""Gradient-based trajectory optimization through the differentiable rollout.

Controls are a flat parameter vector of length ``4 H``: per step the body
torques ``tau_x, tau_y, tau_z`` and a thrust pre-activation mapped through
softplus, so thrust stays nonnegative. Gradients come from forward-mode
dual numbers pushed through :func:`rigidiff.drone.rollout`.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from rigidiff import scalar as S
from rigidiff.drone import ControlInput, DroneParams, DroneState, rollout
from rigidiff.rotation import Rotation

log = logging.getLogger(__name__)


class OptimizationDiverged(RuntimeError):
    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"non-finite loss or gradient at iteration {iteration}")


def softplus(x):
    if x > 0.0:
        return x + S.log1p(S.exp(-x))
    return S.log1p(S.exp(x))


def inverse_softplus(y: float) -> float:
    if y <= 0.0:
        raise ValueError("softplus only reaches positive values")
    return y + math.log(-math.expm1(-y))


class ControlSequence:
    """Per-step controls backed by a flat ``(4 H,)`` parameter vector."""

    def __init__(self, params: Sequence):
        self.params = params if isinstance(params, list) else np.asarray(params, dtype=float).tolist()
        if len(self.params) % 4 or not self.params:
            raise ValueError(f"control vector length must be a positive multiple of 4, got {len(self.params)}")

    @classmethod
    def from_controls(cls, torques: Sequence, thrusts: Sequence[float]) -> ControlSequence:
        flat = []
        for tau, thrust in zip(torques, thrusts, strict=True):
            flat.extend([float(tau[0]), float(tau[1]), float(tau[2]), inverse_softplus(float(thrust))])
        return cls(flat)

    @classmethod
    def hover(cls, drone: DroneParams, horizon: int) -> ControlSequence:
        return cls.from_controls([(0.0, 0.0, 0.0)] * horizon, [drone.hover_thrust] * horizon)

    @property
    def horizon(self) -> int:
        return len(self.params) // 4

    def as_array(self) -> np.ndarray:
        return np.array([float(S.value_of(p)) for p in self.params])

    def inputs(self) -> list:
        p = self.params
        return [
            ControlInput(tau=(p[4 * k], p[4 * k + 1], p[4 * k + 2]), thrust=softplus(p[4 * k + 3]))
            for k in range(len(p) // 4)
        ]


@dataclass
class ReferenceTrajectory:
    """Waypoints for steps ``0..H``; ``None`` entries are not tracked."""

    positions: list
    attitudes: Optional[list] = None
    w_pos: float = 1.0
    w_att: float = 0.0
    w_reg: float = 0.0

    def __post_init__(self):
        if self.attitudes is None:
            self.attitudes = [None] * len(self.positions)
        if len(self.attitudes) != len(self.positions):
            raise ValueError("positions and attitudes must have the same length")
        for name in ("w_pos", "w_att", "w_reg"):
            w = getattr(self, name)
            if not (math.isfinite(w) and w >= 0.0):
                raise ValueError(f"{name} must be finite and nonnegative, got {w}")

    @property
    def horizon(self) -> int:
        return len(self.positions) - 1

    @classmethod
    def hold(cls, position, horizon: int, level: bool = True, **weights) -> ReferenceTrajectory:
        pos = [tuple(position)] * (horizon + 1)
        att = [Rotation.identity()] * (horizon + 1) if level else None
        return cls(pos, att, **weights)

    @classmethod
    def ramp(cls, start, end, horizon: int, level: bool = True, **weights) -> ReferenceTrajectory:
        """Smoothstep interpolation from ``start`` to ``end``."""
        start = np.asarray(start, dtype=float)
        end = np.asarray(end, dtype=float)
        pos = []
        for k in range(horizon + 1):
            s = k / horizon
            s = s * s * (3.0 - 2.0 * s)
            pos.append(tuple((start + s * (end - start)).tolist()))
        att = [Rotation.identity()] * (horizon + 1) if level else None
        return cls(pos, att, **weights)


@dataclass
class OptimizerConfig:
    steps: int = 500
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 10.0
    tolerance: float = 1e-10
    window: int = 10

    def __post_init__(self):
        if self.steps < 1 or self.window < 1:
            raise ValueError("steps and window must be positive")
        for name in ("learning_rate", "eps", "clip_norm", "tolerance"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"{name} must be positive, got {v}")
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


def _check_lengths(u: ControlSequence, ref: ReferenceTrajectory) -> None:
    if ref.horizon != u.horizon:
        raise ValueError(f"reference has {ref.horizon + 1} waypoints but controls span {u.horizon} steps")


def loss(params: DroneParams, s0: DroneState, u: ControlSequence, ref: ReferenceTrajectory):
    """Weighted waypoint tracking plus control regularization."""
    _check_lengths(u, ref)
    controls = u.inputs()
    states = rollout(params, s0, controls)
    total = 0.0
    for s, p_ref, q_ref in zip(states, ref.positions, ref.attitudes):
        if p_ref is not None and ref.w_pos != 0.0:
            d = [a - b for a, b in zip(s.p, p_ref)]
            total = total + ref.w_pos * (d[0] * d[0] + d[1] * d[1] + d[2] * d[2])
        if q_ref is not None and ref.w_att != 0.0:
            # squared geodesic angle between attitude and reference
            e = (s.q.inv() * q_ref).as_rotvec()
            total = total + ref.w_att * (e[0] * e[0] + e[1] * e[1] + e[2] * e[2])
    if ref.w_reg != 0.0:
        reg = 0.0
        for c in controls:
            reg = reg + c.tau[0] * c.tau[0] + c.tau[1] * c.tau[1] + c.tau[2] * c.tau[2]
            reg = reg + c.thrust * c.thrust
        total = total + ref.w_reg * reg
    return total


def loss_gradient(
    params: DroneParams,
    s0: DroneState,
    u: ControlSequence,
    ref: ReferenceTrajectory,
    vectorized: bool = True,
) -> np.ndarray:
    """d loss / d (flat control vector), by forward-mode differentiation."""
    _check_lengths(u, ref)

    def f(xs):
        return loss(params, s0, ControlSequence(xs), ref)

    return S.gradient(f, u.as_array(), vectorized=vectorized)


def value_and_gradient(params, s0, u, ref) -> tuple[float, np.ndarray]:
    _check_lengths(u, ref)
    x = u.as_array()
    seeds = np.eye(len(x))
    out = loss(params, s0, ControlSequence([S.Dual(xi, seeds[i]) for i, xi in enumerate(x)]), ref)
    t = S.tangent_of(out)
    g = np.full(len(x), float(t)) if np.isscalar(t) else np.array(t, dtype=float)
    return float(S.value_of(out)), g


def finite_difference_gradient(params, s0, u, ref, h: float = 1e-6, digits: int | None = None) -> np.ndarray:
    """Central differences of the loss; the independent check on the autodiff path.

    In double precision the rounding noise of the two loss evaluations is
    about ``eps * |loss| / h``, which swamps small gradient components. With
    ``digits`` set, the loss is evaluated in that many decimal digits
    (mpmath), leaving only the O(h^2) truncation error.
    """
    x = u.as_array()
    g = np.empty_like(x)
    if digits is None:
        for i in range(len(x)):
            xp = x.copy()
            xm = x.copy()
            xp[i] += h
            xm[i] -= h
            fp = loss(params, s0, ControlSequence(xp), ref)
            fm = loss(params, s0, ControlSequence(xm), ref)
            g[i] = (fp - fm) / (2.0 * h)
        return g
    mp = S.enable_extended_precision()
    with mp.workdps(digits):
        base = [mp.mpf(float(c)) for c in x]
        step = mp.mpf(h)
        for i in range(len(x)):
            xp = list(base)
            xm = list(base)
            xp[i] += step
            xm[i] -= step
            fp = loss(params, s0, ControlSequence(xp), ref)
            fm = loss(params, s0, ControlSequence(xm), ref)
            g[i] = float((fp - fm) / (2 * step))
    return g


@dataclass
class OptimizeResult:
    controls: ControlSequence
    history: list = field(default_factory=list)
    best_loss: float = math.inf
    best_iteration: int = 0
    converged: bool = False

    @property
    def iterations(self) -> int:
        return len(self.history)


def optimize(
    params: DroneParams,
    s0: DroneState,
    u0: ControlSequence,
    ref: ReferenceTrajectory,
    cfg: OptimizerConfig = OptimizerConfig(),
) -> OptimizeResult:
    """Adam with global-norm gradient clipping; returns the best controls seen.

    ``history[k]`` is the loss at iteration ``k`` before its update. Stops
    after ``cfg.steps`` iterations or once the best loss seen has improved by
    less than ``cfg.tolerance`` over the last ``cfg.window`` iterations.
    """
    _check_lengths(u0, ref)
    x = u0.as_array()
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    result = OptimizeResult(controls=ControlSequence(x.copy()))
    best_trace = []
    for it in range(cfg.steps):
        try:
            # non-finite values are detected below; numpy need not warn as well
            with np.errstate(invalid="ignore", over="ignore"):
                f, g = value_and_gradient(params, s0, ControlSequence(x), ref)
        except (ValueError, OverflowError):
            # an infinite angle reached sin/cos inside the rollout
            raise OptimizationDiverged(it) from None
        if not (math.isfinite(f) and np.all(np.isfinite(g))):
            raise OptimizationDiverged(it)
        result.history.append(f)
        if f < result.best_loss:
            result.best_loss = f
            result.best_iteration = it
            result.controls = ControlSequence(x.copy())
        best_trace.append(result.best_loss)
        if it >= cfg.window and best_trace[it - cfg.window] - result.best_loss < cfg.tolerance:
            result.converged = True
            break
        gnorm = float(np.sqrt(g @ g))
        if gnorm > cfg.clip_norm:
            g = g * (cfg.clip_norm / gnorm)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * g
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g
        m_hat = m / (1.0 - cfg.beta1 ** (it + 1))
        v_hat = v / (1.0 - cfg.beta2 ** (it + 1))
        x = x - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
        log.debug("iteration %d loss %.6g |g| %.3g", it, f, gnorm)
    return result
