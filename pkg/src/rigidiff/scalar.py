"""Scalar backends: plain floats and dual numbers.

Every geometry and dynamics routine in this package is written against a
small set of scalar operations (``+ - * /``, negation, :func:`sqrt`,
:func:`sin`, :func:`cos`, :func:`atan2`, :func:`fabs`, comparisons with
float constants). The functions below dispatch on the scalar type, so the
same code runs on ``float`` and on :class:`Dual` without modification.

A :class:`Dual` carries a value and a tangent. The tangent is usually a
float, but it may also be a 1-D numpy array; in that case a single
evaluation propagates several directional derivatives side by side. Each
tangent lane sees exactly the float operations a scalar-tangent pass would
see, so the lanes are bit-identical to separate passes.

A third backend, mpmath's ``mpf``, can be switched on with
:func:`enable_extended_precision`. It exists for reference computations
such as low-noise finite differences, not for speed.
"""

from __future__ import annotations

import math
from typing import Any, Callable, Sequence

import numpy as np

__all__ = [
    "Dual",
    "dual_lift",
    "value_of",
    "tangent_of",
    "sqrt",
    "sin",
    "cos",
    "atan2",
    "fabs",
    "exp",
    "log",
    "log1p",
    "where",
    "directional_derivative",
    "gradient",
    "enable_extended_precision",
]


class Dual:
    """Forward-mode dual number ``value + tangent * eps`` with ``eps**2 = 0``.

    Comparisons look only at ``value``.
    """

    __slots__ = ("value", "tangent")

    def __init__(self, value: float, tangent: Any = 0.0):
        self.value = float(value)
        self.tangent = tangent

    def __repr__(self) -> str:
        return f"Dual({self.value!r}, {self.tangent!r})"

    # arithmetic

    def __add__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value + other.value, self.tangent + other.tangent)
        return Dual(self.value + other, self.tangent)

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Dual):
            return Dual(self.value - other.value, self.tangent - other.tangent)
        return Dual(self.value - other, self.tangent)

    def __rsub__(self, other):
        return Dual(other - self.value, -self.tangent)

    def __mul__(self, other):
        if isinstance(other, Dual):
            return Dual(
                self.value * other.value,
                self.tangent * other.value + self.value * other.tangent,
            )
        return Dual(self.value * other, self.tangent * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            q = self.value / other.value
            return Dual(q, (self.tangent - q * other.tangent) / other.value)
        return Dual(self.value / other, self.tangent / other)

    def __rtruediv__(self, other):
        q = other / self.value
        return Dual(q, -q * self.tangent / self.value)

    def __neg__(self):
        return Dual(-self.value, -self.tangent)

    def __pos__(self):
        return self

    def __abs__(self):
        return fabs(self)

    def __pow__(self, p):
        if isinstance(p, Dual):
            raise TypeError("Dual exponents are not supported")
        if p == 2:
            return self * self
        v = self.value**p
        return Dual(v, p * self.value ** (p - 1) * self.tangent)

    # comparisons use the value only

    def __lt__(self, other):
        return self.value < value_of(other)

    def __le__(self, other):
        return self.value <= value_of(other)

    def __gt__(self, other):
        return self.value > value_of(other)

    def __ge__(self, other):
        return self.value >= value_of(other)

    # numpy object arrays call these by name
    def sqrt(self):
        return sqrt(self)

    def sin(self):
        return sin(self)

    def cos(self):
        return cos(self)


# Optional extended-precision backend (mpmath). Off by default so the float
# path pays only an isinstance check against an empty tuple.
_EXTENDED: tuple = ()
_mp = None


def enable_extended_precision():
    """Let mpmath ``mpf`` values flow through every routine; returns mpmath."""
    global _EXTENDED, _mp
    if _mp is None:
        import mpmath

        _mp = mpmath
        _EXTENDED = (mpmath.mpf,)
    return _mp


def dual_lift(x: float, seed: Any = 1.0) -> Dual:
    """Lift a float to a dual number with the given tangent seed."""
    return Dual(x, seed)


def value_of(x):
    return x.value if isinstance(x, Dual) else x


def tangent_of(x):
    return x.tangent if isinstance(x, Dual) else 0.0


def sqrt(x):
    if isinstance(x, Dual):
        s = math.sqrt(x.value)
        return Dual(s, x.tangent / (2.0 * s))
    if isinstance(x, _EXTENDED):
        return _mp.sqrt(x)
    return math.sqrt(x)


def sin(x):
    if isinstance(x, Dual):
        return Dual(math.sin(x.value), math.cos(x.value) * x.tangent)
    if isinstance(x, _EXTENDED):
        return _mp.sin(x)
    return math.sin(x)


def cos(x):
    if isinstance(x, Dual):
        return Dual(math.cos(x.value), -math.sin(x.value) * x.tangent)
    if isinstance(x, _EXTENDED):
        return _mp.cos(x)
    return math.cos(x)


def atan2(y, x):
    if isinstance(y, Dual) or isinstance(x, Dual):
        yv, xv = value_of(y), value_of(x)
        yt, xt = tangent_of(y), tangent_of(x)
        r2 = xv * xv + yv * yv
        return Dual(math.atan2(yv, xv), (xv * yt - yv * xt) / r2)
    if isinstance(y, _EXTENDED) or isinstance(x, _EXTENDED):
        return _mp.atan2(y, x)
    return math.atan2(y, x)


def fabs(x):
    if isinstance(x, Dual):
        if x.value < 0.0:
            return -x
        return Dual(abs(x.value), x.tangent)
    return abs(x)


def exp(x):
    if isinstance(x, Dual):
        e = math.exp(x.value)
        return Dual(e, e * x.tangent)
    if isinstance(x, _EXTENDED):
        return _mp.exp(x)
    return math.exp(x)


def log(x):
    if isinstance(x, Dual):
        return Dual(math.log(x.value), x.tangent / x.value)
    if isinstance(x, _EXTENDED):
        return _mp.log(x)
    return math.log(x)


def log1p(x):
    if isinstance(x, Dual):
        return Dual(math.log1p(x.value), x.tangent / (1.0 + x.value))
    if isinstance(x, _EXTENDED):
        return _mp.log1p(x)
    return math.log1p(x)


def where(cond, a, b):
    """Scalar select; the batched namespace provides the array version."""
    return a if cond else b


def directional_derivative(
    f: Callable[[list], Any], x: Sequence[float], direction: Sequence[float]
) -> float:
    """Return ``grad f(x) . direction`` from one dual evaluation of ``f``."""
    if len(x) != len(direction):
        raise ValueError(f"x has {len(x)} entries but direction has {len(direction)}")
    out = f([Dual(xi, float(di)) for xi, di in zip(x, direction)])
    return float(tangent_of(out))


def gradient(
    f: Callable[[list], Any], x: Sequence[float], vectorized: bool = True
) -> np.ndarray:
    """Gradient of a scalar function by forward-mode differentiation.

    With ``vectorized=True`` all basis directions travel through ``f`` in one
    pass as array tangents; otherwise ``f`` is evaluated once per input.
    Both give bit-identical results.
    """
    n = len(x)
    if not vectorized:
        basis = np.eye(n)
        return np.array([directional_derivative(f, x, basis[i]) for i in range(n)])
    seeds = np.eye(n)
    out = f([Dual(xi, seeds[i]) for i, xi in enumerate(x)])
    t = tangent_of(out)
    if np.isscalar(t):
        # f did not depend on any input
        return np.full(n, float(t))
    return np.array(t, dtype=float)
