"""Single rotations in SO(3), stored as unit quaternions ``[x, y, z, w]``.

All methods are generic over the scalar type: components may be floats or
:class:`~rigidiff.scalar.Dual` numbers. Vectors are returned as tuples so
that dual components survive untouched; wrap them in ``np.asarray`` when
working with floats.
"""

from __future__ import annotations

import math
import re
import warnings
from typing import Sequence

from rigidiff import _kernels as K
from rigidiff import scalar as S
from rigidiff.errors import DomainError, GimbalLockWarning

_AXIS = {"x": 0, "y": 1, "z": 2}
_SEQ_RE = re.compile(r"^([XYZ]{3}|[xyz]{3})$")

# accepted deviation from orthogonality for from_matrix
ORTHO_TOL = 1e-6
# accepted |q| - 1 when normalize=False
UNIT_TOL = 1e-9


def parse_euler_seq(seq: str) -> tuple[tuple[int, int, int], bool]:
    """Return ``(axes, intrinsic)`` for a sequence such as ``"ZYX"`` or ``"xyz"``.

    Uppercase means intrinsic, lowercase extrinsic. Consecutive axes must
    differ, which leaves 12 triples per convention.
    """
    if not isinstance(seq, str) or not _SEQ_RE.match(seq):
        raise ValueError(
            f"invalid Euler sequence {seq!r}: expected three of 'XYZ' (intrinsic) "
            "or three of 'xyz' (extrinsic)"
        )
    axes = tuple(_AXIS[c.lower()] for c in seq)
    if axes[0] == axes[1] or axes[1] == axes[2]:
        raise ValueError(f"invalid Euler sequence {seq!r}: consecutive axes must differ")
    return axes, seq.isupper()


def _as_vec3(v) -> tuple:
    if len(v) != 3:
        raise ValueError(f"expected a 3-vector, got length {len(v)}")
    return (v[0], v[1], v[2])


def _as_mat3(m) -> tuple:
    if len(m) != 3 or any(len(row) != 3 for row in m):
        raise ValueError("expected a 3x3 matrix")
    return tuple((row[0], row[1], row[2]) for row in m)


def _check_rotation_matrix(m, tol: float = ORTHO_TOL) -> None:
    v = [[float(S.value_of(e)) for e in row] for row in m]
    if not all(math.isfinite(e) for row in v for e in row):
        raise DomainError("matrix has non-finite entries")
    det = (
        v[0][0] * (v[1][1] * v[2][2] - v[1][2] * v[2][1])
        - v[0][1] * (v[1][0] * v[2][2] - v[1][2] * v[2][0])
        + v[0][2] * (v[1][0] * v[2][1] - v[1][1] * v[2][0])
    )
    if det <= 0.0:
        raise DomainError(f"matrix is singular or a reflection (det = {det:.3g})")
    defect = max(
        abs(sum(v[k][i] * v[k][j] for k in range(3)) - (1.0 if i == j else 0.0))
        for i in range(3)
        for j in range(3)
    )
    if defect >= tol:
        raise DomainError(
            f"matrix is not a rotation (orthogonality defect {defect:.3g} >= {tol:g}); "
            "pass project=True to project it onto SO(3)"
        )


def _project_to_so3(m):
    import numpy as np

    a = np.array([[float(S.value_of(e)) for e in row] for row in m])
    u, _, vt = np.linalg.svd(a)
    d = np.sign(np.linalg.det(u @ vt))
    if d <= 0:
        raise DomainError("matrix is singular or a reflection")
    return (u @ vt).tolist()


class Rotation:
    """A 3D rotation.

    Construct through the ``from_*`` class methods. ``a * b`` composes
    (apply ``b`` first, then ``a``), matching matrix multiplication order.
    """

    __slots__ = ("_q",)

    def __init__(self, quat: Sequence, normalize: bool = True):
        self._q = Rotation.from_quat(quat, normalize)._q

    @classmethod
    def _raw(cls, q) -> Rotation:
        obj = object.__new__(cls)
        obj._q = q
        return obj

    # constructors

    @classmethod
    def identity(cls) -> Rotation:
        return cls._raw((0.0, 0.0, 0.0, 1.0))

    @classmethod
    def from_quat(cls, quat: Sequence, normalize: bool = True) -> Rotation:
        """From a scalar-last quaternion.

        With ``normalize=False`` the input must already be unit length to
        within ``UNIT_TOL``; it is still divided by its norm.
        """
        if len(quat) != 4:
            raise ValueError(f"expected a 4-vector quaternion, got length {len(quat)}")
        q = tuple(quat)
        n2 = S.value_of(K.quat_norm_sq(q))
        if not math.isfinite(n2):
            raise DomainError("quaternion has non-finite components")
        if n2 == 0.0:
            raise DomainError("zero quaternion")
        if not normalize and abs(math.sqrt(n2) - 1.0) > UNIT_TOL:
            raise DomainError(f"quaternion norm {math.sqrt(n2)!r} is not 1 and normalize=False")
        return cls._raw(K.quat_normalize(q, S))

    @classmethod
    def from_rotvec(cls, rotvec: Sequence, degrees: bool = False) -> Rotation:
        """Exponential map from an axis-angle vector (radians by default)."""
        v = _as_vec3(rotvec)
        if degrees:
            v = tuple(c * (math.pi / 180.0) for c in v)
        return cls._raw(K.rotvec_to_quat(v, S))

    @classmethod
    def from_matrix(cls, matrix, project: bool = False) -> Rotation:
        """From a 3x3 rotation matrix.

        Matrices with orthogonality defect below ``ORTHO_TOL`` are accepted
        as-is. ``project=True`` first replaces the matrix by its nearest
        rotation (polar factor, float input only).
        """
        m = _as_mat3(matrix)
        if project:
            m = _project_to_so3(m)
        _check_rotation_matrix(m)
        return cls._raw(K.matrix_to_quat(m, S))

    @classmethod
    def from_euler(cls, seq: str, angles: Sequence, degrees: bool = False) -> Rotation:
        axes, intrinsic = parse_euler_seq(seq)
        a = _as_vec3(angles)
        if degrees:
            a = tuple(c * (math.pi / 180.0) for c in a)
        return cls._raw(K.euler_to_quat(axes, intrinsic, a, S))

    # converters

    def as_quat(self, canonical: bool = False) -> tuple:
        if canonical:
            return K.canonical(self._q, S)
        return self._q

    def as_matrix(self) -> tuple:
        return K.quat_to_matrix(self._q)

    def as_rotvec(self, degrees: bool = False) -> tuple:
        v = K.quat_to_rotvec(self._q, S)
        if degrees:
            v = tuple(c * (180.0 / math.pi) for c in v)
        return v

    def as_euler(self, seq: str, degrees: bool = False) -> tuple:
        """Euler angles for ``seq``.

        First and third angles lie in (-pi, pi]; the middle one in [0, pi]
        for repeated-axis sequences and [-pi/2, pi/2] otherwise. At gimbal
        lock a :class:`GimbalLockWarning` is emitted and the third angle is
        set to zero.
        """
        axes, intrinsic = parse_euler_seq(seq)
        angles, locked = K.quat_to_euler(self._q, axes, intrinsic, S)
        if locked:
            warnings.warn(
                "gimbal lock detected; setting third angle to zero",
                GimbalLockWarning,
                stacklevel=2,
            )
        if degrees:
            angles = tuple(a * (180.0 / math.pi) for a in angles)
        return angles

    # group operations

    def __mul__(self, other: Rotation) -> Rotation:
        if not isinstance(other, Rotation):
            return NotImplemented
        return Rotation._raw(K.quat_compose(self._q, other._q, S))

    def inv(self) -> Rotation:
        return Rotation._raw(K.quat_conj(self._q))

    def apply(self, vector: Sequence, inverse: bool = False) -> tuple:
        return K.quat_apply(self._q, _as_vec3(vector), inverse)

    def magnitude(self):
        """Rotation angle in [0, pi]."""
        return K.quat_angle(self._q, S)

    def __repr__(self) -> str:
        return f"Rotation.from_quat({list(self._q)!r})"
