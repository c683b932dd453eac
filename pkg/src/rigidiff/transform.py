"""Rigid transforms in SE(3): a rotation followed by a translation.

Stored as (unit quaternion, translation); the homogeneous 4x4 matrix is an
import/export format only.
"""

from __future__ import annotations

import math
from typing import Sequence

from rigidiff import _kernels as K
from rigidiff import scalar as S
from rigidiff.rotation import Rotation, _as_vec3

# tolerance on the [0, 0, 0, 1] bottom row of a homogeneous matrix
BOTTOM_ROW_TOL = 1e-9


def _check_bottom_row(row) -> None:
    expected = (0.0, 0.0, 0.0, 1.0)
    vals = [float(S.value_of(e)) for e in row]
    if not all(math.isfinite(v) for v in vals) or any(
        abs(v - e) > BOTTOM_ROW_TOL for v, e in zip(vals, expected)
    ):
        raise ValueError(f"bottom row of a homogeneous transform must be [0, 0, 0, 1], got {vals}")


class RigidTransform:
    """``p -> R p + t``. ``A * B`` applies ``B`` first."""

    __slots__ = ("rotation", "translation")

    def __init__(self, rotation: Rotation, translation: Sequence):
        if not isinstance(rotation, Rotation):
            raise TypeError("rotation must be a Rotation")
        self.rotation = rotation
        self.translation = _as_vec3(translation)

    @classmethod
    def identity(cls) -> RigidTransform:
        return cls(Rotation.identity(), (0.0, 0.0, 0.0))

    @classmethod
    def from_components(cls, rotation: Rotation, translation: Sequence) -> RigidTransform:
        return cls(rotation, translation)

    @classmethod
    def from_translation(cls, translation: Sequence) -> RigidTransform:
        return cls(Rotation.identity(), translation)

    @classmethod
    def from_matrix(cls, matrix) -> RigidTransform:
        if len(matrix) != 4 or any(len(row) != 4 for row in matrix):
            raise ValueError("expected a 4x4 matrix")
        _check_bottom_row(matrix[3])
        block = [row[:3] for row in matrix[:3]]
        t = (matrix[0][3], matrix[1][3], matrix[2][3])
        return cls(Rotation.from_matrix(block), t)

    def as_matrix(self) -> tuple:
        r = self.rotation.as_matrix()
        t = self.translation
        return (
            (r[0][0], r[0][1], r[0][2], t[0]),
            (r[1][0], r[1][1], r[1][2], t[1]),
            (r[2][0], r[2][1], r[2][2], t[2]),
            (0.0, 0.0, 0.0, 1.0),
        )

    def __mul__(self, other: RigidTransform) -> RigidTransform:
        if not isinstance(other, RigidTransform):
            return NotImplemented
        q = self.rotation._q
        rt = K.quat_apply(q, other.translation)
        t = self.translation
        return RigidTransform(
            self.rotation * other.rotation, (rt[0] + t[0], rt[1] + t[1], rt[2] + t[2])
        )

    def inv(self) -> RigidTransform:
        r_inv = self.rotation.inv()
        x, y, z = K.quat_apply(r_inv._q, self.translation)
        return RigidTransform(r_inv, (-x, -y, -z))

    def apply(self, point: Sequence, inverse: bool = False) -> tuple:
        p = _as_vec3(point)
        t = self.translation
        q = self.rotation._q
        if inverse:
            return K.quat_apply(q, (p[0] - t[0], p[1] - t[1], p[2] - t[2]), inverse=True)
        x, y, z = K.quat_apply(q, p)
        return (x + t[0], y + t[1], z + t[2])

    def __repr__(self) -> str:
        return f"RigidTransform({self.rotation!r}, {list(self.translation)!r})"
