"""Batched rotations and rigid transforms with broadcasting.

Batches keep quaternion components in separate arrays ("lanes") of the
batch shape: a ``RotationBatch`` of shape ``(2, 3)`` owns four ``(2, 3)``
arrays ``x, y, z, w``. Operations broadcast batch shapes with the usual
right-aligned rules; vectors, points and matrices carry trailing event axes
(``3``, ``3x3``, ``4x4``) that never broadcast.

The math comes from :mod:`rigidiff._kernels`, shared with the scalar
classes, so each output element is bit-identical to the scalar operation on
the corresponding resolved operands. Float lanes are ``float64``; lanes of
:class:`~rigidiff.scalar.Dual` use ``object`` arrays (correct, not fast).
"""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from rigidiff import _kernels as K
from rigidiff import scalar as S
from rigidiff.errors import DomainError, GimbalLockWarning, ShapeError
from rigidiff.rotation import ORTHO_TOL, UNIT_TOL, Rotation, parse_euler_seq
from rigidiff.transform import BOTTOM_ROW_TOL, RigidTransform

__all__ = [
    "broadcast_shapes",
    "RotationBatch",
    "TransformBatch",
    "batch_compose",
    "batch_apply",
]


def broadcast_shapes(*shapes: Sequence[int]) -> tuple[int, ...]:
    """Right-aligned broadcast of batch shapes.

    Raises :class:`ShapeError` naming the first incompatible axis, counted
    from the right as a negative index.
    """
    ndim = max((len(s) for s in shapes), default=0)
    out = []
    for ax in range(-ndim, 0):
        size = 1
        for s in shapes:
            if len(s) < -ax:
                continue
            d = int(s[ax])
            if d < 0:
                raise ShapeError(f"negative extent {d} in shape {tuple(s)}")
            if d == 1:
                continue
            if size == 1:
                size = d
            elif d != size:
                raise ShapeError(
                    f"shapes {', '.join(str(tuple(x)) for x in shapes)} are not "
                    f"broadcast-compatible on axis {ax} (sizes {size} and {d})"
                )
        out.append(size)
    return tuple(out)


class _ArrayNamespace:
    """Array counterpart of the scalar functions used by the kernels.

    Transcendentals go through the scalar functions element by element so
    float results match :mod:`math` exactly; numpy's own ``sin``/``cos`` are
    not guaranteed to agree with libm to the last bit. ``sqrt`` is correctly
    rounded in both, so it uses numpy directly for float lanes.
    """

    _sin = np.frompyfunc(S.sin, 1, 1)
    _cos = np.frompyfunc(S.cos, 1, 1)
    _atan2 = np.frompyfunc(S.atan2, 2, 1)
    _sqrt_obj = np.frompyfunc(S.sqrt, 1, 1)

    @staticmethod
    def _like(res, *inputs):
        res = np.asarray(res)
        if any(np.asarray(a).dtype == object for a in inputs):
            return res
        return res.astype(np.float64)

    def sqrt(self, a):
        a = np.asarray(a)
        if a.dtype == object:
            return np.asarray(self._sqrt_obj(a))
        return np.sqrt(a)

    def sin(self, a):
        return self._like(self._sin(a), a)

    def cos(self, a):
        return self._like(self._cos(a), a)

    def atan2(self, y, x):
        return self._like(self._atan2(y, x), y, x)

    def fabs(self, a):
        return np.abs(a)

    def where(self, cond, a, b):
        cond = np.asarray(cond)
        if cond.dtype == object:
            cond = cond.astype(bool)
        return np.where(cond, a, b)


xp = _ArrayNamespace()


def _lane_array(a) -> np.ndarray:
    a = np.asarray(a)
    if a.dtype == object:
        return a
    return a.astype(np.float64, copy=False)


def _values(a: np.ndarray) -> np.ndarray:
    if a.dtype == object:
        return np.vectorize(S.value_of, otypes=[np.float64])(a) if a.size else a.astype(np.float64)
    return a


def _split(arr, n: int, name: str) -> tuple:
    arr = _lane_array(arr)
    if arr.ndim < 1 or arr.shape[-1] != n:
        raise ValueError(f"{name} must have a trailing axis of length {n}, got shape {arr.shape}")
    return tuple(arr[..., i] for i in range(n))


def _split_matrix(arr, n: int, name: str) -> tuple:
    arr = _lane_array(arr)
    if arr.ndim < 2 or arr.shape[-2:] != (n, n):
        raise ValueError(f"{name} must have trailing axes {n}x{n}, got shape {arr.shape}")
    return tuple(tuple(arr[..., i, j] for j in range(n)) for i in range(n))


def _lanes(comps, shape) -> tuple:
    out = []
    for c in comps:
        c = _lane_array(c)
        if c.shape != shape or not c.flags.writeable:
            c = np.broadcast_to(c, shape).copy()
        out.append(c)
    return tuple(out)


def _stack(comps) -> np.ndarray:
    return np.stack([np.asarray(c) for c in comps], axis=-1)


def _run_chunked(kernel: Callable, inputs: Sequence, shape: tuple, workers: int) -> tuple:
    """Evaluate ``kernel(*lanes)`` over ``shape`` split into contiguous chunks.

    Each worker handles a disjoint index range; the result does not depend
    on the partitioning because the kernels are purely elementwise.
    """
    flat = [np.broadcast_to(_lane_array(a), shape).reshape(-1) for a in inputs]
    n = math.prod(shape)
    workers = max(1, min(workers, n))
    bounds = np.linspace(0, n, workers + 1).astype(int)
    first = kernel(*(a[bounds[0] : bounds[1]] for a in flat))
    outs = [np.empty(n, dtype=np.asarray(c).dtype) for c in first]
    for o, c in zip(outs, first):
        o[bounds[0] : bounds[1]] = c

    def work(k):
        lo, hi = bounds[k], bounds[k + 1]
        for o, c in zip(outs, kernel(*(a[lo:hi] for a in flat))):
            o[lo:hi] = c

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers - 1) as pool:
            list(pool.map(work, range(1, workers)))
    return tuple(o.reshape(shape) for o in outs)


def default_workers() -> int:
    return os.cpu_count() or 1


class RotationBatch:
    """An array of rotations with an arbitrary batch shape (possibly ``()``)."""

    __slots__ = ("_lanes",)

    def __init__(self, quat, normalize: bool = True):
        self._lanes = RotationBatch.from_quat(quat, normalize)._lanes

    @classmethod
    def _raw(cls, lanes) -> RotationBatch:
        obj = object.__new__(cls)
        shape = np.broadcast_shapes(*(np.shape(c) for c in lanes))
        obj._lanes = _lanes(lanes, shape)
        return obj

    @classmethod
    def identity(cls, shape: Sequence[int] = ()) -> RotationBatch:
        shape = tuple(shape)
        z = np.zeros(shape)
        return cls._raw((z, z, z, np.ones(shape)))

    @classmethod
    def from_rotations(cls, rotations, shape: Sequence[int] | None = None) -> RotationBatch:
        rots = list(rotations)
        shape = (len(rots),) if shape is None else tuple(shape)
        if math.prod(shape) != len(rots):
            raise ShapeError(f"{len(rots)} rotations do not fill shape {shape}")
        comps = np.array([r.as_quat() for r in rots]).reshape(shape + (4,))
        return cls._raw(tuple(comps[..., i] for i in range(4)))

    @classmethod
    def from_quat(cls, quat, normalize: bool = True) -> RotationBatch:
        q = _split(quat, 4, "quat")
        n2 = _values(np.asarray(K.quat_norm_sq(q)))
        if not np.all(np.isfinite(n2)):
            raise DomainError("quaternion has non-finite components")
        if np.any(n2 == 0.0):
            raise DomainError("zero quaternion")
        if not normalize and np.any(np.abs(np.sqrt(n2) - 1.0) > UNIT_TOL):
            raise DomainError("quaternion norm is not 1 and normalize=False")
        return cls._raw(K.quat_normalize(q, xp))

    @classmethod
    def from_rotvec(cls, rotvec, degrees: bool = False) -> RotationBatch:
        v = _split(rotvec, 3, "rotvec")
        if degrees:
            v = tuple(c * (math.pi / 180.0) for c in v)
        return cls._raw(K.rotvec_to_quat(v, xp))

    @classmethod
    def from_matrix(cls, matrix) -> RotationBatch:
        m = _split_matrix(matrix, 3, "matrix")
        _check_rotation_matrices(np.asarray(matrix))
        return cls._raw(K.matrix_to_quat(m, xp))

    @classmethod
    def from_euler(cls, seq: str, angles, degrees: bool = False) -> RotationBatch:
        axes, intrinsic = parse_euler_seq(seq)
        a = _split(angles, 3, "angles")
        if degrees:
            a = tuple(c * (math.pi / 180.0) for c in a)
        return cls._raw(K.euler_to_quat(axes, intrinsic, a, xp))

    @property
    def shape(self) -> tuple[int, ...]:
        return self._lanes[0].shape

    @property
    def lanes(self) -> tuple:
        return self._lanes

    def __len__(self) -> int:
        if not self.shape:
            raise TypeError("len() of a scalar rotation batch")
        return self.shape[0]

    def __getitem__(self, index):
        comps = tuple(c[index] for c in self._lanes)
        if np.ndim(comps[0]) == 0:
            return Rotation._raw(tuple(c.item() if hasattr(c, "item") else c for c in comps))
        return RotationBatch._raw(comps)

    def as_quat(self, canonical: bool = False) -> np.ndarray:
        q = K.canonical(self._lanes, xp) if canonical else self._lanes
        return _stack(q)

    def as_matrix(self) -> np.ndarray:
        rows = K.quat_to_matrix(self._lanes)
        return np.stack([_stack(r) for r in rows], axis=-2)

    def as_rotvec(self, degrees: bool = False) -> np.ndarray:
        v = K.quat_to_rotvec(self._lanes, xp)
        if degrees:
            v = tuple(c * (180.0 / math.pi) for c in v)
        return _stack(v)

    def as_euler(self, seq: str, degrees: bool = False) -> np.ndarray:
        axes, intrinsic = parse_euler_seq(seq)
        angles, locked = K.quat_to_euler(self._lanes, axes, intrinsic, xp)
        if np.any(locked):
            warnings.warn(
                "gimbal lock detected; setting third angle to zero",
                GimbalLockWarning,
                stacklevel=2,
            )
        if degrees:
            angles = tuple(a * (180.0 / math.pi) for a in angles)
        return _stack(angles)

    def __mul__(self, other: RotationBatch) -> RotationBatch:
        if not isinstance(other, RotationBatch):
            return NotImplemented
        return batch_compose(self, other)

    def inv(self) -> RotationBatch:
        return RotationBatch._raw(K.quat_conj(self._lanes))

    def apply(self, vectors, inverse: bool = False) -> np.ndarray:
        return batch_apply(self, vectors, inverse=inverse)

    def magnitude(self) -> np.ndarray:
        return np.asarray(K.quat_angle(self._lanes, xp))

    def __repr__(self) -> str:
        return f"RotationBatch(shape={self.shape})"


def _check_rotation_matrices(m: np.ndarray) -> None:
    v = _values(np.asarray(m))
    if v.size == 0:
        return
    if not np.all(np.isfinite(v)):
        raise DomainError("matrix has non-finite entries")
    det = np.linalg.det(v)
    if np.any(det <= 0.0):
        raise DomainError("matrix is singular or a reflection")
    gram = np.swapaxes(v, -1, -2) @ v
    defect = np.abs(gram - np.eye(3)).max()
    if defect >= ORTHO_TOL:
        raise DomainError(f"matrix is not a rotation (orthogonality defect {defect:.3g})")


def batch_compose(a: RotationBatch, b: RotationBatch, workers: int = 1) -> RotationBatch:
    """Elementwise ``a * b`` over the broadcast batch shape."""
    shape = broadcast_shapes(a.shape, b.shape)

    def kernel(ax, ay, az, aw, bx, by, bz, bw):
        return K.quat_compose((ax, ay, az, aw), (bx, by, bz, bw), xp)

    if workers > 1 and math.prod(shape) > 0:
        return RotationBatch._raw(_run_chunked(kernel, a.lanes + b.lanes, shape, workers))
    return RotationBatch._raw(kernel(*a.lanes, *b.lanes))


def batch_apply(r: RotationBatch, vectors, inverse: bool = False, workers: int = 1) -> np.ndarray:
    """Rotate a batch of vectors (trailing axis 3) by a batch of rotations."""
    v = _split(vectors, 3, "vectors")
    shape = broadcast_shapes(r.shape, v[0].shape)

    def kernel(x, y, z, w, vx, vy, vz):
        return K.quat_apply((x, y, z, w), (vx, vy, vz), inverse)

    if workers > 1 and math.prod(shape) > 0:
        out = _run_chunked(kernel, r.lanes + v, shape, workers)
    else:
        out = _lanes(kernel(*r.lanes, *v), shape)
    return _stack(out)


class TransformBatch:
    """An array of rigid transforms: rotation lanes plus translation lanes."""

    __slots__ = ("rotation", "_t")

    def __init__(self, rotation: RotationBatch, translation):
        t = _split(translation, 3, "translation")
        shape = broadcast_shapes(rotation.shape, t[0].shape)
        self.rotation = RotationBatch._raw(tuple(np.broadcast_to(c, shape) for c in rotation.lanes))
        self._t = _lanes(t, shape)

    @classmethod
    def _raw(cls, rot_lanes, t_lanes) -> TransformBatch:
        return cls(RotationBatch._raw(rot_lanes), _stack(t_lanes))

    @classmethod
    def identity(cls, shape: Sequence[int] = ()) -> TransformBatch:
        shape = tuple(shape)
        return cls(RotationBatch.identity(shape), np.zeros(shape + (3,)))

    @classmethod
    def from_components(cls, rotation: RotationBatch, translation) -> TransformBatch:
        return cls(rotation, translation)

    @classmethod
    def from_transforms(cls, transforms, shape: Sequence[int] | None = None) -> TransformBatch:
        tfs = list(transforms)
        shape = (len(tfs),) if shape is None else tuple(shape)
        rot = RotationBatch.from_rotations([t.rotation for t in tfs], shape)
        trans = np.array([t.translation for t in tfs]).reshape(shape + (3,))
        return cls(rot, trans)

    @classmethod
    def from_matrix(cls, matrix) -> TransformBatch:
        m = _lane_array(matrix)
        if m.ndim < 2 or m.shape[-2:] != (4, 4):
            raise ValueError(f"matrix must have trailing axes 4x4, got shape {m.shape}")
        bottom = _values(m[..., 3, :])
        if not np.all(np.isfinite(bottom)) or np.any(
            np.abs(bottom - np.array([0.0, 0.0, 0.0, 1.0])) > BOTTOM_ROW_TOL
        ):
            raise ValueError("bottom row of a homogeneous transform must be [0, 0, 0, 1]")
        return cls(RotationBatch.from_matrix(m[..., :3, :3]), m[..., :3, 3])

    @property
    def shape(self) -> tuple[int, ...]:
        return self._t[0].shape

    @property
    def translation(self) -> np.ndarray:
        return _stack(self._t)

    def __getitem__(self, index):
        r = self.rotation[index]
        t = tuple(c[index] for c in self._t)
        if isinstance(r, Rotation):
            return RigidTransform(r, tuple(c.item() if hasattr(c, "item") else c for c in t))
        return TransformBatch(r, _stack(t))

    def as_matrix(self) -> np.ndarray:
        rot = self.rotation.as_matrix()
        out = np.zeros(self.shape + (4, 4), dtype=rot.dtype)
        out[..., :3, :3] = rot
        out[..., :3, 3] = self.translation
        out[..., 3, 3] = 1.0
        return out

    def __mul__(self, other: TransformBatch) -> TransformBatch:
        if not isinstance(other, TransformBatch):
            return NotImplemented
        return tf_batch_compose(self, other)

    def inv(self) -> TransformBatch:
        q = K.quat_conj(self.rotation.lanes)
        x, y, z = K.quat_apply(q, self._t)
        return TransformBatch._raw(q, (-x, -y, -z))

    def apply(self, points, inverse: bool = False) -> np.ndarray:
        return tf_batch_apply(self, points, inverse=inverse)

    def __repr__(self) -> str:
        return f"TransformBatch(shape={self.shape})"


def _tf_compose_kernel(ax, ay, az, aw, atx, aty, atz, bx, by, bz, bw, btx, bty, btz):
    qa = (ax, ay, az, aw)
    rt = K.quat_apply(qa, (btx, bty, btz))
    q = K.quat_compose(qa, (bx, by, bz, bw), xp)
    return q + (rt[0] + atx, rt[1] + aty, rt[2] + atz)


def tf_batch_compose(a: TransformBatch, b: TransformBatch, workers: int = 1) -> TransformBatch:
    shape = broadcast_shapes(a.shape, b.shape)
    inputs = a.rotation.lanes + a._t + b.rotation.lanes + b._t
    if workers > 1 and math.prod(shape) > 0:
        out = _run_chunked(_tf_compose_kernel, inputs, shape, workers)
    else:
        out = _tf_compose_kernel(*inputs)
    return TransformBatch._raw(out[:4], out[4:])


def tf_batch_apply(tf: TransformBatch, points, inverse: bool = False, workers: int = 1) -> np.ndarray:
    p = _split(points, 3, "points")
    shape = broadcast_shapes(tf.shape, p[0].shape)

    def kernel(x, y, z, w, tx, ty, tz, px, py, pz):
        q = (x, y, z, w)
        if inverse:
            return K.quat_apply(q, (px - tx, py - ty, pz - tz), inverse=True)
        rx, ry, rz = K.quat_apply(q, (px, py, pz))
        return (rx + tx, ry + ty, rz + tz)

    inputs = tf.rotation.lanes + tf._t + p
    if workers > 1 and math.prod(shape) > 0:
        out = _run_chunked(kernel, inputs, shape, workers)
    else:
        out = _lanes(kernel(*inputs), shape)
    return _stack(out)
