"""Rotations, rigid transforms and a differentiable quadrotor, generic over float and dual scalars."""

from rigidiff.batch import RotationBatch, TransformBatch, broadcast_shapes
from rigidiff.errors import DomainError, GimbalLockWarning, ShapeError
from rigidiff.rotation import Rotation
from rigidiff.scalar import Dual, directional_derivative, dual_lift, gradient
from rigidiff.transform import RigidTransform

__all__ = [
    "Dual",
    "DomainError",
    "GimbalLockWarning",
    "RigidTransform",
    "Rotation",
    "RotationBatch",
    "ShapeError",
    "TransformBatch",
    "broadcast_shapes",
    "directional_derivative",
    "dual_lift",
    "gradient",
]

__version__ = "0.1.0"
