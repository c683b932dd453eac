"""Component-level rotation math shared by the scalar and batched paths.

Every function takes quaternion / vector components as tuples plus a
namespace ``xp`` providing ``sqrt``, ``sin``, ``cos``, ``atan2`` and
``where``. The scalar classes pass :mod:`rigidiff.scalar`; the batch
classes pass a numpy-backed namespace. Both paths therefore perform the
same float operations in the same order, which is what makes batched
results bit-identical to scalar loops.

Selections use ``xp.where`` on precomputed candidates instead of Python
branching, and the discarded candidate is always evaluated on a safe
placeholder so no branch divides by zero.

Quaternions are scalar-last: ``(x, y, z, w)``.
"""

import math

# below this angle the exp/log factors switch to Taylor series
SMALL_ANGLE = 1e-3
_SMALL_ANGLE_SQ = SMALL_ANGLE * SMALL_ANGLE
# |q_vec| = sin(angle / 2) at the same threshold
_SMALL_HALF_SQ = math.sin(SMALL_ANGLE / 2) ** 2

GIMBAL_TOL = 1e-7


def quat_norm_sq(q):
    x, y, z, w = q
    return x * x + y * y + z * z + w * w


def quat_normalize(q, xp):
    n = xp.sqrt(quat_norm_sq(q))
    x, y, z, w = q
    return (x / n, y / n, z / n, w / n)


def quat_mul(a, b):
    """Hamilton product ``a (x) b``."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return (
        aw * bx + ax * bw + ay * bz - az * by,
        aw * by - ax * bz + ay * bw + az * bx,
        aw * bz + ax * by - ay * bx + az * bw,
        aw * bw - ax * bx - ay * by - az * bz,
    )


def quat_compose(a, b, xp):
    return quat_normalize(quat_mul(a, b), xp)


def quat_conj(q):
    x, y, z, w = q
    return (-x, -y, -z, w)


def cross(a, b):
    ax, ay, az = a
    bx, by, bz = b
    return (ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx)


def quat_apply(q, v, inverse=False):
    """Rotate ``v`` by ``q`` without forming the matrix.

    Uses ``v + w t + u x t`` with ``t = 2 u x v``, ``u`` the vector part.
    """
    x, y, z, w = q
    if inverse:
        x, y, z = -x, -y, -z
    u = (x, y, z)
    cx, cy, cz = cross(u, v)
    t = (2.0 * cx, 2.0 * cy, 2.0 * cz)
    ux, uy, uz = cross(u, t)
    return (v[0] + w * t[0] + ux, v[1] + w * t[1] + uy, v[2] + w * t[2] + uz)


def quat_to_matrix(q):
    x, y, z, w = q
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    xw, yw, zw = x * w, y * w, z * w
    return (
        (1.0 - 2.0 * (yy + zz), 2.0 * (xy - zw), 2.0 * (xz + yw)),
        (2.0 * (xy + zw), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - xw)),
        (2.0 * (xz - yw), 2.0 * (yz + xw), 1.0 - 2.0 * (xx + yy)),
    )


def matrix_to_quat(m, xp):
    """Largest-pivot extraction; the pivot component comes out positive."""
    (m00, m01, m02), (m10, m11, m12), (m20, m21, m22) = m
    tr = m00 + m11 + m22
    cands = (
        (1.0 + 2.0 * m00 - tr, m01 + m10, m02 + m20, m21 - m12),
        (m01 + m10, 1.0 + 2.0 * m11 - tr, m12 + m21, m02 - m20),
        (m02 + m20, m12 + m21, 1.0 + 2.0 * m22 - tr, m10 - m01),
        (m21 - m12, m02 - m20, m10 - m01, 1.0 + tr),
    )
    pivots = (m00, m11, m22, tr)
    best = pivots[0]
    q = cands[0]
    # first maximum wins on ties
    for piv, cand in zip(pivots[1:], cands[1:]):
        take = piv > best
        q = tuple(xp.where(take, c, s) for c, s in zip(cand, q))
        best = xp.where(take, piv, best)
    return quat_normalize(q, xp)


def rotvec_to_quat(v, xp):
    """Exponential map. Smooth through zero: the small branch uses only |v|^2."""
    vx, vy, vz = v
    t2 = vx * vx + vy * vy + vz * vz
    small = t2 < _SMALL_ANGLE_SQ
    theta = xp.sqrt(xp.where(small, 1.0, t2))
    half = 0.5 * theta
    t4 = t2 * t2
    scale = xp.where(
        small,
        0.5 - t2 / 48.0 + t4 / 3840.0 - t4 * t2 / 645120.0,
        xp.sin(half) / theta,
    )
    w = xp.where(
        small,
        1.0 - t2 / 8.0 + t4 / 384.0 - t4 * t2 / 46080.0,
        xp.cos(half),
    )
    return (scale * vx, scale * vy, scale * vz, w)


def negative_sign(q, xp):
    """True where ``-q`` is the canonical representative.

    Canonical form has ``w > 0``; for ``w == 0`` the first nonzero of
    ``x, y, z`` is positive.
    """
    x, y, z, w = q
    return xp.where(
        w < 0.0,
        True,
        xp.where(
            w > 0.0,
            False,
            xp.where(
                x < 0.0,
                True,
                xp.where(x > 0.0, False, xp.where(y < 0.0, True, xp.where(y > 0.0, False, z < 0.0))),
            ),
        ),
    )


def canonical(q, xp):
    neg = negative_sign(q, xp)
    return tuple(xp.where(neg, -c, c) for c in q)


def quat_to_rotvec(q, xp):
    """Logarithm map onto angles in [0, pi]; q and -q give the same result."""
    x, y, z, w = canonical(q, xp)
    s2 = x * x + y * y + z * z
    small = s2 < _SMALL_HALF_SQ
    s = xp.sqrt(xp.where(small, 1.0, s2))
    # atan(u)/u series with u = s / w; w is close to 1 on this branch
    ws = xp.where(small, w, 1.0)
    u2 = s2 / (ws * ws)
    u4 = u2 * u2
    series = 2.0 * (1.0 - u2 / 3.0 + u4 / 5.0 - u4 * u2 / 7.0) / ws
    factor = xp.where(small, series, 2.0 * xp.atan2(s, w) / s)
    return (factor * x, factor * y, factor * z)


def quat_angle(q, xp):
    """Rotation angle in [0, pi], with a zero tangent at the identity."""
    x, y, z = quat_to_rotvec(q, xp)
    n2 = x * x + y * y + z * z
    pos = n2 > 0.0
    return xp.where(pos, xp.sqrt(xp.where(pos, n2, 1.0)), 0.0 * n2)


def elemental_quat(axis, angle, xp):
    h = 0.5 * angle
    s = xp.sin(h)
    c = xp.cos(h)
    zero = 0.0 * s
    comps = [zero, zero, zero]
    comps[axis] = s
    return (comps[0], comps[1], comps[2], c)


def euler_to_quat(axes, intrinsic, angles, xp):
    q0 = elemental_quat(axes[0], angles[0], xp)
    q1 = elemental_quat(axes[1], angles[1], xp)
    q2 = elemental_quat(axes[2], angles[2], xp)
    if intrinsic:
        return quat_compose(quat_mul(q0, q1), q2, xp)
    return quat_compose(quat_mul(q2, q1), q0, xp)


def _safe_hypot(a, b, xp):
    n2 = a * a + b * b
    pos = n2 > 0.0
    return xp.sqrt(xp.where(pos, n2, 1.0)) * xp.where(pos, 1.0, 0.0)


def _wrap(a, xp):
    """Map an angle in (-3pi, 3pi) to (-pi, pi]."""
    two_pi = 2.0 * math.pi
    return xp.where(a <= -math.pi, a + two_pi, xp.where(a > math.pi, a - two_pi, a))


def quat_to_euler(q, axes, intrinsic, xp):
    """Quaternion to Euler angles, returning ``(angles, gimbal_lock)``.

    Direct quaternion method valid for all twelve axis sequences. The
    computation is done for the extrinsic sequence; intrinsic sequences
    reuse it with the axis order and the angle order reversed. At gimbal
    lock the last angle (in the caller's order) is pinned to zero.
    """
    i, j, k = axes
    if intrinsic:
        i, k = k, i
    proper = i == k
    if proper:
        k = 3 - i - j
    sign = (i - j) * (j - k) * (k - i) // 2
    x, y, z, w = q
    comp = (x, y, z)
    if proper:
        a, b, c, d = w, comp[i], comp[j], comp[k] * sign
    else:
        a = w - comp[j]
        b = comp[i] + comp[k] * sign
        c = comp[j] + w
        d = comp[k] * sign - comp[i]

    mid = 2.0 * xp.atan2(_safe_hypot(c, d, xp), _safe_hypot(a, b, xp))
    lock_zero = xp.fabs(mid) <= GIMBAL_TOL
    lock_pi = xp.fabs(mid - math.pi) <= GIMBAL_TOL
    locked = xp.where(lock_zero, True, lock_pi)

    half_sum = xp.atan2(b, a)
    half_diff = xp.atan2(d, c)
    # extrinsic order: first angle acts first
    first = half_sum - half_diff
    third = half_sum + half_diff
    if not proper:
        third = third * sign
        mid = mid - 0.5 * math.pi

    # degenerate: pin the caller's last angle, fold everything into the other
    if intrinsic:
        # caller order is (third, mid, first)
        lock_val = xp.where(lock_zero, 2.0 * half_sum, 2.0 * half_diff)
        if not proper:
            lock_val = lock_val * sign
        third = xp.where(locked, lock_val, third)
        first = xp.where(locked, 0.0 * first, first)
        out = (third, mid, first)
    else:
        lock_val = xp.where(lock_zero, 2.0 * half_sum, -2.0 * half_diff)
        # first = lock_val, third = 0
        first = xp.where(locked, lock_val, first)
        third = xp.where(locked, 0.0 * third, third)
        out = (first, mid, third)
    return (_wrap(out[0], xp), out[1], _wrap(out[2], xp)), locked
