import math

import numpy as np
import pytest

from rigidiff import Rotation


def random_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def random_rotations(rng, n):
    return [Rotation.from_quat(q) for q in random_quats(rng, n)]


def random_rotvecs(rng, n, max_angle=math.pi - 1e-3):
    axis = rng.normal(size=(n, 3))
    axis /= np.linalg.norm(axis, axis=1, keepdims=True)
    angle = rng.uniform(0.0, max_angle, size=(n, 1))
    return axis * angle


def align_sign(q, ref):
    """Flip ``q`` onto the same hemisphere as ``ref``."""
    q = np.asarray(q, dtype=float)
    return -q if np.dot(q, ref) < 0.0 else q


def hamilton(a, b):
    """Independent scalar-last Hamilton product (numpy oracle)."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )


def quat_matrix_oracle(q):
    """Rotation matrix via the sandwich product on each basis vector."""
    q = np.asarray(q, dtype=float)
    conj = q * np.array([-1.0, -1.0, -1.0, 1.0])
    cols = []
    for e in np.eye(3):
        cols.append(hamilton(hamilton(q, np.append(e, 0.0)), conj)[:3])
    return np.array(cols).T


def axis_rot(axis, angle):
    c, s = math.cos(angle), math.sin(angle)
    if axis == 0:
        return np.array([[1, 0, 0], [0, c, -s], [0, s, c]])
    if axis == 1:
        return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_task(rng, horizon, far=False):
    """A randomized small optimization instance: (params, s0, u, ref).

    The reference is drawn around a rollout of nearby controls, so the loss is
    a realistic tracking error of order one. ``far=True`` instead draws
    reference positions at random, which gives losses in the tens to hundreds.
    """
    from rigidiff.drone import DroneParams, DroneState, InertiaMatrix, rollout
    from rigidiff.trajopt import ControlSequence, ReferenceTrajectory

    a = rng.normal(size=(3, 3))
    J = 0.01 * (a @ a.T / 3.0 + np.eye(3))
    params = DroneParams(
        J=InertiaMatrix(tuple(map(tuple, J))),
        mass=rng.uniform(0.3, 1.5),
        dt=rng.uniform(0.005, 0.03),
    )
    s0 = DroneState(
        Rotation.from_quat(random_quats(rng, 1)[0] * [0.3, 0.3, 0.3, 1.0]),
        omega=tuple(rng.normal(scale=0.5, size=3)),
        p=tuple(rng.normal(scale=0.5, size=3)),
        v=tuple(rng.normal(scale=0.5, size=3)),
    )
    scale = np.tile([0.02, 0.02, 0.02, 0.3], horizon)
    hover = ControlSequence.hover(params, horizon).as_array()
    u = hover + scale * rng.normal(size=4 * horizon)
    nominal = rollout(params, s0, ControlSequence(hover + scale * rng.normal(size=4 * horizon)).inputs())
    keep_p = rng.random(horizon + 1) < 0.7
    keep_q = rng.random(horizon + 1) < 0.7
    if far:
        positions = [tuple(x) for x in rng.normal(size=(horizon + 1, 3))]
    else:
        positions = [tuple(np.add(s.p, rng.normal(scale=0.05, size=3))) for s in nominal]
    attitudes = [s.q * Rotation.from_rotvec(rng.normal(scale=0.1, size=3)) for s in nominal]
    ref = ReferenceTrajectory(
        [x if k else None for x, k in zip(positions, keep_p)],
        [q if k else None for q, k in zip(attitudes, keep_q)],
        w_pos=rng.uniform(0.1, 2.0),
        w_att=rng.uniform(0.1, 2.0),
        # thrust is ~10 N, so thrust^2 would swamp tracking at larger weights
        w_reg=rng.uniform(0.0, 1e-3),
    )
    return params, s0, ControlSequence(u), ref


def gradient_rel_errors(ad, fd, floor=1e-8):
    mag = np.maximum(np.abs(ad), np.abs(fd))
    keep = mag > floor
    return np.abs(ad - fd)[keep] / mag[keep]


def extended_precision_fd_gradient(params, s0, u, ref, h=1e-6, digits=40):
    """Central differences (step ``h``) with the loss evaluated in ``digits`` digits."""
    from rigidiff.trajopt import finite_difference_gradient

    return finite_difference_gradient(params, s0, u, ref, h=h, digits=digits)


# acceptance criteria report: one line per criterion, printed after the run
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[n])
