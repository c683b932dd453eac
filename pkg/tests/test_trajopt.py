import math

import numpy as np
import pytest

from conftest import extended_precision_fd_gradient, gradient_rel_errors, random_task
from rigidiff import Rotation
from rigidiff.drone import DroneParams, DroneState, InertiaMatrix, rollout
from rigidiff.trajopt import (
    ControlSequence,
    OptimizationDiverged,
    OptimizerConfig,
    ReferenceTrajectory,
    finite_difference_gradient,
    inverse_softplus,
    loss,
    loss_gradient,
    optimize,
    softplus,
    value_and_gradient,
)


def zero_g_params(dt=0.01):
    return DroneParams(J=InertiaMatrix.diag(0.01, 0.01, 0.02), mass=1.0, dt=dt, gravity=(0.0, 0.0, 0.0))


# parameterization


@pytest.mark.parametrize("y", [1e-6, 0.1, 1.0, 4.905, 30.0, 800.0])
def test_softplus_inverse(y):
    assert softplus(inverse_softplus(y)) == pytest.approx(y, rel=1e-14)


def test_softplus_is_positive_and_stable():
    assert softplus(-800.0) >= 0.0
    assert softplus(800.0) == 800.0
    assert softplus(0.0) == pytest.approx(math.log(2.0), rel=1e-15)
    with pytest.raises(ValueError):
        inverse_softplus(0.0)


def test_control_sequence_layout():
    u = ControlSequence.from_controls([(0.1, 0.2, 0.3), (0.4, 0.5, 0.6)], [1.0, 2.0])
    assert u.horizon == 2
    x = u.as_array()
    assert x.shape == (8,)
    c = u.inputs()
    assert c[1].tau == (0.4, 0.5, 0.6)
    assert c[1].thrust == pytest.approx(2.0, rel=1e-14)
    with pytest.raises(ValueError):
        ControlSequence([1.0, 2.0, 3.0])
    with pytest.raises(ValueError):
        ControlSequence([])


def test_reference_validation():
    with pytest.raises(ValueError):
        ReferenceTrajectory([(0, 0, 0)] * 3, [None] * 2)
    with pytest.raises(ValueError):
        ReferenceTrajectory([(0, 0, 0)] * 3, w_pos=-1.0)
    ref = ReferenceTrajectory.ramp((0, 0, 0), (0, 0, 1), 10)
    assert ref.positions[0] == (0.0, 0.0, 0.0) and ref.positions[-1] == (0.0, 0.0, 1.0)
    assert ref.horizon == 10


def test_optimizer_config_validation():
    OptimizerConfig()
    for bad in ({"steps": 0}, {"learning_rate": 0.0}, {"beta1": 1.0}, {"beta2": 0.0}, {"clip_norm": -1.0}):
        with pytest.raises(ValueError):
            OptimizerConfig(**bad)


# loss


def test_loss_zero_on_reference():
    p = DroneParams.default()
    s0 = DroneState.at_rest((0.0, 0.0, 2.0))
    u = ControlSequence.hover(p, 20)
    assert loss(p, s0, u, ReferenceTrajectory.hold((0.0, 0.0, 2.0), 20, w_att=1.0)) == 0.0


def test_loss_zero_weights(rng):
    p, s0, u, ref = random_task(rng, 5)
    ref.w_pos = ref.w_att = ref.w_reg = 0.0
    assert loss(p, s0, u, ref) == 0.0


def test_loss_single_step_position():
    p = zero_g_params(dt=1.0)
    s0 = DroneState(Rotation.identity(), v=(1.0, 0.0, 0.0))
    u = ControlSequence.from_controls([(0.0, 0.0, 0.0)], [1e-300])
    # one step: p1 = p0 + dt * v1 = [1, 0, 0] (thrust is ~0)
    ref = ReferenceTrajectory([None, (0.0, 0.0, 0.0)])
    assert rollout(p, s0, u.inputs())[1].p[0] == 1.0
    assert loss(p, s0, u, ref) == pytest.approx(1.0, rel=1e-15)


def test_loss_attitude_term_is_squared_angle():
    p = zero_g_params()
    s0 = DroneState(Rotation.from_rotvec([0.0, 0.0, 0.3]))
    u = ControlSequence.from_controls([(0.0, 0.0, 0.0)], [1e-300])
    ref = ReferenceTrajectory([None, None], [Rotation.identity(), None], w_pos=0.0, w_att=2.0)
    assert loss(p, s0, u, ref) == pytest.approx(2.0 * 0.3**2, rel=1e-14)


def test_loss_regularization():
    p = zero_g_params()
    u = ControlSequence.from_controls([(1.0, 2.0, 0.0), (0.0, 0.0, 1.0)], [3.0, 1.0])
    ref = ReferenceTrajectory([None] * 3, w_pos=0.0, w_reg=0.5)
    assert loss(p, DroneState.at_rest(), u, ref) == pytest.approx(0.5 * (1 + 4 + 9 + 1 + 1), rel=1e-14)


def test_length_mismatch_is_rejected():
    p = DroneParams.default()
    with pytest.raises(ValueError):
        loss(p, DroneState.at_rest(), ControlSequence.hover(p, 5), ReferenceTrajectory.hold((0, 0, 0), 4))


# gradient


def test_gradient_zero_at_minimum():
    p = DroneParams.default()
    s0 = DroneState.at_rest((1.0, 0.0, 0.0))
    g = loss_gradient(p, s0, ControlSequence.hover(p, 10), ReferenceTrajectory.hold((1.0, 0.0, 0.0), 10, w_att=1.0))
    assert np.abs(g).max() < 1e-10


def test_gradient_against_central_differences(rng):
    for _ in range(10):
        task = random_task(rng, 5)
        ad = loss_gradient(*task)
        fd = extended_precision_fd_gradient(*task)
        assert gradient_rel_errors(ad, fd).max() < 1e-5


def test_gradient_on_badly_scaled_instances(rng):
    # losses in the tens to hundreds: double-precision differences get noisy,
    # the extended-precision stencil does not
    for _ in range(5):
        task = random_task(rng, int(rng.integers(1, 11)), far=True)
        assert gradient_rel_errors(loss_gradient(*task), extended_precision_fd_gradient(*task)).max() < 1e-5


def test_gradient_matches_double_precision_differences_where_resolvable(rng):
    task = random_task(rng, 4)
    ad = loss_gradient(*task)
    fd = finite_difference_gradient(*task)
    # the double stencil resolves components well above its ~1e-9 rounding floor
    big = np.abs(ad) > 1e-3
    assert np.all(np.abs(ad - fd)[big] / np.abs(ad[big]) < 1e-5)


def test_gradient_hover_task_to_one_part_per_million():
    p = DroneParams.default()
    s0 = DroneState(Rotation.from_rotvec([0.05, -0.02, 0.0]), omega=(0.1, 0.0, -0.1))
    u = ControlSequence(ControlSequence.hover(p, 6).as_array() + 0.01)
    ref = ReferenceTrajectory.hold((0.0, 0.0, 0.0), 6, w_att=1.0)
    ad = loss_gradient(p, s0, u, ref)
    fd = extended_precision_fd_gradient(p, s0, u, ref)
    assert gradient_rel_errors(ad, fd).max() < 1e-6


def test_weight_linearity(rng):
    p, s0, u, ref = random_task(rng, 6)
    ref.w_att = ref.w_reg = 0.0
    ref.w_pos = 1.0
    g1 = loss_gradient(p, s0, u, ref)
    ref.w_pos = 2.0
    g2 = loss_gradient(p, s0, u, ref)
    np.testing.assert_allclose(g2, 2.0 * g1, rtol=1e-12, atol=0)


def test_vectorized_gradient_is_bit_identical(rng):
    task = random_task(rng, 3)
    np.testing.assert_array_equal(loss_gradient(*task), loss_gradient(*task, vectorized=False))
    f, g = value_and_gradient(*task)
    assert f == loss(*task)
    np.testing.assert_array_equal(g, loss_gradient(*task))


# optimizer


def test_hover_task_stays_put():
    p = DroneParams.default()
    s0 = DroneState.at_rest()
    u0 = ControlSequence.hover(p, 30)
    ref = ReferenceTrajectory.hold((0.0, 0.0, 0.0), 30, w_att=1.0)
    res = optimize(p, s0, u0, ref, OptimizerConfig(steps=30))
    h = res.history
    assert all(b <= a for a, b in zip(h[1:], h[2:]))
    assert res.best_loss <= h[0] == pytest.approx(0.0, abs=1e-20)
    np.testing.assert_allclose(res.controls.as_array(), u0.as_array(), atol=1e-12)


def test_best_seen_is_monotone_and_returned(rng):
    p, s0, u, ref = random_task(rng, 5)
    res = optimize(p, s0, u, ref, OptimizerConfig(steps=60, learning_rate=0.05))
    assert res.best_loss == min(res.history)
    assert res.history[res.best_iteration] == res.best_loss
    assert loss(p, s0, res.controls, ref) == res.best_loss
    assert res.best_loss < res.history[0]


def test_convergence_window_stops_early():
    p = DroneParams.default()
    ref = ReferenceTrajectory.hold((0.0, 0.0, 0.0), 5, w_att=1.0)
    res = optimize(p, DroneState.at_rest(), ControlSequence.hover(p, 5), ref, OptimizerConfig(steps=500, window=10))
    assert res.converged
    assert res.iterations == 11


def test_optimizer_is_deterministic(rng):
    task = random_task(rng, 4)
    cfg = OptimizerConfig(steps=25)
    a = optimize(*task, cfg)
    b = optimize(*task, cfg)
    assert a.history == b.history
    np.testing.assert_array_equal(a.controls.as_array(), b.controls.as_array())


def test_divergence_names_iteration():
    p = DroneParams.default()
    u = ControlSequence(np.tile([1e300, 0.0, 0.0, 1.0], 3))
    ref = ReferenceTrajectory.hold((0.0, 0.0, 0.0), 3, w_att=1.0)
    with pytest.raises(OptimizationDiverged) as info:
        optimize(p, DroneState.at_rest(), u, ref)
    assert info.value.iteration == 0
    assert "iteration 0" in str(info.value)


@pytest.mark.slow
def test_hover_from_perturbation():
    p = DroneParams.default()
    rng = np.random.default_rng(0)
    H = 100
    u0 = ControlSequence.hover(p, H).as_array() + np.tile([0.01, 0.01, 0.01, 0.5], H) * rng.normal(size=4 * H)
    ref = ReferenceTrajectory.hold((0.0, 0.0, 0.0), H, w_pos=1.0, w_att=1.0)
    res = optimize(p, DroneState.at_rest(), ControlSequence(u0), ref, OptimizerConfig(steps=500, learning_rate=0.003))
    assert res.best_loss < 0.01 * res.history[0]


@pytest.mark.slow
def test_z_waypoint_task():
    p = DroneParams.default()
    H = 100
    ref = ReferenceTrajectory([None] * H + [(0.0, 0.0, 1.0)], [Rotation.identity()] * (H + 1), w_pos=1.0, w_att=0.1)
    res = optimize(p, DroneState.at_rest(), ControlSequence.hover(p, H), ref, OptimizerConfig(steps=500, learning_rate=0.01))
    final = rollout(p, DroneState.at_rest(), res.controls.inputs())[-1]
    assert np.linalg.norm(np.subtract(final.p, (0.0, 0.0, 1.0))) < 0.05
