import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from d2k_pipeline.dynamics import forward_kinematics, inverse_dynamics
from d2k_pipeline.trajectory import (
    EVALUATION_SCALING,
    NoiseModel,
    ProfileParams,
    PathFigure,
    TrajectoryError,
    iso_path_detailed,
    label_with_dynamics,
    min_segment_duration,
    quintic_segment,
    sample_random_motion,
)

from conftest import make_two_link_planar


def test_quintic_boundary_conditions():
    dq = np.array([1.0])
    duration = 2.0
    t = np.array([0.0, duration])
    pos, vel, acc = quintic_segment(dq, duration, t)
    assert pos[0, 0] == 0.0 and pos[1, 0] == 1.0
    assert vel[0, 0] == 0.0 and vel[1, 0] == 0.0
    assert acc[0, 0] == 0.0 and acc[1, 0] == 0.0


def test_quintic_peak_velocity_at_midpoint():
    dq = np.array([1.0])
    duration = 2.0
    _, vel, _ = quintic_segment(dq, duration, np.array([duration / 2]))
    assert abs(vel[0, 0] - 1.875 * 1.0 / duration) < 1e-12
    # the midpoint is the global maximum
    t = np.linspace(0, duration, 2001)
    _, vel_all, _ = quintic_segment(dq, duration, t)
    assert np.max(vel_all) <= vel[0, 0] + 1e-12


def test_random_motion_respects_scaled_limits(default_model):
    params = ProfileParams(velocity_scaling=0.7, acceleration_scaling=0.4,
                           n_waypoints=6, rng_seed=42)
    traj = sample_random_motion(default_model, params)
    assert np.all(traj.q >= default_model.q_min - 1e-9)
    assert np.all(traj.q <= default_model.q_max + 1e-9)
    assert np.all(np.abs(traj.qd) <= 0.7 * default_model.qd_max + 1e-9)
    assert np.all(np.abs(traj.qdd) <= 0.4 * default_model.qdd_max + 1e-9)


@settings(deadline=None, max_examples=25)
@given(seed=st.integers(0, 2**32 - 1),
       vel=st.floats(0.05, 1.0), acc=st.floats(0.05, 1.0),
       n_waypoints=st.integers(2, 8))
def test_random_motion_limits_property(seed, vel, acc, n_waypoints):
    model = make_two_link_planar()
    params = ProfileParams(velocity_scaling=vel, acceleration_scaling=acc,
                           n_waypoints=n_waypoints, rng_seed=seed)
    traj = sample_random_motion(model, params)
    traj.validate_limits(model, vel, acc)


def test_random_motion_deterministic(default_model):
    params = ProfileParams(rng_seed=77)
    t1 = sample_random_motion(default_model, params)
    t2 = sample_random_motion(default_model, params)
    assert np.array_equal(t1.q, t2.q)
    assert np.array_equal(t1.qd, t2.qd)
    assert np.array_equal(t1.qdd, t2.qdd)
    t3 = sample_random_motion(default_model, ProfileParams(rng_seed=78))
    assert not np.array_equal(t1.q, t3.q)


def test_random_motion_waypoint_bounds(default_model):
    lo = default_model.q_min.copy()
    hi = default_model.q_max.copy()
    lo[2], hi[2] = 0.5, 0.9
    params = ProfileParams(n_waypoints=4, rng_seed=3,
                           waypoint_q_min=lo, waypoint_q_max=hi)
    traj = sample_random_motion(default_model, params)
    assert np.all(traj.q[:, 2] >= 0.5 - 1e-9)
    assert np.all(traj.q[:, 2] <= 0.9 + 1e-9)


def test_random_motion_rejects_bad_params():
    with pytest.raises(TrajectoryError):
        ProfileParams(n_waypoints=1)
    with pytest.raises(TrajectoryError):
        ProfileParams(velocity_scaling=0.0)
    with pytest.raises(TrajectoryError):
        ProfileParams(acceleration_scaling=1.5)


def test_min_segment_duration_velocity_bound(default_model):
    params = ProfileParams(velocity_scaling=0.5, acceleration_scaling=1.0)
    dq = np.zeros(7)
    dq[0] = 1.0
    duration = min_segment_duration(dq, default_model, params)
    # peak velocity 1.875 * |dq| / T must equal the scaled limit when
    # velocity is the binding constraint
    assert 1.875 * 1.0 / duration == pytest.approx(0.5 * default_model.qd_max[0])


# --- figure path -------------------------------------------------------------


@pytest.fixture(scope="module")
def iso_result(default_model):
    params = ProfileParams(velocity_scaling=EVALUATION_SCALING,
                           acceleration_scaling=EVALUATION_SCALING,
                           rng_seed=0)
    return iso_path_detailed(default_model, params)


def test_evaluation_scaling_constant():
    assert EVALUATION_SCALING == 0.25


def test_iso_path_tracks_commanded_figure(default_model, iso_result):
    traj, points, labels = iso_result
    assert traj.n_samples == points.shape[0] == len(labels)
    worst = 0.0
    for k in range(traj.n_samples):
        pos, _ = forward_kinematics(default_model, traj.q[k])
        worst = max(worst, float(np.linalg.norm(pos - points[k])))
    assert worst < 1e-3


def test_iso_path_circle_radius(default_model, iso_result):
    traj, _, labels = iso_result
    figure = PathFigure()
    radius = figure.circle_radius
    for k, label in enumerate(labels):
        if label != "circle":
            continue
        pos, _ = forward_kinematics(default_model, traj.q[k])
        assert abs(np.linalg.norm(pos - figure.center) - radius) < 1e-3


def test_iso_path_within_scaled_limits(default_model, iso_result):
    traj, _, _ = iso_result
    traj.validate_limits(default_model, EVALUATION_SCALING, EVALUATION_SCALING)


def test_iso_path_derivatives_consistent(iso_result):
    traj, _, _ = iso_result
    dt = traj.dt
    fd_qd = (traj.q[2:] - traj.q[:-2]) / (2 * dt)
    assert np.max(np.abs(fd_qd - traj.qd[1:-1])) < 1e-3
    fd_qdd = (traj.qd[2:] - traj.qd[:-2]) / (2 * dt)
    assert np.max(np.abs(fd_qdd - traj.qdd[1:-1])) < 1e-3


def test_iso_path_unreachable_plane_rejected(default_model):
    params = ProfileParams(velocity_scaling=0.25, acceleration_scaling=0.25)
    figure = PathFigure(center=np.array([2.5, 0.0, 0.5]))
    with pytest.raises(TrajectoryError):
        iso_path_detailed(default_model, params, figure)


# --- labeling ----------------------------------------------------------------


def test_labels_exact_without_noise(two_link):
    params = ProfileParams(n_waypoints=3, rng_seed=5)
    traj = sample_random_motion(two_link, params)
    tau = label_with_dynamics(two_link, traj, NoiseModel(torque_noise_sigma=0.0))
    for k, state in enumerate(traj.states()):
        assert np.array_equal(tau[k], inverse_dynamics(two_link, state))


def test_labels_deterministic_with_noise(two_link):
    params = ProfileParams(n_waypoints=3, rng_seed=5)
    traj = sample_random_motion(two_link, params)
    noise = NoiseModel(torque_noise_sigma=0.05, rng_seed=11)
    t1 = label_with_dynamics(two_link, traj, noise)
    t2 = label_with_dynamics(two_link, traj, noise)
    assert np.array_equal(t1, t2)


def test_label_noise_std_in_range(two_link):
    params = ProfileParams(n_waypoints=40, sample_dt=0.005, rng_seed=19)
    traj = sample_random_motion(two_link, params)
    assert traj.n_samples * traj.n_joints >= 10_000
    clean = label_with_dynamics(two_link, traj, NoiseModel(torque_noise_sigma=0.0))
    noisy = label_with_dynamics(two_link, traj,
                                NoiseModel(torque_noise_sigma=0.05, rng_seed=23))
    std = float(np.std(noisy - clean))
    assert 0.045 <= std <= 0.055


def test_label_noise_sigma_validation():
    with pytest.raises(TrajectoryError):
        NoiseModel(torque_noise_sigma=-0.1)
