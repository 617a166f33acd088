"""Motion generation for training/validation/evaluation data.

Random point-to-point motions connect uniformly sampled waypoints with
minimum-jerk quintic segments; the segment duration is the smallest one
that respects the velocity- and acceleration-scaled joint limits, so the
limit invariants hold by construction:

    q(s)  = q0 + dq * (10 s^3 - 15 s^4 + 6 s^5),  s = t/T
    peak |qd|  = 1.875 |dq| / T      (at s = 1/2)
    peak |qdd| = 10/sqrt(3) |dq| / T^2

Evaluation motions trace a planar test figure (rectangle perimeter, both
diagonals, inscribed circle) at constant cruise speed with jerk-limited
ramps at the figure corners, converted to joint space by damped
least-squares differential IK.

Generators are pure and deterministic given their seed parameters.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    JointState,
    RobotModel,
    forward_kinematics,
    inverse_dynamics_batch,
    jacobian,
)

PEAK_VEL_FACTOR = 1.875           # max of d/ds (10s^3-15s^4+6s^5)
PEAK_ACC_FACTOR = 10.0 / math.sqrt(3.0)

RANDOM_MOTION = "random_motion"
ISO_PATH = "iso_path"

# fixed velocity/acceleration scaling for evaluation figure runs
EVALUATION_SCALING = 0.25


class TrajectoryError(ValueError):
    """Invalid generation parameters or an unreachable/untrackable path."""


@dataclass(frozen=True)
class ProfileParams:
    """Shared knobs for motion generation.

    ``waypoint_q_min`` / ``waypoint_q_max`` optionally narrow the waypoint
    sampling range per joint (used by coverage-directed collection); they
    never widen the model's own limits.
    """

    velocity_scaling: float = 0.5
    acceleration_scaling: float = 0.5
    sample_dt: float = 0.01
    n_waypoints: int = 5
    rng_seed: int = 0
    waypoint_q_min: np.ndarray | None = None
    waypoint_q_max: np.ndarray | None = None

    def __post_init__(self):
        if not 0 < self.velocity_scaling <= 1:
            raise TrajectoryError("velocity_scaling must be in (0, 1]")
        if not 0 < self.acceleration_scaling <= 1:
            raise TrajectoryError("acceleration_scaling must be in (0, 1]")
        if self.sample_dt <= 0:
            raise TrajectoryError("sample_dt must be > 0")
        if self.n_waypoints < 2:
            raise TrajectoryError("n_waypoints must be >= 2")


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian torque noise standing in for sensor inaccuracy."""

    torque_noise_sigma: float = 0.05
    rng_seed: int = 0

    def __post_init__(self):
        if self.torque_noise_sigma < 0:
            raise TrajectoryError("torque_noise_sigma must be >= 0")


@dataclass
class JointTrajectory:
    """Uniformly sampled joint-space motion; arrays are (n_samples, n_joints)."""

    dt: float
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    source: str

    @property
    def n_samples(self) -> int:
        return self.q.shape[0]

    @property
    def n_joints(self) -> int:
        return self.q.shape[1]

    def states(self):
        for k in range(self.n_samples):
            yield JointState(self.q[k], self.qd[k], self.qdd[k])

    def validate_limits(self, model: RobotModel, velocity_scaling: float,
                        acceleration_scaling: float, tol: float = 1e-9) -> None:
        if self.n_samples < 2:
            raise TrajectoryError("trajectory must have at least 2 samples")
        if (np.any(self.q < model.q_min - tol) or np.any(self.q > model.q_max + tol)):
            raise TrajectoryError("trajectory violates position limits")
        if np.any(np.abs(self.qd) > velocity_scaling * model.qd_max + tol):
            raise TrajectoryError("trajectory violates scaled velocity limits")
        if np.any(np.abs(self.qdd) > acceleration_scaling * model.qdd_max + tol):
            raise TrajectoryError("trajectory violates scaled acceleration limits")


# --- quintic segments --------------------------------------------------------


def quintic_segment(dq: np.ndarray, duration: float, t: np.ndarray):
    """Evaluate the minimum-jerk polynomial on a (n_t,) time grid.

    Returns (position offset, velocity, acceleration), each (n_t, n_joints).
    Boundary conditions: zero velocity and acceleration at both ends.
    """
    s = np.clip(t / duration, 0.0, 1.0)[:, None]
    pos = dq * (10 * s**3 - 15 * s**4 + 6 * s**5)
    vel = dq / duration * (30 * s**2 - 60 * s**3 + 30 * s**4)
    acc = dq / duration**2 * (60 * s - 180 * s**2 + 120 * s**3)
    return pos, vel, acc


def min_segment_duration(dq: np.ndarray, model: RobotModel, params: ProfileParams) -> float:
    """Smallest duration keeping every joint inside its scaled limits."""
    vel_limit = params.velocity_scaling * model.qd_max
    acc_limit = params.acceleration_scaling * model.qdd_max
    adq = np.abs(dq)
    t_vel = float(np.max(PEAK_VEL_FACTOR * adq / vel_limit))
    t_acc = float(np.max(np.sqrt(PEAK_ACC_FACTOR * adq / acc_limit)))
    return max(t_vel, t_acc, params.sample_dt)


def sample_random_motion(model: RobotModel, params: ProfileParams) -> JointTrajectory:
    """Point-to-point motion through uniformly sampled waypoints."""
    rng = np.random.default_rng(params.rng_seed)
    lo = model.q_min if params.waypoint_q_min is None else np.maximum(
        model.q_min, np.asarray(params.waypoint_q_min, dtype=float))
    hi = model.q_max if params.waypoint_q_max is None else np.minimum(
        model.q_max, np.asarray(params.waypoint_q_max, dtype=float))
    if np.any(lo >= hi):
        raise TrajectoryError("waypoint bounds produce an empty sampling range")
    waypoints = rng.uniform(lo, hi, size=(params.n_waypoints, model.n_joints))

    durations = [min_segment_duration(waypoints[i + 1] - waypoints[i], model, params)
                 for i in range(params.n_waypoints - 1)]
    starts = np.concatenate([[0.0], np.cumsum(durations)])
    total = starts[-1]

    n_samples = int(math.floor(total / params.sample_dt)) + 1
    times = np.arange(n_samples) * params.sample_dt
    q = np.empty((n_samples, model.n_joints))
    qd = np.empty_like(q)
    qdd = np.empty_like(q)
    seg = np.clip(np.searchsorted(starts, times, side="right") - 1,
                  0, params.n_waypoints - 2)
    for i in range(params.n_waypoints - 1):
        mask = seg == i
        if not np.any(mask):
            continue
        local = times[mask] - starts[i]
        dq = waypoints[i + 1] - waypoints[i]
        pos, vel, acc = quintic_segment(dq, durations[i], local)
        q[mask] = waypoints[i] + pos
        qd[mask] = vel
        qdd[mask] = acc

    traj = JointTrajectory(params.sample_dt, q, qd, qdd, RANDOM_MOTION)
    traj.validate_limits(model, params.velocity_scaling, params.acceleration_scaling)
    return traj


# --- planar test figure -------------------------------------------------------


@dataclass(frozen=True)
class PathFigure:
    """Rectangle + both diagonals + inscribed circle in a workspace plane."""

    center: np.ndarray = field(default_factory=lambda: np.array([0.45, 0.0, 0.35]))
    u_axis: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0]))
    v_axis: np.ndarray = field(default_factory=lambda: np.array([0.0, 1.0, 0.0]))
    width: float = 0.30
    height: float = 0.20

    def __post_init__(self):
        u = np.asarray(self.u_axis, dtype=float)
        v = np.asarray(self.v_axis, dtype=float)
        u = u / np.linalg.norm(u)
        v = v - (v @ u) * u
        v = v / np.linalg.norm(v)
        object.__setattr__(self, "u_axis", u)
        object.__setattr__(self, "v_axis", v)
        object.__setattr__(self, "center", np.asarray(self.center, dtype=float))
        if self.width <= 0 or self.height <= 0:
            raise TrajectoryError("figure extents must be > 0")

    @property
    def circle_radius(self) -> float:
        return min(self.width, self.height) / 2.0

    def point(self, coord_u: float, coord_v: float) -> np.ndarray:
        return self.center + coord_u * self.u_axis + coord_v * self.v_axis


@dataclass(frozen=True)
class _Line:
    start: np.ndarray
    end: np.ndarray
    label: str

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.end - self.start))

    def at(self, s: float) -> np.ndarray:
        frac = s / self.length if self.length > 0 else 0.0
        return self.start + frac * (self.end - self.start)


@dataclass(frozen=True)
class _Circle:
    center: np.ndarray
    radius: float
    u_axis: np.ndarray
    v_axis: np.ndarray
    label: str

    @property
    def length(self) -> float:
        return 2 * math.pi * self.radius

    def at(self, s: float) -> np.ndarray:
        ang = s / self.radius
        return (self.center + self.radius * math.cos(ang) * self.u_axis
                + self.radius * math.sin(ang) * self.v_axis)


def figure_components(figure: PathFigure):
    """Connected tour: perimeter, first diagonal, second diagonal, circle.

    Two retrace/transition lines keep the tour connected so the robot never
    jumps; they lie inside the figure plane.
    """
    hw, hh = figure.width / 2, figure.height / 2
    corner_a = figure.point(-hw, -hh)
    corner_b = figure.point(hw, -hh)
    corner_c = figure.point(hw, hh)
    corner_d = figure.point(-hw, hh)
    circle_start = figure.center + figure.circle_radius * figure.u_axis
    return [
        _Line(corner_a, corner_b, "edge_ab"),
        _Line(corner_b, corner_c, "edge_bc"),
        _Line(corner_c, corner_d, "edge_cd"),
        _Line(corner_d, corner_a, "edge_da"),
        _Line(corner_a, corner_c, "diagonal_ac"),
        _Line(corner_c, corner_b, "transition_cb"),
        _Line(corner_b, corner_d, "diagonal_bd"),
        _Line(corner_d, circle_start, "transition_to_circle"),
        _Circle(figure.center, figure.circle_radius, figure.u_axis, figure.v_axis,
                "circle"),
    ]


def _ramp_fraction(x: np.ndarray) -> np.ndarray:
    """Integral of the quintic smoothstep: distance fraction covered in a ramp."""
    return 2.5 * x**4 - 3 * x**5 + x**6


def _component_schedule(length: float, cruise_speed: float, accel: float):
    """(duration, s_of_t) for one component with smooth ramp-in/out.

    Speed profile: quintic-smoothstep ramp 0 -> v, constant cruise, mirrored
    ramp v -> 0.  If the component is too short for both ramps the cruise
    speed is reduced so the ramps just meet.
    """
    ramp_time = PEAK_VEL_FACTOR * cruise_speed / accel
    if cruise_speed * ramp_time > length:
        cruise_speed = math.sqrt(length * accel / PEAK_VEL_FACTOR)
        ramp_time = PEAK_VEL_FACTOR * cruise_speed / accel
    duration = length / cruise_speed + ramp_time

    def s_of_t(t: float) -> float:
        if t <= 0:
            return 0.0
        if t >= duration:
            return length
        if t < ramp_time:
            return cruise_speed * ramp_time * _ramp_fraction(t / ramp_time)
        if t <= duration - ramp_time:
            return cruise_speed * ramp_time / 2 + cruise_speed * (t - ramp_time)
        return length - cruise_speed * ramp_time * _ramp_fraction((duration - t) / ramp_time)

    return duration, s_of_t


def iso_figure_targets(figure: PathFigure, params: ProfileParams,
                       cartesian_speed_ref: float = 0.6,
                       cartesian_accel_ref: float = 2.0):
    """Commanded Cartesian samples for the full figure tour.

    Returns (points (n,3), labels list[str]).  Cruise speed and acceleration
    budget scale linearly with the velocity/acceleration scaling factors.
    """
    speed = params.velocity_scaling * cartesian_speed_ref
    accel = params.acceleration_scaling * cartesian_accel_ref
    components = figure_components(figure)
    schedules = [_component_schedule(c.length, speed, accel) for c in components]
    starts = np.concatenate([[0.0], np.cumsum([s[0] for s in schedules])])
    total = starts[-1]

    n_samples = int(math.floor(total / params.sample_dt)) + 1
    points = np.empty((n_samples, 3))
    labels = []
    for k in range(n_samples):
        t = k * params.sample_dt
        idx = min(int(np.searchsorted(starts, t, side="right")) - 1, len(components) - 1)
        duration, s_of_t = schedules[idx]
        comp = components[idx]
        points[k] = comp.at(s_of_t(t - starts[idx]))
        labels.append(comp.label)
    return points, labels


def solve_position_ik(model: RobotModel, q_init: np.ndarray, target: np.ndarray,
                      damping: float = 1e-2, tol: float = 1e-6,
                      max_iters: int = 100) -> tuple[np.ndarray, float]:
    """Damped least-squares IK on the position task, joint limits clamped."""
    q = np.array(q_init, dtype=float)
    residual = math.inf
    for _ in range(max_iters):
        pos, _ = forward_kinematics(model, q)
        error = target - pos
        residual = float(np.linalg.norm(error))
        if residual < tol:
            break
        jac_lin = jacobian(model, q)[:3]
        gram = jac_lin @ jac_lin.T + damping**2 * np.eye(3)
        q = q + jac_lin.T @ np.linalg.solve(gram, error)
        q = np.clip(q, model.q_min, model.q_max)
    return q, residual


DEFAULT_IK_SEED = np.array([0.0, -0.785, 0.0, -2.356, 0.0, 1.571, 0.785])


def iso_path_detailed(model: RobotModel, params: ProfileParams,
                      figure: PathFigure | None = None,
                      ik_seed: np.ndarray | None = None,
                      tracking_bound: float = 1e-3):
    """(trajectory, commanded points, per-sample component labels)."""
    figure = figure or PathFigure()
    if ik_seed is None:
        if model.n_joints == DEFAULT_IK_SEED.shape[0]:
            ik_seed = DEFAULT_IK_SEED
        else:
            ik_seed = 0.5 * (model.q_min + model.q_max)
    points, labels = iso_figure_targets(figure, params)

    # reach the figure start before tracking begins
    q, residual = solve_position_ik(model, ik_seed, points[0], max_iters=500)
    if residual > tracking_bound:
        raise TrajectoryError(
            f"figure start unreachable: residual {residual:.2e} m after IK seed solve")

    n_samples = points.shape[0]
    q_path = np.empty((n_samples, model.n_joints))
    for k in range(n_samples):
        q, residual = solve_position_ik(model, q, points[k])
        if residual > tracking_bound:
            raise TrajectoryError(
                f"IK diverged at sample {k}: residual {residual:.2e} m")
        q_path[k] = q

    qd = np.empty_like(q_path)
    qdd = np.empty_like(q_path)
    dt = params.sample_dt
    qd[1:-1] = (q_path[2:] - q_path[:-2]) / (2 * dt)
    qd[0] = (q_path[1] - q_path[0]) / dt
    qd[-1] = (q_path[-1] - q_path[-2]) / dt
    qdd[1:-1] = (qd[2:] - qd[:-2]) / (2 * dt)
    qdd[0] = (qd[1] - qd[0]) / dt
    qdd[-1] = (qd[-1] - qd[-2]) / dt

    traj = JointTrajectory(dt, q_path, qd, qdd, ISO_PATH)
    traj.validate_limits(model, params.velocity_scaling, params.acceleration_scaling)
    return traj, points, labels


def iso_path(model: RobotModel, params: ProfileParams,
             figure: PathFigure | None = None) -> JointTrajectory:
    """Joint-space tracking of the planar test figure (evaluation motions)."""
    traj, _, _ = iso_path_detailed(model, params, figure)
    return traj


def label_with_dynamics(model: RobotModel, traj: JointTrajectory,
                        noise: NoiseModel) -> np.ndarray:
    """Ground-truth torques for every sample, plus Gaussian sensor noise.

    Returns a (n_samples, n_joints) array in N m.
    """
    if traj.n_joints != model.n_joints:
        raise TrajectoryError(
            f"trajectory has {traj.n_joints} joints, model has {model.n_joints}")
    tau = inverse_dynamics_batch(model, traj.q, traj.qd, traj.qdd)
    if noise.torque_noise_sigma > 0:
        rng = np.random.default_rng(noise.rng_seed)
        tau = tau + rng.normal(0.0, noise.torque_noise_sigma, size=tau.shape)
    return tau
