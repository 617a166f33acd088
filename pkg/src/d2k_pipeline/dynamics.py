"""Rigid-body dynamics of an N-joint serial manipulator.

All kinematics follow the modified Denavit-Hartenberg convention: joint i
rotates about the z-axis of link frame i, and the transform from frame i-1
to frame i is

    T = RotX(alpha[i]) * TransX(a[i]) * RotZ(theta[i] + theta_offset[i]) * TransZ(d[i])

so ``alpha[i]`` / ``a[i]`` are the twist and offset of the *previous* link,
exactly as modified-DH parameter tables are written.  An optional flange
transform (same structure, no joint variable) places the physical flange
distal to the last joint axis.

Inverse dynamics is the recursive Newton-Euler algorithm (outward velocity /
acceleration pass, inward force pass), O(n), plus a viscous friction term
``tau_f = viscous_friction * qd``.  Energy bookkeeping (``total_energy``)
is an independent path through the same model and is used by the test suite
as a power-balance oracle for the torque computation.

Units are SI throughout; angles in radians.  All functions are pure and
safe to call concurrently.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

GRAVITY_DEFAULT = (0.0, 0.0, -9.81)


class DynamicsError(ValueError):
    """Invalid model, state, or perturbation."""


class ModelFileError(DynamicsError):
    """Robot model file failed validation; message carries the file line."""


@dataclass(frozen=True)
class RobotModel:
    """Kinematic and inertial description of a serial arm.

    Per-joint arrays all have length ``n_joints``.  ``com`` holds each
    link's center of mass in its own frame; ``inertia`` the rotational
    inertia about that center of mass, expressed in the link frame.
    """

    name: str
    n_joints: int
    a: np.ndarray            # [m]
    d: np.ndarray            # [m]
    alpha: np.ndarray        # [rad]
    theta_offset: np.ndarray  # [rad]
    mass: np.ndarray         # [kg]
    com: np.ndarray          # (n, 3) [m]
    inertia: np.ndarray      # (n, 3, 3) [kg m^2]
    q_min: np.ndarray        # [rad]
    q_max: np.ndarray        # [rad]
    qd_max: np.ndarray       # [rad/s]
    qdd_max: np.ndarray      # [rad/s^2]
    tau_max: np.ndarray      # [N m]
    gravity: np.ndarray = field(default_factory=lambda: np.array(GRAVITY_DEFAULT))
    viscous_friction: np.ndarray | None = None  # [N m s / rad]
    flange: np.ndarray = field(default_factory=lambda: np.zeros(3))  # (a, d, alpha)

    def __post_init__(self):
        n = self.n_joints
        if n < 1:
            raise DynamicsError("n_joints must be >= 1")
        arrays = {
            "a": (n,), "d": (n,), "alpha": (n,), "theta_offset": (n,),
            "mass": (n,), "com": (n, 3), "inertia": (n, 3, 3),
            "q_min": (n,), "q_max": (n,), "qd_max": (n,), "qdd_max": (n,),
            "tau_max": (n,), "gravity": (3,), "flange": (3,),
        }
        for name, shape in arrays.items():
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise DynamicsError(f"{name} must have shape {shape}, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise DynamicsError(f"{name} contains non-finite values")
            object.__setattr__(self, name, arr)
        fric = self.viscous_friction
        fric = np.zeros(n) if fric is None else np.asarray(fric, dtype=float)
        if fric.shape != (n,) or not np.all(np.isfinite(fric)):
            raise DynamicsError(f"viscous_friction must be a finite length-{n} vector")
        if np.any(fric < 0):
            raise DynamicsError("viscous_friction must be >= 0")
        object.__setattr__(self, "viscous_friction", fric)
        if np.any(self.mass <= 0):
            raise DynamicsError("mass must be > 0 for every link")
        for i in range(n):
            ine = self.inertia[i]
            if not np.allclose(ine, ine.T, atol=1e-12):
                raise DynamicsError(f"inertia[{i}] is not symmetric")
            if np.any(np.linalg.eigvalsh(ine) <= 0):
                raise DynamicsError(f"inertia[{i}] is not positive definite")
        if np.any(self.q_min >= self.q_max):
            raise DynamicsError("q_min must be < q_max for every joint")
        for name in ("qd_max", "qdd_max", "tau_max"):
            if np.any(getattr(self, name) <= 0):
                raise DynamicsError(f"{name} must be > 0 for every joint")


@dataclass(frozen=True)
class JointState:
    """One dynamics sample: positions, velocities, accelerations."""

    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray

    def __post_init__(self):
        for name in ("q", "qd", "qdd"):
            arr = np.asarray(getattr(self, name), dtype=float)
            object.__setattr__(self, name, arr)
        n = self.q.shape
        if self.qd.shape != n or self.qdd.shape != n or self.q.ndim != 1:
            raise DynamicsError("q, qd, qdd must be 1-d vectors of equal length")
        for name in ("q", "qd", "qdd"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise DynamicsError(f"{name} contains non-finite values")


@dataclass(frozen=True)
class InstancePerturbation:
    """Per-instance physical deviations folded onto a base model.

    Mass scales change link mass and inertia proportionally (same geometry,
    scaled density); the payload is a point mass rigidly attached to the
    last link at ``payload_offset`` in that link's frame.
    """

    instance_id: str
    mass_scale: np.ndarray | float = 1.0
    payload_mass: float = 0.0
    payload_offset: np.ndarray = field(default_factory=lambda: np.zeros(3))
    friction_scale: float = 1.0


def _check_state(model: RobotModel, state: JointState) -> None:
    if state.q.shape[0] != model.n_joints:
        raise DynamicsError(
            f"state has {state.q.shape[0]} joints, model {model.name!r} has {model.n_joints}"
        )


def _link_rotations_and_origins(model: RobotModel, q: np.ndarray):
    """Per-joint (R_i, P_i): rotation and origin of frame i expressed in frame i-1."""
    rotations = []
    origins = []
    for i in range(model.n_joints):
        ca, sa = math.cos(model.alpha[i]), math.sin(model.alpha[i])
        th = q[i] + model.theta_offset[i]
        ct, st = math.cos(th), math.sin(th)
        rotations.append(np.array([
            [ct, -st, 0.0],
            [st * ca, ct * ca, -sa],
            [st * sa, ct * sa, ca],
        ]))
        origins.append(np.array([model.a[i], -sa * model.d[i], ca * model.d[i]]))
    return rotations, origins


def _flange_transform(model: RobotModel):
    """(rotation, origin) of the flange frame expressed in the last link frame."""
    fa, fd, falpha = model.flange
    ca, sa = math.cos(falpha), math.sin(falpha)
    rot = np.array([
        [1.0, 0.0, 0.0],
        [0.0, ca, -sa],
        [0.0, sa, ca],
    ])
    pos = np.array([fa, -sa * fd, ca * fd])
    return rot, pos


def _batch_rotations(model: RobotModel, q: np.ndarray):
    """Per-joint stacked rotations (list of (T, 3, 3)) and constant origins."""
    rotations = []
    origins = []
    for i in range(model.n_joints):
        ca, sa = math.cos(model.alpha[i]), math.sin(model.alpha[i])
        th = q[:, i] + model.theta_offset[i]
        ct, st = np.cos(th), np.sin(th)
        rot = np.empty((q.shape[0], 3, 3))
        rot[:, 0, 0] = ct
        rot[:, 0, 1] = -st
        rot[:, 0, 2] = 0.0
        rot[:, 1, 0] = st * ca
        rot[:, 1, 1] = ct * ca
        rot[:, 1, 2] = -sa
        rot[:, 2, 0] = st * sa
        rot[:, 2, 1] = ct * sa
        rot[:, 2, 2] = ca
        rotations.append(rot)
        origins.append(np.array([model.a[i], -sa * model.d[i], ca * model.d[i]]))
    return rotations, origins


def _cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Row-wise cross product of (T, 3) arrays (faster than np.cross here)."""
    out = np.empty_like(a) if a.shape == b.shape else np.empty(
        np.broadcast_shapes(a.shape, b.shape))
    a0, a1, a2 = a[..., 0], a[..., 1], a[..., 2]
    b0, b1, b2 = b[..., 0], b[..., 1], b[..., 2]
    out[..., 0] = a1 * b2 - a2 * b1
    out[..., 1] = a2 * b0 - a0 * b2
    out[..., 2] = a0 * b1 - a1 * b0
    return out


def _rot_apply(rot: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """(T,3,3) x (T,3) -> (T,3)."""
    return np.einsum("tij,tj->ti", rot, vec)


def _rot_apply_t(rot: np.ndarray, vec: np.ndarray) -> np.ndarray:
    """Transposed apply: R^T v, (T,3,3) x (T,3) -> (T,3)."""
    return np.einsum("tji,tj->ti", rot, vec)


def inverse_dynamics_batch(model: RobotModel, q: np.ndarray, qd: np.ndarray,
                           qdd: np.ndarray) -> np.ndarray:
    """Joint torques for a whole (T, n) sample batch at once.

    Recursive Newton-Euler in link coordinates, vectorized over samples.
    Gravity enters through the base acceleration trick: the base frame is
    given acceleration -g, which is equivalent to a uniform gravity field g
    acting on every link.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    qd = np.atleast_2d(np.asarray(qd, dtype=float))
    qdd = np.atleast_2d(np.asarray(qdd, dtype=float))
    n = model.n_joints
    if q.shape[1] != n or qd.shape != q.shape or qdd.shape != q.shape:
        raise DynamicsError(
            f"batch shapes must be (T, {n}); got {q.shape}, {qd.shape}, {qdd.shape}")
    if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))
            and np.all(np.isfinite(qdd))):
        raise DynamicsError("batch contains non-finite values")
    steps = q.shape[0]
    rotations, origins = _batch_rotations(model, q)

    omega = []
    omega_dot = []
    vdot_com = []
    w_prev = np.zeros((steps, 3))
    wd_prev = np.zeros((steps, 3))
    vd_prev = np.broadcast_to(-model.gravity, (steps, 3))

    # outward pass: velocities and accelerations, tip-ward
    for i in range(n):
        rot = rotations[i]
        w_in = _rot_apply_t(rot, w_prev)  # previous link's omega seen from frame i
        w = w_in.copy()
        w[:, 2] += qd[:, i]
        qd_z = np.zeros((steps, 3))
        qd_z[:, 2] = qd[:, i]
        wd = _rot_apply_t(rot, wd_prev) + _cross(w_in, qd_z)
        wd[:, 2] += qdd[:, i]
        vd = _rot_apply_t(rot, _cross(wd_prev, origins[i][None, :])
                          + _cross(w_prev, _cross(w_prev, origins[i][None, :]))
                          + vd_prev)
        pc = model.com[i][None, :]
        vdc = _cross(wd, pc) + _cross(w, _cross(w, pc)) + vd
        omega.append(w)
        omega_dot.append(wd)
        vdot_com.append(vdc)
        w_prev, wd_prev, vd_prev = w, wd, vd

    # inward pass: forces and moments, base-ward
    tau = np.empty((steps, n))
    f_next = np.zeros((steps, 3))
    n_next = np.zeros((steps, 3))
    for i in range(n - 1, -1, -1):
        inertial_force = model.mass[i] * vdot_com[i]
        i_w = np.einsum("ij,tj->ti", model.inertia[i], omega[i])
        inertial_moment = (np.einsum("ij,tj->ti", model.inertia[i], omega_dot[i])
                           + _cross(omega[i], i_w))
        if i == n - 1:
            f_i = inertial_force
            n_child = np.zeros((steps, 3))
        else:
            f_child = _rot_apply(rotations[i + 1], f_next)
            n_child = (_rot_apply(rotations[i + 1], n_next)
                       + _cross(origins[i + 1][None, :], f_child))
            f_i = f_child + inertial_force
        n_i = n_child + inertial_moment + _cross(model.com[i][None, :],
                                                 inertial_force)
        tau[:, i] = n_i[:, 2] + model.viscous_friction[i] * qd[:, i]
        f_next, n_next = f_i, n_i
    return tau


def inverse_dynamics(model: RobotModel, state: JointState) -> np.ndarray:
    """Joint torques realizing (q, qd, qdd) under gravity and viscous friction.

    Single-sample view of inverse_dynamics_batch, so per-sample labels and
    batched labels are bit-identical.
    """
    _check_state(model, state)
    return inverse_dynamics_batch(
        model, state.q[None, :], state.qd[None, :], state.qdd[None, :])[0]


def total_energy(model: RobotModel, state: JointState) -> tuple[float, float]:
    """(kinetic, potential) energy in joules.

    Potential energy is zero for a point mass at the base frame origin:
    U = -sum_i m_i * g . c_i with c_i the world com position.
    """
    _check_state(model, state)
    n = model.n_joints
    rotations, origins = _link_rotations_and_origins(model, state.q)

    rot_w = np.eye(3)
    pos_w = np.zeros(3)
    omega_w = np.zeros(3)
    vel_origin_w = np.zeros(3)
    kinetic = 0.0
    potential = 0.0
    for i in range(n):
        pos_new = pos_w + rot_w @ origins[i]
        # frame-i origin lies on joint axis i, so it is a material point of link i-1
        vel_origin_w = vel_origin_w + np.cross(omega_w, pos_new - pos_w)
        rot_w = rot_w @ rotations[i]
        pos_w = pos_new
        axis_w = rot_w @ np.array([0.0, 0.0, 1.0])
        omega_w = omega_w + state.qd[i] * axis_w

        com_arm = rot_w @ model.com[i]
        vel_com = vel_origin_w + np.cross(omega_w, com_arm)
        inertia_w = rot_w @ model.inertia[i] @ rot_w.T
        kinetic += 0.5 * model.mass[i] * float(vel_com @ vel_com)
        kinetic += 0.5 * float(omega_w @ (inertia_w @ omega_w))
        potential -= model.mass[i] * float(model.gravity @ (pos_w + com_arm))
    return kinetic, potential


def _quaternion_from_matrix(rot: np.ndarray) -> np.ndarray:
    """Unit quaternion (w, x, y, z) from a rotation matrix, Shepperd's method."""
    tr = np.trace(rot)
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        quat = np.array([
            0.25 * s,
            (rot[2, 1] - rot[1, 2]) / s,
            (rot[0, 2] - rot[2, 0]) / s,
            (rot[1, 0] - rot[0, 1]) / s,
        ])
    else:
        k = int(np.argmax(np.diag(rot)))
        i, j = (k + 1) % 3, (k + 2) % 3
        s = math.sqrt(rot[k, k] - rot[i, i] - rot[j, j] + 1.0) * 2.0
        quat = np.zeros(4)
        quat[0] = (rot[j, i] - rot[i, j]) / s
        quat[1 + k] = 0.25 * s
        quat[1 + i] = (rot[i, k] + rot[k, i]) / s
        quat[1 + j] = (rot[j, k] + rot[k, j]) / s
    quat = quat / np.linalg.norm(quat)
    if quat[0] < 0:
        quat = -quat
    return quat


def forward_kinematics(model: RobotModel, q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Flange pose: (position, unit quaternion (w, x, y, z)) in the base frame."""
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_joints,):
        raise DynamicsError(f"q must have length {model.n_joints}, got shape {q.shape}")
    if not np.all(np.isfinite(q)):
        raise DynamicsError("q contains non-finite values")
    rotations, origins = _link_rotations_and_origins(model, q)
    rot = np.eye(3)
    pos = np.zeros(3)
    for i in range(model.n_joints):
        pos = pos + rot @ origins[i]
        rot = rot @ rotations[i]
    frot, fpos = _flange_transform(model)
    pos = pos + rot @ fpos
    rot = rot @ frot
    return pos, _quaternion_from_matrix(rot)


def _joint_frames(model: RobotModel, q: np.ndarray):
    """World-frame joint axes and origins plus the flange position."""
    rotations, origins = _link_rotations_and_origins(model, q)
    rot = np.eye(3)
    pos = np.zeros(3)
    axes = []
    points = []
    for i in range(model.n_joints):
        pos = pos + rot @ origins[i]
        rot = rot @ rotations[i]
        axes.append(rot @ np.array([0.0, 0.0, 1.0]))
        points.append(pos)
    _, fpos = _flange_transform(model)
    flange = pos + rot @ fpos
    return axes, points, flange


def jacobian(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """6 x n geometric Jacobian at the flange: rows 0-2 linear, 3-5 angular."""
    q = np.asarray(q, dtype=float)
    if q.shape != (model.n_joints,):
        raise DynamicsError(f"q must have length {model.n_joints}, got shape {q.shape}")
    axes, points, flange = _joint_frames(model, q)
    jac = np.zeros((6, model.n_joints))
    for i in range(model.n_joints):
        jac[:3, i] = np.cross(axes[i], flange - points[i])
        jac[3:, i] = axes[i]
    return jac


def mass_matrix(model: RobotModel, q: np.ndarray) -> np.ndarray:
    """Joint-space inertia matrix assembled column-wise from inverse dynamics.

    Column j is the torque for unit qdd_j with zero velocity and zero
    gravity, so friction and velocity terms drop out identically.
    """
    n = model.n_joints
    zero_g = replace(model, gravity=np.zeros(3))
    q_batch = np.tile(np.asarray(q, dtype=float), (n, 1))
    tau = inverse_dynamics_batch(zero_g, q_batch, np.zeros((n, n)), np.eye(n))
    return tau.T


def apply_perturbation(model: RobotModel, pert: InstancePerturbation) -> RobotModel:
    """Perturbed copy of ``model``; kinematic parameters are untouched.

    The payload (point mass on the last link) is folded in via the combined
    center of mass and the parallel-axis theorem.
    """
    n = model.n_joints
    scale = np.asarray(pert.mass_scale, dtype=float)
    if scale.ndim == 0:
        scale = np.full(n, float(scale))
    if scale.shape != (n,):
        raise DynamicsError(f"mass_scale must be scalar or length-{n}")
    mass = model.mass * scale
    if np.any(mass <= 0):
        raise DynamicsError("perturbation produces non-positive link mass")
    if pert.payload_mass < 0:
        raise DynamicsError("payload_mass must be >= 0")
    # density scaling: inertia scales with mass, com fixed
    inertia = model.inertia * scale[:, None, None]
    com = model.com.copy()

    if pert.payload_mass > 0:
        m_link = mass[n - 1]
        m_pay = float(pert.payload_mass)
        c_link = com[n - 1]
        c_pay = np.asarray(pert.payload_offset, dtype=float)
        m_tot = m_link + m_pay
        c_tot = (m_link * c_link + m_pay * c_pay) / m_tot

        def shift(m, offset):
            return m * (float(offset @ offset) * np.eye(3) - np.outer(offset, offset))

        inertia_tot = (inertia[n - 1] + shift(m_link, c_link - c_tot)
                       + shift(m_pay, c_pay - c_tot))
        mass = mass.copy()
        mass[n - 1] = m_tot
        com[n - 1] = c_tot
        inertia = inertia.copy()
        inertia[n - 1] = inertia_tot

    if pert.friction_scale < 0:
        raise DynamicsError("friction_scale must be >= 0")
    friction = model.viscous_friction * pert.friction_scale
    return replace(model, mass=mass, com=com, inertia=inertia, viscous_friction=friction)


# ---------------------------------------------------------------------------
# model file loading

_MODEL_FIELDS = {
    "name": str,
    "n_joints": int,
    "a": list, "d": list, "alpha": list, "theta_offset": list,
    "mass": list, "com": list, "inertia": list,
    "q_min": list, "q_max": list, "qd_max": list, "qdd_max": list, "tau_max": list,
    "gravity": list,
    "viscous_friction": list,
    "flange": list,
}
_OPTIONAL_FIELDS = {"gravity", "viscous_friction", "flange"}


def _yaml_line_map(text: str) -> dict[str, int]:
    """Top-level key -> 1-based line number, for loader error messages."""
    lines = {}
    try:
        node = yaml.compose(text)
    except yaml.YAMLError:
        return lines
    if node is None or not hasattr(node, "value"):
        return lines
    for key_node, _value in node.value:
        lines[key_node.value] = key_node.start_mark.line + 1
    return lines


def load_robot_model(path) -> RobotModel:
    """Load and validate a robot model file (YAML key/value + arrays).

    Raises ModelFileError with the offending line number on any invariant
    violation.
    """
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark else 0
        raise ModelFileError(f"{path}:{line}: not valid YAML: {exc}") from exc
    if not isinstance(doc, dict):
        raise ModelFileError(f"{path}:1: model file must be a mapping")
    line_of = _yaml_line_map(text)

    def fail(field_name, message):
        line = line_of.get(field_name, 1)
        raise ModelFileError(f"{path}:{line}: field {field_name!r}: {message}")

    for field_name in doc:
        if field_name not in _MODEL_FIELDS:
            fail(field_name, "unknown field")
    for field_name in _MODEL_FIELDS:
        if field_name not in doc and field_name not in _OPTIONAL_FIELDS:
            raise ModelFileError(f"{path}:1: missing required field {field_name!r}")

    kwargs = {"name": doc["name"], "n_joints": doc["n_joints"]}
    if not isinstance(kwargs["name"], str):
        fail("name", "must be a string")
    if not isinstance(kwargs["n_joints"], int) or kwargs["n_joints"] < 1:
        fail("n_joints", "must be an integer >= 1")
    for field_name in _MODEL_FIELDS:
        if field_name in ("name", "n_joints") or field_name not in doc:
            continue
        try:
            kwargs[field_name] = np.asarray(doc[field_name], dtype=float)
        except (TypeError, ValueError):
            fail(field_name, "must be a numeric array")
    try:
        return RobotModel(**kwargs)
    except DynamicsError as exc:
        # map the violated invariant back to the field's line
        message = str(exc)
        for field_name in sorted(_MODEL_FIELDS, key=len, reverse=True):
            if re.search(rf"\b{field_name}\b", message):
                fail(field_name, message)
        raise ModelFileError(f"{path}:1: {message}") from exc
