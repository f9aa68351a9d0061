"""Ball-joint kinematics: task space (end-effector point), joint space
(roll/pitch, yaw fixed at zero) and tendon space (four residual tendon
lengths ordered phi1, phi2, theta1, theta2).

Rotations use R = Ry(theta) @ Rx(phi). The link points down the -z axis
of the joint frame in its rest pose.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

GIMBAL_WARN_RAD = math.radians(85.0)
JACOBIAN_STEP = 1e-6
CHANNELS = ("phi1", "phi2", "theta1", "theta2")


class KinematicsError(ValueError):
    """Raised for poses or points outside the kinematic domain."""


@dataclass(frozen=True)
class GeometryParams:
    r_s: float = 4.0  # ball radius, mm
    r_t: float = 5.0  # tendon attachment radius, mm
    q_t: float = 3.75  # half of the maximum actuator displacement, mm
    l_m: float = 100.0  # manipulator length, mm

    def __post_init__(self):
        for name in ("r_s", "r_t", "q_t", "l_m"):
            if not getattr(self, name) > 0:
                raise KinematicsError(f"geometry.{name} must be positive")
        if self.q_t > self.r_t:
            raise KinematicsError("q_t must not exceed r_t")
        if self.l_m <= self.r_t:
            raise KinematicsError("l_m must exceed r_t")


@dataclass(frozen=True)
class JointPose:
    R: np.ndarray
    phi: float
    theta: float


@dataclass(frozen=True)
class EulerAngles:
    phi: float
    theta: float
    near_gimbal: bool = False

    def __iter__(self):
        # allows ``phi, theta = euler_from_rotation(R)``
        return iter((self.phi, self.theta))


@dataclass(frozen=True)
class TendonVector:
    q: np.ndarray  # mm, (phi1, phi2, theta1, theta2)
    saturated: bool = False

    def __iter__(self):
        return iter(self.q)

    def __getitem__(self, i):
        return self.q[i]


def _rx(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rotation_from_euler(phi: float, theta: float) -> JointPose:
    """Build the joint pose for roll ``phi`` and pitch ``theta`` (yaw = 0)."""
    half_pi = math.pi / 2
    if not (abs(phi) < half_pi and abs(theta) < half_pi):
        raise KinematicsError(f"angles out of range: phi={phi}, theta={theta}")
    R = _ry(theta) @ _rx(phi)
    return JointPose(R=R, phi=float(phi), theta=float(theta))


def euler_from_rotation(R) -> EulerAngles:
    """Recover (phi, theta) from a yaw-free rotation matrix.

    ``near_gimbal`` is set when |theta| exceeds 85 degrees, where the
    roll extraction loses precision.
    """
    R = np.asarray(R, dtype=float)
    r31, r32, r33 = R[2, 0], R[2, 1], R[2, 2]
    phi = math.atan2(r32, r33)
    theta = math.atan2(-r31, math.hypot(r32, r33))
    return EulerAngles(phi, theta, abs(theta) > GIMBAL_WARN_RAD)


def end_effector_position(pose: JointPose, l_m: float) -> np.ndarray:
    return pose.R @ np.array([0.0, 0.0, -l_m])


def attachment_projection(pose: JointPose, r_t: float) -> tuple[float, float]:
    """Tendon attachment point projected onto the joint's x-y plane."""
    x_t = pose.R @ np.array([0.0, 0.0, -r_t])
    return float(x_t[0]), float(x_t[1])


def _projection_xy(phi: float, theta: float, r_t: float) -> tuple[float, float]:
    # first two components of Ry(theta) Rx(phi) (0, 0, -r_t)
    return -r_t * math.sin(theta) * math.cos(phi), r_t * math.sin(phi)


def _tendon_lengths(x: float, y: float, q_t: float) -> tuple[float, float, float, float]:
    return (
        math.sqrt((q_t - x) ** 2 + y * y),
        math.sqrt((q_t + x) ** 2 + y * y),
        math.sqrt(x * x + (q_t - y) ** 2),
        math.sqrt(x * x + (q_t + y) ** 2),
    )


def task_to_tendon(x: float, y: float, q_t: float) -> TendonVector:
    """Map a projected attachment point (x', y') to the four tendon values.

    Points outside the reachable disc of radius ``q_t`` are pulled back
    radially onto the disc and the result is flagged as saturated.
    """
    saturated = False
    r = math.hypot(x, y)
    if r > q_t:
        x, y = x * q_t / r, y * q_t / r
        saturated = True
    return TendonVector(np.array(_tendon_lengths(x, y, q_t)), saturated)


def tendon_reference(x_r, params: GeometryParams) -> TendonVector:
    """Tendon-space target for a task-space point on the manipulator sphere."""
    x_r = np.asarray(x_r, dtype=float)
    norm = float(np.linalg.norm(x_r))
    if abs(norm - params.l_m) > 0.01 * params.l_m:
        raise KinematicsError(
            f"reference {x_r.tolist()} is {norm - params.l_m:+.3f} mm off the sphere"
        )
    k = params.r_t / params.l_m
    return task_to_tendon(x_r[0] * k, x_r[1] * k, params.q_t)


def tendon_values(phi: float, theta: float, params: GeometryParams) -> tuple[float, float, float, float]:
    """Unclamped tendon values of the pose (phi, theta)."""
    x, y = _projection_xy(phi, theta, params.r_t)
    return _tendon_lengths(x, y, params.q_t)


def tendon_jacobian(phi: float, theta: float, params: GeometryParams) -> np.ndarray:
    """d q / d (phi, theta) as a 4x2 matrix in mm/rad (central differences)."""
    return np.array(_jacobian_columns(phi, theta, params.r_t, params.q_t, JACOBIAN_STEP)).T


def _jacobian_columns(phi, theta, r_t, q_t, h):
    inv = 0.5 / h
    a = _tendon_lengths(*_projection_xy(phi + h, theta, r_t), q_t)
    b = _tendon_lengths(*_projection_xy(phi - h, theta, r_t), q_t)
    c = _tendon_lengths(*_projection_xy(phi, theta + h, r_t), q_t)
    d = _tendon_lengths(*_projection_xy(phi, theta - h, r_t), q_t)
    d_phi = tuple((a[i] - b[i]) * inv for i in range(4))
    d_theta = tuple((c[i] - d[i]) * inv for i in range(4))
    return d_phi, d_theta
