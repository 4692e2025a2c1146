"""Unit-quaternion and 3-D spatial primitives.

Conventions (used consistently across the package):

* quaternions are scalar-first: ``q = [eta, eps_x, eps_y, eps_z]``
* rotation matrices are plain (3, 3) ndarrays; ``quat_to_rotation(q) @ v``
  rotates a body-frame vector into the parent frame
* Euler angles are Z-Y-X (yaw, pitch, roll): ``R = Rz @ Ry @ Rx``
* angular velocities are expressed in the parent/world frame, so
  ``qdot = 0.5 * E(q) @ omega``

All operations are pure functions over immutable inputs and are safe to
call concurrently.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k

__all__ = [
    "UnitQuaternion",
    "Twist",
    "Wrench",
    "skew",
    "quat_product",
    "quat_conjugate",
    "quat_normalize",
    "e_matrix",
    "quat_rate",
    "omega_from_quat_rate",
    "quat_to_rotation",
    "rotation_to_quat",
    "euler_to_quat",
    "quat_to_euler",
    "quat_from_axis_angle",
    "integrate_quat",
    "quat_sign_continue",
    "geodesic_angle",
    "assert_rotation",
]

UNIT_TOL = 1e-9
ROTATION_TOL = 1e-6


def _vec(x, n, name):
    a = np.asarray(x, dtype=float).reshape(-1)
    if a.shape[0] != n:
        raise ValueError(f"{name} must have {n} entries, got {a.shape[0]}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} has non-finite entries")
    return a


def _quat(q):
    a = _vec(q, 4, "quaternion")
    n = float(np.linalg.norm(a))
    if abs(n - 1.0) > UNIT_TOL:
        raise ValueError(f"quaternion norm {n} deviates from 1 beyond {UNIT_TOL}")
    return a


@dataclass(frozen=True, eq=False)
class UnitQuaternion:
    """Orientation carrier with the unit-norm invariant enforced."""

    eta: float
    epsilon: np.ndarray

    def __post_init__(self):
        eps = np.asarray(self.epsilon, dtype=float).reshape(3).copy()
        eps.setflags(write=False)
        object.__setattr__(self, "epsilon", eps)
        object.__setattr__(self, "eta", float(self.eta))
        _quat(self.as_array())

    @classmethod
    def identity(cls) -> "UnitQuaternion":
        return cls(1.0, np.zeros(3))

    @classmethod
    def from_array(cls, q) -> "UnitQuaternion":
        a = _vec(q, 4, "quaternion")
        return cls(a[0], a[1:4])

    @classmethod
    def normalized(cls, q) -> "UnitQuaternion":
        a = _vec(q, 4, "quaternion")
        return cls.from_array(a / np.linalg.norm(a))

    def as_array(self) -> np.ndarray:
        return np.concatenate(([self.eta], self.epsilon))

    def __neg__(self) -> "UnitQuaternion":
        return UnitQuaternion(-self.eta, -self.epsilon)


@dataclass(frozen=True, eq=False)
class Twist:
    """Linear/angular velocity pair, world frame."""

    linear: np.ndarray
    angular: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "linear", _vec(self.linear, 3, "linear"))
        object.__setattr__(self, "angular", _vec(self.angular, 3, "angular"))

    @classmethod
    def zero(cls) -> "Twist":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_array(cls, v) -> "Twist":
        a = _vec(v, 6, "twist")
        return cls(a[:3], a[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate((self.linear, self.angular))


@dataclass(frozen=True, eq=False)
class Wrench:
    """Force/torque pair, world frame."""

    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", _vec(self.force, 3, "force"))
        object.__setattr__(self, "torque", _vec(self.torque, 3, "torque"))

    @classmethod
    def zero(cls) -> "Wrench":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_array(cls, w) -> "Wrench":
        a = _vec(w, 6, "wrench")
        return cls(a[:3], a[3:])

    def as_array(self) -> np.ndarray:
        return np.concatenate((self.force, self.torque))


def skew(a) -> np.ndarray:
    """Skew-symmetric matrix with skew(a) @ b == cross(a, b)."""
    return _k.skew3(_vec(a, 3, "a"))


def quat_product(q1, q2) -> np.ndarray:
    """Quaternion composition: R(q1 (x) q2) = R(q1) @ R(q2)."""
    return _k.quat_mul(_quat(q1), _quat(q2))


def quat_conjugate(q) -> np.ndarray:
    return _k.quat_conj(_quat(q))


def quat_normalize(q) -> np.ndarray:
    a = _vec(q, 4, "quaternion")
    return _k.quat_normalize(a)


def e_matrix(q) -> np.ndarray:
    """4x3 propagation map with E(q).T @ E(q) = I."""
    return _k.e_matrix(_quat(q))


def quat_rate(q, omega) -> np.ndarray:
    """Quaternion time derivative 0.5 * E(q) @ omega."""
    return _k.quat_rate(_quat(q), _vec(omega, 3, "omega"))


def omega_from_quat_rate(q, qdot) -> np.ndarray:
    """Exact left-inverse of quat_rate: omega = 2 E(q).T @ qdot."""
    return _k.omega_from_quat_rate(_quat(q), _vec(qdot, 4, "qdot"))


def quat_to_rotation(q) -> np.ndarray:
    return _k.quat_to_rot(_quat(q))


def assert_rotation(R, tol: float = ROTATION_TOL) -> np.ndarray:
    """Validate orthonormality and det(R) = +1."""
    a = np.asarray(R, dtype=float)
    if a.shape != (3, 3):
        raise ValueError(f"rotation must be 3x3, got {a.shape}")
    err = np.abs(a.T @ a - np.eye(3)).max()
    if err > tol:
        raise ValueError(f"matrix is not orthonormal (|R'R - I| = {err:.3g})")
    if np.linalg.det(a) < 0.0:
        raise ValueError("matrix has negative determinant (reflection)")
    return a


def rotation_to_quat(R, tol: float = ROTATION_TOL) -> np.ndarray:
    """Quaternion of a rotation matrix; the scalar part is kept >= 0.

    Callers needing temporal continuity across the double cover should
    post-process with quat_sign_continue.
    """
    return _k.rot_to_quat(assert_rotation(R, tol))


def euler_to_quat(euler_zyx) -> np.ndarray:
    """Quaternion from Z-Y-X Euler angles [yaw, pitch, roll]."""
    return _k.euler_zyx_to_quat(_vec(euler_zyx, 3, "euler_zyx"))


def quat_to_euler(q) -> np.ndarray:
    """Z-Y-X Euler angles [yaw, pitch, roll] of a quaternion."""
    return _k.quat_to_euler_zyx(_quat(q))


def quat_from_axis_angle(axis, angle: float) -> np.ndarray:
    a = _vec(axis, 3, "axis")
    n = np.linalg.norm(a)
    if n == 0.0:
        raise ValueError("axis must be nonzero")
    return _k.quat_from_axis_angle(a / n, float(angle))


def integrate_quat(q, omega, dt: float) -> np.ndarray:
    """Exponential-map step: exact for constant world-frame omega."""
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    return _k.quat_exp_step(_quat(q), _vec(omega, 3, "omega"), float(dt))


def quat_sign_continue(q, q_prev) -> np.ndarray:
    """Flip the sign of q if -q is closer to q_prev (double-cover continuity)."""
    a = _vec(q, 4, "q")
    b = _vec(q_prev, 4, "q_prev")
    if float(a @ b) < 0.0:
        return -a
    return a


def geodesic_angle(q1, q2) -> float:
    """Rotation angle between two orientations, sign-of-cover agnostic."""
    return float(_k.quat_geodesic(_quat(q1), _quat(q2)))
