"""Palm-pose search space.

Rotations are parameterized by hyperspherical coordinates on the unit
quaternion sphere, translations by a radial coordinate in the shell between
two concentric ellipsoids fitted to an inner and an outer bounding box.
A point of the 6-D unit cube maps to one palm transform.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CenterMismatch
from .geometry import Aabb
from .gpis import Chart

TWO_PI = 2.0 * np.pi


# ---------------------------------------------------------------------------
# rotations


def hyperspherical_to_quaternion(phi, psi, theta) -> np.ndarray:
    """Unit quaternion ``(w, x, y, z)`` from angles phi, psi in [0, pi], theta in [0, 2pi)."""
    phi, psi, theta = np.broadcast_arrays(*(np.asarray(a, float) for a in (phi, psi, theta)))
    sp, spsi = np.sin(phi), np.sin(psi)
    return np.stack(
        [np.cos(phi), sp * np.cos(psi), sp * spsi * np.cos(theta), sp * spsi * np.sin(theta)],
        axis=-1,
    )


def quaternion_to_hyperspherical(q):
    """Inverse of :func:`hyperspherical_to_quaternion` after flipping to ``w >= 0``."""
    q = np.asarray(q, float)
    q = q / np.linalg.norm(q)
    if q[0] < 0:
        q = -q
    w, x, y, z = q
    phi = np.arccos(np.clip(w, -1.0, 1.0))
    sp = np.sin(phi)
    psi = np.arccos(np.clip(x / sp, -1.0, 1.0)) if sp > 1e-15 else 0.0
    r = np.hypot(y, z)
    theta = np.arctan2(z, y) % TWO_PI if r > 1e-15 else 0.0
    return float(phi), float(psi), float(theta)


def canonical_quaternion(q) -> np.ndarray:
    q = np.asarray(q, float)
    q = q / np.linalg.norm(q)
    return -q if q[0] < 0 else q


def quaternion_to_matrix(q) -> np.ndarray:
    q = np.asarray(q, float)
    w, x, y, z = np.moveaxis(q / np.linalg.norm(q, axis=-1, keepdims=True), -1, 0)
    R = np.stack(
        [
            1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
            2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
            2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
        ],
        axis=-1,
    )
    return R.reshape(q.shape[:-1] + (3, 3))


def matrix_to_quaternion(R) -> np.ndarray:
    """Canonical (``w >= 0``) quaternion of a rotation matrix."""
    R = np.asarray(R, float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(1.0 + tr)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * np.sqrt(1.0 + R[i, i] - R[j, j] - R[k, k])
        q = [0.0, 0.0, 0.0, 0.0]
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    return canonical_quaternion(q)


def axis_angle_matrix(axis, angle) -> np.ndarray:
    a = np.asarray(axis, float)
    a = a / np.linalg.norm(a)
    K = np.array([[0, -a[2], a[1]], [a[2], 0, -a[0]], [-a[1], a[0], 0]])
    return np.eye(3) + np.sin(angle) * K + (1 - np.cos(angle)) * K @ K


def transform(R=None, t=None) -> np.ndarray:
    T = np.eye(4)
    if R is not None:
        T[:3, :3] = R
    if t is not None:
        T[:3, 3] = t
    return T


@dataclass(frozen=True)
class PalmPose:
    t: np.ndarray
    phi: float
    psi: float
    theta: float

    def quaternion(self) -> np.ndarray:
        return canonical_quaternion(hyperspherical_to_quaternion(self.phi, self.psi, self.theta))

    def matrix(self) -> np.ndarray:
        return transform(quaternion_to_matrix(self.quaternion()), self.t)

    @classmethod
    def from_matrix(cls, T) -> "PalmPose":
        T = np.asarray(T, float)
        return cls(T[:3, 3].copy(), *quaternion_to_hyperspherical(matrix_to_quaternion(T[:3, :3])))


def pose_to_dict(T) -> dict:
    T = np.asarray(T, float)
    return {"translation": T[:3, 3].tolist(), "quaternion": matrix_to_quaternion(T[:3, :3]).tolist()}


def pose_from_dict(d) -> np.ndarray:
    return transform(quaternion_to_matrix(np.asarray(d["quaternion"], float)), d["translation"])


# ---------------------------------------------------------------------------
# dual-ellipsoid translation domain


@dataclass(frozen=True)
class EllipsoidPair:
    center: np.ndarray
    inner: np.ndarray  # semi-axes (a1, b1, c1)
    outer: np.ndarray  # semi-axes (a2, b2, c2)

    def __post_init__(self):
        if np.any(self.inner <= 0) or np.any(self.outer < self.inner):
            raise ValueError(f"need 0 < inner <= outer semi-axes, got {self.inner} / {self.outer}")


def ellipsoid_value(center, axes, t) -> np.ndarray:
    """Implicit value sum(((t - c) / a)^2); 1 on the ellipsoid."""
    return (((np.asarray(t, float) - center) / axes) ** 2).sum(axis=-1)


def from_aabbs(inner: Aabb, outer: Aabb, flat_eps=None) -> EllipsoidPair:
    """Ellipsoids with the boxes' midpoints as center and half-extents as semi-axes.

    A zero-extent axis is an error unless ``flat_eps`` is given, in which
    case that semi-axis is raised to ``flat_eps``.
    """
    c1, c2 = inner.center, outer.center
    if np.max(np.abs(c1 - c2)) > 1e-9:
        raise CenterMismatch(f"box centers differ: {c1} vs {c2}")
    a1 = 0.5 * inner.extents
    a2 = 0.5 * outer.extents
    if np.any(a1 <= 0):
        if flat_eps is None:
            raise ValueError("inner box is flat along an axis")
        a1 = np.maximum(a1, flat_eps)
        a2 = np.maximum(a2, a1)
    return EllipsoidPair(c1.copy(), a1, a2)


def _direction(theta_s, phi_s):
    return np.stack(
        [np.sin(theta_s) * np.cos(phi_s), np.sin(theta_s) * np.sin(phi_s), np.cos(theta_s)], axis=-1
    )


def rmax(pair: EllipsoidPair, theta_s, phi_s):
    """Largest radial factor that keeps the sample inside the outer ellipsoid."""
    d = _direction(np.asarray(theta_s, float), np.asarray(phi_s, float))
    return 1.0 / np.sqrt(((pair.inner * d / pair.outer) ** 2).sum(axis=-1))


def sample_translation(pair: EllipsoidPair, u) -> np.ndarray:
    """Map unit-cube coordinates ``(u_theta, u_phi, u_r)`` into the ellipsoid shell."""
    u = np.asarray(u, float)
    theta_s = np.pi * u[..., 0]
    phi_s = TWO_PI * u[..., 1]
    r = 1.0 + u[..., 2] * (rmax(pair, theta_s, phi_s) - 1.0)
    return pair.center + r[..., None] * pair.inner * _direction(theta_s, phi_s)


class PoseDomain:
    """Six-dimensional unit cube -> palm transforms."""

    dim = 6

    def __init__(self, pair: EllipsoidPair):
        self.pair = pair

    def decode(self, U) -> np.ndarray:
        U = np.atleast_2d(np.asarray(U, float))
        t = sample_translation(self.pair, U[:, :3])
        q = hyperspherical_to_quaternion(np.pi * U[:, 3], np.pi * U[:, 4], TWO_PI * U[:, 5])
        T = np.tile(np.eye(4), (len(U), 1, 1))
        T[:, :3, :3] = quaternion_to_matrix(q)
        T[:, :3, 3] = t
        return T

    def sample(self, rng, n) -> np.ndarray:
        return rng.random((n, self.dim))


# ---------------------------------------------------------------------------
# chart-aligned palm placement

PALM_AXIS = np.array([0.0, 0.0, 1.0])


def align_rotation(target) -> np.ndarray:
    """Rotation taking the palm z-axis onto unit vector ``target`` (angle-axis form).

    The antipodal case rotates by pi about x.
    """
    d = np.asarray(target, float)
    d = d / np.linalg.norm(d)
    c = np.cross(PALM_AXIS, d)
    s = np.linalg.norm(c)
    angle = np.arctan2(s, PALM_AXIS @ d)
    if s < 1e-12:
        return np.eye(3) if angle < np.pi / 2 else axis_angle_matrix([1.0, 0.0, 0.0], np.pi)
    return axis_angle_matrix(c / s, angle)


def chart_aligned_pose(chart: Chart, standoff, theta_z=0.0, center=None) -> np.ndarray:
    """Palm transform facing the chart: palm z-axis along ``-N``, origin ``standoff`` above it.

    ``center`` overrides the chart center (e.g. a point displaced on the chart).
    """
    c = chart.center if center is None else np.asarray(center, float)
    R = align_rotation(-chart.normal)
    Rz = axis_angle_matrix(PALM_AXIS, theta_z)
    return transform(t=c + standoff * chart.normal) @ transform(R) @ transform(Rz)
