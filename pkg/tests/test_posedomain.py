import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpisgrasp.errors import CenterMismatch
from gpisgrasp.geometry import Aabb
from gpisgrasp.gpis import Chart, tangent_basis
from gpisgrasp.posedomain import (
    EllipsoidPair,
    PalmPose,
    PoseDomain,
    align_rotation,
    axis_angle_matrix,
    canonical_quaternion,
    chart_aligned_pose,
    ellipsoid_value,
    from_aabbs,
    hyperspherical_to_quaternion,
    matrix_to_quaternion,
    pose_from_dict,
    pose_to_dict,
    quaternion_to_hyperspherical,
    quaternion_to_matrix,
    rmax,
    sample_translation,
)


def quat_matrix_oracle(q):
    # rotate basis vectors with the Hamilton product q v q*
    w, x, y, z = q

    def mul(a, b):
        a0, a1, a2, a3 = a
        b0, b1, b2, b3 = b
        return np.array([
            a0 * b0 - a1 * b1 - a2 * b2 - a3 * b3,
            a0 * b1 + a1 * b0 + a2 * b3 - a3 * b2,
            a0 * b2 - a1 * b3 + a2 * b0 + a3 * b1,
            a0 * b3 + a1 * b2 - a2 * b1 + a3 * b0,
        ])

    conj = np.array([w, -x, -y, -z])
    return np.column_stack([mul(mul(q, np.r_[0.0, e]), conj)[1:] for e in np.eye(3)])


def test_hyperspherical_cases():
    assert np.allclose(hyperspherical_to_quaternion(0, 1.2, 3.0), [1, 0, 0, 0])
    q = hyperspherical_to_quaternion(np.pi / 2, np.pi / 2, 0)
    assert np.allclose(q, [0, 0, 1, 0], atol=1e-15)
    assert np.allclose(quaternion_to_matrix(q), np.diag([-1, 1, -1]), atol=1e-15)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, np.pi), st.floats(0, np.pi), st.floats(0, 2 * np.pi, exclude_max=True))
def test_hyperspherical_unit_norm(phi, psi, theta):
    assert abs(np.linalg.norm(hyperspherical_to_quaternion(phi, psi, theta)) - 1) < 1e-15


def test_quaternion_roundtrip(rng):
    for _ in range(1000):
        q = rng.normal(size=4)
        q /= np.linalg.norm(q)
        back = hyperspherical_to_quaternion(*quaternion_to_hyperspherical(q))
        assert min(np.linalg.norm(back - q), np.linalg.norm(back + q)) < 1e-9
        assert np.allclose(quaternion_to_matrix(q), quat_matrix_oracle(q), atol=1e-12)
        R = quaternion_to_matrix(q)
        assert np.allclose(matrix_to_quaternion(R), canonical_quaternion(q), atol=1e-9)


def test_pose_serialization(rng):
    q = canonical_quaternion(rng.normal(size=4))
    T = np.eye(4)
    T[:3, :3] = quaternion_to_matrix(q)
    T[:3, 3] = rng.normal(size=3)
    assert np.allclose(pose_from_dict(pose_to_dict(T)), T, atol=1e-12)
    p = PalmPose.from_matrix(T)
    assert np.allclose(p.matrix(), T, atol=1e-12)


def test_from_aabbs_formulas():
    inner = Aabb(np.full(3, -0.5), np.full(3, 0.5))
    pair = from_aabbs(inner, inner.scaled(2.0))
    assert np.allclose(pair.center, 0) and np.allclose(pair.inner, 0.5) and np.allclose(pair.outer, 1.0)
    off = Aabb(np.array([0.0, 0, 0]), np.array([2.0, 4, 6]))
    p2 = from_aabbs(off, off)
    assert np.allclose(p2.center, [1, 2, 3]) and np.allclose(p2.inner, [1, 2, 3])
    with pytest.raises(CenterMismatch):
        from_aabbs(inner, Aabb(np.full(3, -0.4), np.full(3, 0.6)))


def test_flat_box_guard():
    flat = Aabb(np.array([-1.0, -1, 0]), np.array([1.0, 1, 0]))
    with pytest.raises(ValueError):
        from_aabbs(flat, flat.scaled(2))
    pair = from_aabbs(flat, flat.scaled(2), flat_eps=1e-3)
    assert pair.inner[2] == 1e-3


def test_rmax_cases(rng):
    inner = np.array([0.1, 0.2, 0.3])
    uni = EllipsoidPair(np.zeros(3), inner, 2.5 * inner)
    th, ph = rng.random(100) * np.pi, rng.random(100) * 2 * np.pi
    assert np.allclose(rmax(uni, th, ph), 2.5, atol=1e-12)
    pair = EllipsoidPair(np.zeros(3), inner, np.array([0.5, 0.3, 0.9]))
    assert rmax(pair, 0.0, 0.0) == pytest.approx(0.9 / 0.3)
    for t, p in zip(th, ph):
        r = rmax(pair, t, p)
        pt = r * inner * np.array([np.sin(t) * np.cos(p), np.sin(t) * np.sin(p), np.cos(t)])
        assert abs(ellipsoid_value(0, pair.outer, pt) - 1) < 1e-9


def test_sample_translation_endpoints(rng):
    pair = EllipsoidPair(np.array([0.1, 0, -0.2]), np.array([0.03, 0.03, 0.06]), np.array([0.075, 0.1, 0.15]))
    u = rng.random((50, 3))
    u[:, 2] = 0
    assert np.allclose(ellipsoid_value(pair.center, pair.inner, sample_translation(pair, u)), 1, atol=1e-12)
    u[:, 2] = 1
    assert np.allclose(ellipsoid_value(pair.center, pair.outer, sample_translation(pair, u)), 1, atol=1e-12)


def test_pose_domain_decode_rigid(rng):
    pair = EllipsoidPair(np.zeros(3), np.array([0.03, 0.03, 0.06]), np.array([0.075, 0.075, 0.15]))
    T = PoseDomain(pair).decode(rng.random((200, 6)))
    R = T[:, :3, :3]
    assert np.allclose(np.einsum("nji,njk->nik", R, R), np.eye(3), atol=1e-12)
    assert np.allclose(np.linalg.det(R), 1)


def _chart(n, c=(0, 0, 0)):
    n = np.asarray(n, float)
    n /= np.linalg.norm(n)
    return Chart(np.asarray(c, float), tangent_basis(n), n, 0.1)


def test_chart_aligned_pose_cases(rng):
    # normal along -z means the palm axis already points at the surface
    T = chart_aligned_pose(_chart([0, 0, -1]), 0.0)
    assert np.allclose(T, np.eye(4))
    T = chart_aligned_pose(_chart([0, 0, 1]), 0.0)
    assert np.allclose(T[:3, :3], axis_angle_matrix([1, 0, 0], np.pi))
    ch = _chart(rng.normal(size=3), rng.normal(size=3))
    T = chart_aligned_pose(ch, 0.05)
    d = T[:3, 3] - ch.center
    assert np.linalg.norm(d) == pytest.approx(0.05)
    assert np.allclose(np.cross(d, ch.normal), 0, atol=1e-12)


def test_chart_aligned_pose_properties(rng):
    for _ in range(300):
        ch = _chart(rng.normal(size=3), rng.normal(size=3))
        T = chart_aligned_pose(ch, rng.random() * 0.1, rng.random() * 2 * np.pi)
        R = T[:3, :3]
        assert np.allclose(R.T @ R, np.eye(3), atol=1e-9) and np.linalg.det(R) == pytest.approx(1)
        assert R[:, 2] @ ch.normal == pytest.approx(-1, abs=1e-9)


def test_align_rotation_axis(rng):
    for _ in range(100):
        d = rng.normal(size=3)
        d /= np.linalg.norm(d)
        assert np.allclose(align_rotation(d)[:, 2], d, atol=1e-12)
