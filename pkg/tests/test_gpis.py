import numpy as np
import pytest

from gpisgrasp.errors import OutOfChart, TooFewSamples, VanishingGradient
from gpisgrasp.geometry import SurfaceSamples, icosphere, sample_surface
from gpisgrasp.gpis import (
    GpisModel,
    chart_point,
    fit_gpis,
    make_chart,
    query,
    random_chart_offset,
    tangent_basis,
)


def _sphere_points(rng, n):
    v = rng.normal(size=(n, 3))
    return v / np.linalg.norm(v, axis=1, keepdims=True)


def test_heldout_surface_values(unit_sphere_gpis, rng):
    P = _sphere_points(rng, 1000)
    assert np.mean(np.abs(unit_sphere_gpis.values(P))) < 0.01


def test_training_structure():
    s = sample_surface(icosphere(1.0, 2), 90, seed=0)
    m = fit_gpis(s, offset=0.1)
    n = len(m.X) // 3
    assert np.array_equal(m.targets, np.concatenate([np.zeros(n), np.full(n, 0.1), np.full(n, -0.1)]))
    assert np.allclose(m.X[n : 2 * n] - m.X[:n], 0.1 * s.normals[:n]) or len(s) > n
    # surface training points reproduce their targets
    assert np.max(np.abs(m.values(m.X[:n]))) <= 0.05 * 0.1


def test_inside_outside_sign(unit_sphere_gpis, rng):
    assert query(unit_sphere_gpis, [0, 0, 0])[0] < 0
    assert query(unit_sphere_gpis, [0, 0, 2])[0] > 0
    Q = rng.uniform(-1.6, 1.6, size=(1000, 3))
    r = np.linalg.norm(Q, axis=1)
    keep = np.abs(r - 1) > 1e-3
    agree = np.sign(unit_sphere_gpis.values(Q[keep])) == np.sign(r[keep] - 1)
    assert agree.mean() >= 0.99


def test_gradient_matches_finite_differences(unit_sphere_gpis, rng):
    Q = rng.uniform(-1.5, 1.5, size=(100, 3))
    _, G = unit_sphere_gpis.values_and_gradients(Q)
    h = 1e-5
    fd = np.empty_like(G)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        fd[:, k] = (unit_sphere_gpis.values(Q + e) - unit_sphere_gpis.values(Q - e)) / (2 * h)
    assert np.max(np.abs(G - fd)) < 1e-4
    assert np.all(np.abs(G - fd) <= 1e-4 * np.abs(fd) + 1e-6)


def test_gradient_direction_at_pole(unit_sphere_gpis):
    _, g = query(unit_sphere_gpis, [0, 0, 1])
    cosang = g[2] / np.linalg.norm(g)
    assert cosang > np.cos(np.radians(5))


def test_values_and_gradients_agree_with_values(unit_sphere_gpis, rng):
    Q = rng.normal(size=(50, 3))
    v, _ = unit_sphere_gpis.values_and_gradients(Q)
    assert np.allclose(v, unit_sphere_gpis.values(Q), atol=1e-12)


def test_lower_bound_is_a_bound(unit_sphere_gpis, rng):
    Q = rng.uniform(-1.5, 1.5, size=(40, 3))
    reach = 0.05
    lb = unit_sphere_gpis.lower_bound(Q, reach)
    for q, b in zip(Q, lb):
        d = rng.normal(size=(200, 3))
        d *= reach * rng.random((200, 1)) ** (1 / 3) / np.linalg.norm(d, axis=1, keepdims=True)
        assert unit_sphere_gpis.values(q + d).min() >= b - 1e-12


def test_serialization_roundtrip(unit_sphere_gpis, rng):
    back = GpisModel.loads(unit_sphere_gpis.dumps())
    Q = rng.normal(size=(20, 3))
    assert np.array_equal(back.values(Q), unit_sphere_gpis.values(Q))
    assert back.dumps() == unit_sphere_gpis.dumps()


def test_too_few_samples():
    s = SurfaceSamples(np.eye(3), np.eye(3))
    with pytest.raises(TooFewSamples):
        fit_gpis(s)


def test_chart_at_pole(unit_sphere_gpis):
    c = make_chart(unit_sphere_gpis, [0, 0, 1], 0.2)
    assert np.linalg.norm(c.normal - [0, 0, 1]) < np.sin(np.radians(5))
    assert np.abs(c.basis[2]).max() < np.sin(np.radians(5))
    assert np.allclose(c.basis.T @ c.basis, np.eye(2), atol=1e-9)
    _, g = query(unit_sphere_gpis, c.center)
    assert np.abs(g @ c.basis).max() < 1e-6
    assert c.normal @ g > 0
    assert np.array_equal(chart_point(c, [0, 0]), c.center)
    p = chart_point(c, [0.2, 0])
    assert abs(np.linalg.norm(p - c.center) - 0.2) < 1e-12
    assert abs((p - c.center) @ c.normal) < 1e-9


def test_chart_second_order_contact(unit_sphere_gpis):
    p0 = np.array([0, 0, 1.0])
    f0 = query(unit_sphere_gpis, p0)[0]
    c = make_chart(unit_sphere_gpis, p0, 0.2)
    p = chart_point(c, [0.1, 0])
    # on the exact sphere f rises by about u^2 / 2 = 0.005
    assert abs(query(unit_sphere_gpis, p)[0]) <= 0.01
    assert query(unit_sphere_gpis, p)[0] > f0


def test_chart_deterministic_and_errors(unit_sphere_gpis):
    a = make_chart(unit_sphere_gpis, [0.6, 0, 0.8], 0.1)
    b = make_chart(unit_sphere_gpis, [0.6, 0, 0.8], 0.1)
    assert np.array_equal(a.basis, b.basis)
    with pytest.raises(OutOfChart):
        chart_point(a, [0.2, 0])


def test_vanishing_gradient():
    # six samples symmetric about their mean: the gradient at the centre is zero
    P = np.vstack([np.eye(3), -np.eye(3)])
    m = fit_gpis(SurfaceSamples(P, P.copy()), offset=0.1)
    assert np.allclose(m.center, 0)
    with pytest.raises(VanishingGradient):
        make_chart(m, m.center, 0.1)


def test_tangent_basis_properties(rng):
    for _ in range(200):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        B = tangent_basis(n)
        assert np.allclose(B.T @ B, np.eye(2), atol=1e-12)
        assert np.abs(n @ B).max() < 1e-12
        assert np.isclose(np.linalg.det(np.column_stack([B, n])), 1.0)


def test_random_chart_offset_inside(rng):
    for _ in range(500):
        assert np.linalg.norm(random_chart_offset(rng, 0.3)) <= 0.3
