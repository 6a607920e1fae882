import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.spatial import ConvexHull

from gpisgrasp.errors import HullDegenerate
from gpisgrasp.hull import convex_hull

from .oracles import hull2d, hull3d_bruteforce, polygon_area


def _plane_set(normals, offsets, digits=8):
    return {tuple(np.round(np.r_[n, o], digits)) for n, o in zip(normals, offsets)}


def test_square_2d():
    P = np.array([[0, 0], [1, 0], [1, 1], [0, 1], [0.5, 0.5]], float)
    h = convex_hull(P)
    assert sorted(h.vertices.tolist()) == [0, 1, 2, 3]
    assert h.volume() == pytest.approx(1.0, abs=1e-14)
    assert h.contains([0.5, 0.5]) and not h.contains([1.5, 0.5])


def test_2d_against_monotone_chain(rng):
    for _ in range(30):
        P = rng.normal(size=(40, 2))
        h = convex_hull(P)
        ref = hull2d(P)
        assert set(h.vertices.tolist()) == set(ref)
        assert h.volume() == pytest.approx(polygon_area(P, np.array(ref)), rel=1e-12)


def test_3d_against_bruteforce(rng):
    for _ in range(10):
        P = rng.normal(size=(25, 3))
        h = convex_hull(P)
        n, off, vol = hull3d_bruteforce(P)
        assert _plane_set(h.normals, h.offsets) == _plane_set(n, off)
        assert h.volume() == pytest.approx(vol, rel=1e-12)


@pytest.mark.parametrize("d,n", [(4, 60), (5, 60), (6, 56), (6, 120)])
def test_high_dim_against_qhull(rng, d, n):
    P = rng.normal(size=(n, d))
    h = convex_hull(P)
    ref = ConvexHull(P)
    assert set(h.vertices.tolist()) == set(ref.vertices.tolist())
    assert h.volume() == pytest.approx(ref.volume, rel=1e-10)
    assert _plane_set(h.normals, h.offsets, 7) == _plane_set(ref.equations[:, :-1], -ref.equations[:, -1], 7)


def test_coplanar_cube_grid():
    g = np.linspace(0, 1, 4)
    P = np.array([[x, y, z] for x in g for y in g for z in g])
    h = convex_hull(P)
    assert h.volume() == pytest.approx(1.0, abs=1e-9)
    assert all(h.contains(p, tol=1e-8) for p in P)


def test_degenerate_inputs():
    with pytest.raises(HullDegenerate):
        convex_hull(np.zeros((5, 3)))
    with pytest.raises(HullDegenerate):
        convex_hull(np.random.default_rng(0).normal(size=(3, 3)))
    flat = np.column_stack([np.random.default_rng(1).normal(size=(20, 2)), np.zeros(20)])
    with pytest.raises(HullDegenerate):
        convex_hull(flat)


def test_scaling_homogeneity(rng):
    P = rng.normal(size=(50, 6))
    v = convex_hull(P).volume()
    assert convex_hull(2.0 * P).volume() == pytest.approx(2.0**6 * v, rel=1e-10)


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, st.tuples(st.integers(8, 30), st.just(3)), elements=st.floats(-1, 1, width=32)))
def test_hull_contains_inputs(P):
    if np.linalg.matrix_rank(P - P.mean(axis=0), tol=1e-6) < 3:
        return
    try:
        h = convex_hull(P)
    except HullDegenerate:
        return
    scale = np.abs(P).max()
    assert np.all(P @ h.normals.T - h.offsets <= 1e-8 * scale)
    assert np.allclose(np.linalg.norm(h.normals, axis=1), 1)
    # facet vertices lie on their planes
    for simplex, n, o in zip(h.simplices, h.normals, h.offsets):
        assert np.all(np.abs(P[simplex] @ n - o) <= 1e-8 * scale)
    assert h.volume() == pytest.approx(ConvexHull(P).volume, rel=1e-6, abs=1e-12)
