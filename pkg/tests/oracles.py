"""Independent reference computations used by the tests.

Everything here is written from first principles (brute force or a
different algorithm) so it can check the package without sharing code.
"""

import itertools

import numpy as np
from scipy.optimize import linprog


def hull2d(P):
    """Monotone-chain convex hull, counter-clockwise vertex indices."""
    order = sorted(range(len(P)), key=lambda i: (P[i][0], P[i][1]))

    def cross(o, a, b):
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])

    lower, upper = [], []
    for i in order:
        while len(lower) >= 2 and cross(P[lower[-2]], P[lower[-1]], P[i]) <= 0:
            lower.pop()
        lower.append(i)
    for i in reversed(order):
        while len(upper) >= 2 and cross(P[upper[-2]], P[upper[-1]], P[i]) <= 0:
            upper.pop()
        upper.append(i)
    return lower[:-1] + upper[:-1]


def polygon_area(P, idx):
    x, y = P[idx, 0], P[idx, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def hull3d_bruteforce(P, tol=1e-12):
    """Facet planes of conv(P) in 3-D by testing every triple.

    Returns ``(normals, offsets, volume)`` with ``normals @ x <= offsets``
    inside. Points are assumed in general position (no four coplanar).
    """
    P = np.asarray(P, float)
    c = P.mean(axis=0)
    planes = []
    tris = []
    for i, j, k in itertools.combinations(range(len(P)), 3):
        n = np.cross(P[j] - P[i], P[k] - P[i])
        norm = np.linalg.norm(n)
        if norm < tol:
            continue
        n /= norm
        off = n @ P[i]
        s = P @ n - off
        if np.all(s <= tol):
            pass
        elif np.all(s >= -tol):
            n, off = -n, -off
        else:
            continue
        planes.append((n, off))
        tris.append((i, j, k))
    normals = np.array([p[0] for p in planes])
    offsets = np.array([p[1] for p in planes])
    vol = sum(abs(np.linalg.det(np.array([P[i] - c, P[j] - c, P[k] - c]))) / 6.0 for i, j, k in tris)
    return normals, offsets, vol


def eps_from_planes(offsets, tol=1e-12):
    m = float(np.min(offsets))
    return m if m > tol else 0.0


def origin_in_hull(W):
    """LP feasibility: is the origin a convex combination of the rows of W?"""
    k, d = W.shape
    A_eq = np.vstack([W.T, np.ones((1, k))])
    b_eq = np.concatenate([np.zeros(d), [1.0]])
    res = linprog(np.zeros(k), A_eq=A_eq, b_eq=b_eq, bounds=[(0, None)] * k, method="highs")
    return res.status == 0


def support_min(W, n_dirs, rng, polish=True, n_starts=64):
    """Upper estimate of the inscribed-ball radius about the origin.

    The radius equals the minimum of the support function ``max_i w_i . u``
    over unit directions; random directions give an upper bound. With
    ``polish``, the polar polytope ``{v : W v <= 1}`` is climbed by repeated
    LPs (``v <- argmax v_k . v``): every feasible ``v`` certifies the
    radius is at most ``1 / |v|``.
    """
    U = rng.normal(size=(n_dirs, W.shape[1]))
    U /= np.linalg.norm(U, axis=1, keepdims=True)
    h = np.max(U @ W.T, axis=1)
    best = float(h.min())
    if not polish or best <= 0:
        return best
    starts = U[np.argsort(h)[:n_starts]]
    bound = [(None, None)] * W.shape[1]
    for u in starts:
        v = u / np.max(W @ u)
        for _ in range(50):
            res = linprog(-v, A_ub=W, b_ub=np.ones(len(W)), bounds=bound, method="highs")
            if res.status != 0:
                break
            nv = res.x
            if np.linalg.norm(nv) <= np.linalg.norm(v) * (1 + 1e-12):
                break
            v = nv
        best = min(best, 1.0 / np.linalg.norm(v))
    return best
