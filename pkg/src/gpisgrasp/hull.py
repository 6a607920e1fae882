"""Dimension-generic quickhull.

Facets are simplices stored as vertex index tuples with outward unit
normals and offsets, so that every hull point satisfies
``normal @ x <= offset``. Near-degenerate inputs are retried with a small
seeded perturbation ("joggle"); inputs that do not span the space raise
:class:`HullDegenerate`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from .errors import HullDegenerate

REL_EPS = 1e-10


class _Precision(Exception):
    pass


@dataclass(frozen=True)
class Hull:
    points: np.ndarray  # (n, d) input points (unperturbed)
    simplices: np.ndarray  # (F, d) vertex indices per facet
    normals: np.ndarray  # (F, d) outward unit normals
    offsets: np.ndarray  # (F,) normal @ x <= offset inside
    interior: np.ndarray  # (d,) strictly interior point
    joggled: bool = False

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def vertices(self):
        return np.unique(self.simplices)

    def volume(self) -> float:
        V = self.points[self.simplices] - self.interior  # (F, d, d)
        return float(np.abs(np.linalg.det(V)).sum() / math.factorial(self.dim))

    def contains(self, x, tol=0.0) -> bool:
        return bool(np.all(self.normals @ np.asarray(x, float) - self.offsets <= tol))


def _initial_simplex(P, tol):
    n, d = P.shape
    chosen = [int(np.argmin(P[:, 0]))]
    dist = np.linalg.norm(P - P[chosen[0]], axis=1)
    basis = np.zeros((0, d))
    for _ in range(d):
        rel = P - P[chosen[0]]
        resid = rel - (rel @ basis.T) @ basis
        dist = np.linalg.norm(resid, axis=1)
        k = int(np.argmax(dist))
        if dist[k] <= tol:
            raise HullDegenerate(f"points span only {len(chosen) - 1} of {d} dimensions")
        chosen.append(k)
        basis = np.vstack([basis, resid[k] / dist[k]])
    return chosen


def _facet_planes(P, verts, interior):
    """Unit normals and offsets for stacked vertex tuples (k, d)."""
    V = P[verts]  # (k, d, d)
    E = V[:, 1:, :] - V[:, :1, :]
    _, s, vt = np.linalg.svd(E)
    N = vt[:, -1, :]
    if E.shape[1] and np.any(s[:, -1] <= 1e-14 * np.maximum(s[:, 0], 1e-300)):
        raise _Precision("flat facet")
    off = np.einsum("kd,kd->k", N, V[:, 0, :])
    flip = N @ interior > off
    N[flip] *= -1.0
    off[flip] *= -1.0
    return N, off


class _Builder:
    def __init__(self, P, tol):
        self.P = P
        self.tol = tol
        self.d = P.shape[1]
        self.verts = {}
        self.normal = {}
        self.offset = {}
        self.outside = {}
        self.ridges = {}
        self.next_id = 0

    def add_facets(self, vert_list, pool):
        vert_list = np.asarray(vert_list, dtype=np.int64)
        N, off = _facet_planes(self.P, vert_list, self.interior)
        ids = []
        for v, nrm, o in zip(vert_list, N, off):
            fid = self.next_id
            self.next_id += 1
            vt = tuple(sorted(int(i) for i in v))
            self.verts[fid] = vt
            self.normal[fid] = nrm
            self.offset[fid] = o
            self.outside[fid] = np.empty(0, dtype=np.int64)
            for r in combinations(vt, self.d - 1):
                self.ridges.setdefault(r, []).append(fid)
            ids.append(fid)
        if len(pool):
            D = self.P[pool] @ N.T - off
            best = np.argmax(D, axis=1)
            above = D[np.arange(len(pool)), best] > self.tol
            for j, fid in enumerate(ids):
                self.outside[fid] = pool[above & (best == j)]
        return ids

    def remove_facet(self, fid):
        for r in combinations(self.verts[fid], self.d - 1):
            lst = self.ridges[r]
            lst.remove(fid)
            if not lst:
                del self.ridges[r]
        for store in (self.verts, self.normal, self.offset, self.outside):
            del store[fid]

    def neighbors(self, fid):
        for r in combinations(self.verts[fid], self.d - 1):
            for g in self.ridges[r]:
                if g != fid:
                    yield r, g

    def build(self):
        P, tol = self.P, self.tol
        simplex = _initial_simplex(P, tol)
        self.interior = P[simplex].mean(axis=0)
        rest = np.setdiff1d(np.arange(len(P)), simplex)
        self.add_facets([[v for v in simplex if v != skip] for skip in simplex], rest)
        pending = [f for f in self.verts if len(self.outside[f])]
        while pending:
            fid = pending.pop()
            if fid not in self.verts or not len(self.outside[fid]):
                continue
            out = self.outside[fid]
            apex = out[int(np.argmax(P[out] @ self.normal[fid]))]
            p = P[apex]
            visible = {fid}
            stack = [fid]
            horizon = []
            while stack:
                f = stack.pop()
                for r, g in self.neighbors(f):
                    if g in visible:
                        continue
                    if self.normal[g] @ p - self.offset[g] > tol:
                        visible.add(g)
                        stack.append(g)
                    else:
                        horizon.append(r)
            # a ridge can be reached twice only if both facets are visible
            horizon = [r for r in set(horizon) if any(g not in visible for g in self.ridges[r])]
            pool = np.concatenate([self.outside[f] for f in visible])
            pool = pool[pool != apex]
            for f in visible:
                self.remove_facet(f)
            new = self.add_facets([list(r) + [int(apex)] for r in horizon], pool)
            pending.extend(f for f in new if len(self.outside[f]))
        for r, fs in self.ridges.items():
            if len(fs) != 2:
                raise _Precision("hull surface not closed")
        ids = sorted(self.verts)
        simplices = np.array([self.verts[f] for f in ids], dtype=np.int64)
        normals = np.array([self.normal[f] for f in ids])
        offsets = np.array([self.offset[f] for f in ids])
        if np.max(P @ normals.T - offsets) > 1e3 * tol:
            raise _Precision("point outside final hull")
        return simplices, normals, offsets


def convex_hull(points, eps=REL_EPS, seed=0, max_joggle=4) -> Hull:
    """Convex hull of ``points`` (n, d) with n >= d + 1."""
    P0 = np.asarray(points, float)
    if P0.ndim != 2:
        raise ValueError("points must be (n, d)")
    n, d = P0.shape
    if d < 2:
        raise ValueError("need dimension >= 2")
    if n < d + 1:
        raise HullDegenerate(f"{n} points cannot span {d} dimensions")
    if not np.all(np.isfinite(P0)):
        raise ValueError("points must be finite")
    scale = float(np.max(np.abs(P0 - P0.mean(axis=0))))
    if scale == 0.0:
        raise HullDegenerate("all points coincide")
    tol = eps * scale
    rng = np.random.default_rng(seed)
    P = P0
    for attempt in range(max_joggle + 1):
        try:
            b = _Builder(P, tol)
            simplices, normals, offsets = b.build()
            # after a joggle the planes belong to the perturbed points (error ~1e-9 * scale)
            return Hull(P0, simplices, normals, offsets, b.interior, attempt > 0)
        except _Precision:
            P = P0 + rng.uniform(-1.0, 1.0, P0.shape) * scale * 1e-9 * 10.0**attempt
    raise HullDegenerate("hull construction failed after perturbation retries")
