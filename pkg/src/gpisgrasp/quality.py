"""Grasp wrench space and epsilon / volume quality.

The wrench space is the convex hull of the union of discretized friction
cone edges of all contacts (sum-of-forces bound). Torques are taken about
a reference origin and multiplied by ``torque_scale`` (1/m) so force and
torque parts are dimensionless and comparable.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from scipy.spatial import ConvexHull, QhullError

from .errors import DegenerateNormal, HullDegenerate
from .gpis import tangent_basis
from .hull import REL_EPS, convex_hull

log = logging.getLogger(__name__)

DEFAULT_MU = 0.5
DEFAULT_EDGES = 8
DEFAULT_LAMBDA_VOL = 1.0
WRENCH_DIM = 6


@dataclass(frozen=True)
class WrenchSet:
    primitives: np.ndarray  # (k, 6) force 3 + scaled torque 3
    torque_scale: float
    mu: float
    n_edges: int


@dataclass(frozen=True)
class GraspQuality:
    q_eps: float
    q_vol: float
    degenerate: bool = False

    @property
    def force_closure(self) -> bool:
        return self.q_eps > 0.0


def contact_wrenches(
    points, normals, mu=DEFAULT_MU, n_edges=DEFAULT_EDGES, torque_scale=1.0, origin=None, tangents=None
) -> WrenchSet:
    """Friction-cone edge wrenches for contacts at ``points``.

    ``normals`` are the directions along which each contact pushes (into
    the object). Each cone is replaced by ``n_edges`` edges
    ``n + mu (cos a t1 + sin a t2)``; with ``mu == 0`` a contact
    contributes its normal only. ``(t1, t2)`` come from
    :func:`tangent_basis` unless per-contact ``tangents`` (k, 3, 2) are
    given, which lets a rotated contact set carry its cone phases along.
    """
    P = np.atleast_2d(np.asarray(points, float))
    N = np.atleast_2d(np.asarray(normals, float))
    if len(P) == 0 or P.shape != N.shape or P.shape[1] != 3:
        raise ValueError("need matching (k, 3) points and normals, k >= 1")
    if mu < 0:
        raise ValueError("friction coefficient must be >= 0")
    if mu > 0 and n_edges < 3:
        raise ValueError("need >= 3 cone edges")
    o = np.zeros(3) if origin is None else np.asarray(origin, float)
    norms = np.linalg.norm(N, axis=1)
    if not np.all(np.isfinite(norms)) or np.any(norms < 1e-12):
        raise DegenerateNormal("contact normal has zero length")
    N = N / norms[:, None]
    if mu == 0:
        F = N[:, None, :]
    else:
        a = 2 * np.pi * np.arange(n_edges) / n_edges
        if tangents is None:
            tb = np.array([tangent_basis(n) for n in N])  # (k, 3, 2)
        else:
            tb = np.asarray(tangents, float).reshape(len(N), 3, 2)
        circ = np.stack([np.cos(a), np.sin(a)])  # (2, m)
        F = N[:, None, :] + mu * np.einsum("kij,jm->kmi", tb, circ)
    arm = (P - o)[:, None, :]
    T = torque_scale * np.cross(np.broadcast_to(arm, F.shape), F)
    W = np.concatenate([F, T], axis=-1).reshape(-1, WRENCH_DIM)
    return WrenchSet(W, float(torque_scale), float(mu), 1 if mu == 0 else int(n_edges))


def planar_wrenches(points, normals, mu=DEFAULT_MU, torque_scale=1.0, origin=None) -> WrenchSet:
    """Wrenches ``(fx, fy, tau_z)`` of in-plane contacts; each cone has two edges ``n +- mu t``."""
    P = np.atleast_2d(np.asarray(points, float))
    N = np.atleast_2d(np.asarray(normals, float))
    if len(P) == 0 or P.shape != N.shape or P.shape[1] != 2:
        raise ValueError("need matching (k, 2) points and normals, k >= 1")
    norms = np.linalg.norm(N, axis=1)
    if np.any(norms < 1e-12):
        raise DegenerateNormal("contact normal has zero length")
    N = N / norms[:, None]
    t = np.column_stack([-N[:, 1], N[:, 0]])
    F = np.stack([N + mu * t, N - mu * t], axis=1) if mu > 0 else N[:, None, :]
    o = np.zeros(2) if origin is None else np.asarray(origin, float)
    arm = (P - o)[:, None, :]
    tau = torque_scale * (arm[..., 0] * F[..., 1] - arm[..., 1] * F[..., 0])
    W = np.concatenate([F, tau[..., None]], axis=-1).reshape(-1, 3)
    return WrenchSet(W, float(torque_scale), float(mu), 2 if mu > 0 else 1)


def _hull_planes(W, backend):
    """Outward normals and offsets (``n @ x <= off``) plus volume of conv(W)."""
    if backend == "quickhull":
        h = convex_hull(W)
        return h.normals, h.offsets, h.volume()
    if backend != "qhull":
        raise ValueError(f"unknown hull backend {backend!r}")
    try:
        h = ConvexHull(W)
    except QhullError:
        try:
            h = ConvexHull(W, qhull_options="QJ")
        except QhullError as exc:
            raise HullDegenerate(str(exc).splitlines()[0]) from None
    return h.equations[:, :-1], -h.equations[:, -1], float(h.volume)


def grasp_quality(ws: WrenchSet, backend="qhull") -> GraspQuality:
    """Epsilon and volume quality of a wrench set.

    ``q_eps`` is the smallest facet distance from the origin when the origin
    lies strictly inside the hull and 0 otherwise. Sets with fewer than
    d + 1 primitives or spanning less than their d dimensions (6 for
    spatial grasps) score 0 and are flagged.
    """
    W = np.atleast_2d(np.asarray(ws.primitives, float))
    d = W.shape[1]
    if len(W) < d + 1:
        return GraspQuality(0.0, 0.0, True)
    scale = float(np.max(np.abs(W - W.mean(axis=0))))
    if np.linalg.matrix_rank(W - W.mean(axis=0), tol=REL_EPS * max(scale, 1e-300) * len(W)) < d:
        return GraspQuality(0.0, 0.0, True)
    try:
        normals, offsets, vol = _hull_planes(W, backend)
    except HullDegenerate:
        log.debug("degenerate wrench hull")
        return GraspQuality(0.0, 0.0, True)
    m = float(offsets.min())
    q_eps = m if m > REL_EPS * scale else 0.0
    return GraspQuality(q_eps, vol)


def epsilon_quality(ws: WrenchSet, backend="qhull") -> float:
    return grasp_quality(ws, backend).q_eps


def volume_quality(ws: WrenchSet, backend="qhull") -> float:
    return grasp_quality(ws, backend).q_vol


def objective(q_eps, q_vol, lambda_vol=DEFAULT_LAMBDA_VOL) -> float:
    """Combined score: epsilon counts only when positive, plus weighted volume."""
    if q_eps < 0 or q_vol < 0:
        raise ValueError("qualities must be non-negative")
    return (q_eps if q_eps > 0 else 0.0) + lambda_vol * q_vol


def torque_scale_for(points, centroid=None) -> float:
    """1 / (largest distance of a surface sample from the centroid)."""
    P = np.asarray(points, float)
    c = P.mean(axis=0) if centroid is None else np.asarray(centroid, float)
    return 1.0 / float(np.linalg.norm(P - c, axis=1).max())
