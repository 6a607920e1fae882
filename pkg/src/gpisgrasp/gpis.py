"""Gaussian Process Implicit Surface with analytic gradients and tangent charts.

Sign convention: ``f < 0`` inside the object, ``f > 0`` outside, ``f = 0`` on
the surface. The GP models the residual of a smooth spherical prior mean
``(|x - c|^2 - r^2) / (2 r)`` so that the value keeps growing away from the
object instead of decaying back to zero.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve

from ._kernels import matern_sum
from .errors import OutOfChart, SingularKernel, TooFewSamples, VanishingGradient
from .geometry import SurfaceSamples
from .surrogate import SQRT5

GRAD_EPS = 1e-8
DEFAULT_OFFSET_FRACTION = 0.03


@dataclass(frozen=True)
class GpisHyper:
    length_scale: float
    sigma: float = 1.0
    jitter: float = 1e-10  # relative to sigma^2


def farthest_point_subset(points, m, start=0):
    """Deterministic farthest-point subsample of ``m`` indices."""
    n = len(points)
    if m >= n:
        return np.arange(n)
    idx = np.empty(m, dtype=np.int64)
    idx[0] = start
    d = np.sum((points - points[start]) ** 2, axis=1)
    for k in range(1, m):
        idx[k] = int(np.argmax(d))
        d = np.minimum(d, np.sum((points - points[idx[k]]) ** 2, axis=1))
    return np.sort(idx)


class GpisModel:
    """Fitted implicit surface. Immutable after construction."""

    def __init__(self, X, targets, hyper: GpisHyper, center, radius, offset=None):
        self.X = np.ascontiguousarray(X, float)
        self.targets = np.asarray(targets, float)
        self.hyper = hyper
        self.center = np.asarray(center, float)
        self.radius = float(radius)
        self.offset = offset
        self._xx = (self.X**2).sum(axis=1)
        self._XT = np.ascontiguousarray(self.X.T)
        resid = self.targets - self.prior_mean(self.X)
        K = self._kernel(self._sqdist(self.X))
        s2 = hyper.sigma**2
        jitter = hyper.jitter
        for _ in range(10):
            try:
                self.L = np.linalg.cholesky(K + jitter * s2 * np.eye(len(K)))
                break
            except np.linalg.LinAlgError:
                jitter *= 10.0
        else:
            raise SingularKernel(f"GPIS kernel not positive definite (jitter {jitter:g})")
        self.jitter_used = jitter
        self.alpha = cho_solve((self.L, True), resid)
        self.residual_grad_bound = self._estimate_residual_grad_bound()

    # kernel pieces -----------------------------------------------------
    def _sqdist(self, Q):
        sq = (Q * Q).sum(axis=1)[:, None] + self._xx[None, :] - 2.0 * Q @ self.X.T
        return np.maximum(sq, 0.0)

    def _kernel(self, sq):
        a = SQRT5 * np.sqrt(sq) / self.hyper.length_scale
        return self.hyper.sigma**2 * (1.0 + a + a * a / 3.0) * np.exp(-a)

    def prior_mean(self, Q):
        Q = np.atleast_2d(Q)
        return (((Q - self.center) ** 2).sum(axis=1) - self.radius**2) / (2.0 * self.radius)

    # queries -------------------------------------------------------------
    def values(self, Q) -> np.ndarray:
        Q = np.atleast_2d(np.asarray(Q, float))
        if len(Q) == 0:
            return np.empty(0)
        return self.prior_mean(Q) + matern_sum(Q, self._XT, self.alpha, self.hyper.length_scale, self.hyper.sigma**2)

    def values_and_gradients(self, Q):
        Q = np.atleast_2d(np.asarray(Q, float))
        sq = self._sqdist(Q)
        rho = self.hyper.length_scale
        a = SQRT5 * np.sqrt(sq) / rho
        e = np.exp(-a)
        k = self.hyper.sigma**2 * (1.0 + a + a * a / 3.0) * e
        # dk/dx = -sigma^2 * 5/(3 rho^2) * (1 + a) e^{-a} (x - x_i)
        w = -self.hyper.sigma**2 * 5.0 / (3.0 * rho * rho) * (1.0 + a) * e * self.alpha[None, :]
        grad = w.sum(axis=1)[:, None] * Q - w @ self.X
        grad += (Q - self.center) / self.radius
        val = self.prior_mean(Q) + k @ self.alpha
        return val, grad

    def _estimate_residual_grad_bound(self, safety=1.5):
        """Empirical bound on |grad| of the GP part (prior mean excluded)."""
        rng = np.random.default_rng(0)
        spread = 0.25 * self.hyper.length_scale
        probes = np.vstack([self.X] + [self.X + rng.normal(0.0, spread, self.X.shape) for _ in range(2)])
        _, g = self.values_and_gradients(probes)
        g -= (probes - self.center) / self.radius
        return safety * float(np.sqrt((g * g).sum(axis=1)).max())

    def lower_bound(self, Q, reach, values=None):
        """Lower bound on f over balls of radius ``reach`` around rows of ``Q``."""
        Q = np.atleast_2d(Q)
        f = self.values(Q) if values is None else values
        dist_c = np.sqrt(((Q - self.center) ** 2).sum(axis=1))
        lip = self.residual_grad_bound + (dist_c + reach) / self.radius
        return f - reach * lip

    def query(self, x):
        v, g = self.values_and_gradients(np.asarray(x, float)[None])
        return float(v[0]), g[0]

    # persistence ---------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "kind": "gpis",
            "inputs": self.X.tolist(),
            "targets": self.targets.tolist(),
            "length_scale": self.hyper.length_scale,
            "sigma": self.hyper.sigma,
            "jitter": self.hyper.jitter,
            "prior_center": self.center.tolist(),
            "prior_radius": self.radius,
            "offset": self.offset,
        }

    @classmethod
    def from_dict(cls, d) -> "GpisModel":
        hyper = GpisHyper(d["length_scale"], d["sigma"], d["jitter"])
        return cls(d["inputs"], d["targets"], hyper, d["prior_center"], d["prior_radius"], d.get("offset"))

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def loads(cls, text) -> "GpisModel":
        return cls.from_dict(json.loads(text))


def fit_gpis(samples: SurfaceSamples, offset=None, length_scale=None, sigma=None, jitter=1e-10, max_points=400):
    """Fit an implicit surface to oriented surface samples.

    Training set: surface points (target 0) plus points pushed ``offset``
    along the outward normal (target ``+offset``) and against it (target
    ``-offset``). ``offset`` defaults to 3% of the sample bounding-box
    diagonal; larger offsets make inner points cross adjacent faces near
    sharp edges. At most ``max_points`` training points are used, picked
    by farthest-point subsampling of the surface samples.
    """
    P = np.asarray(samples.points, float)
    N = np.asarray(samples.normals, float)
    if len(P) < 4:
        raise TooFewSamples(f"need >= 4 samples, got {len(P)}")
    lo, hi = P.min(axis=0), P.max(axis=0)
    diag = float(np.linalg.norm(hi - lo))
    if offset is None:
        offset = DEFAULT_OFFSET_FRACTION * diag
    if offset <= 0:
        raise ValueError("offset must be positive")
    keep = farthest_point_subset(P, max(4, max_points // 3))
    P, N = P[keep], N[keep]
    if length_scale is None:
        length_scale = 0.4 * diag
    if sigma is None:
        sigma = 0.1 * diag
    center = P.mean(axis=0)
    radius = float(np.linalg.norm(P - center, axis=1).mean())
    X = np.vstack([P, P + offset * N, P - offset * N])
    y = np.concatenate([np.zeros(len(P)), np.full(len(P), offset), np.full(len(P), -offset)])
    return GpisModel(X, y, GpisHyper(float(length_scale), float(sigma), float(jitter)), center, radius, float(offset))


def query(model: GpisModel, x):
    """``(value, gradient)`` of the implicit function at ``x``."""
    return model.query(x)


# ---------------------------------------------------------------------------
# charts


@dataclass(frozen=True)
class Chart:
    center: np.ndarray
    basis: np.ndarray  # (3, 2), orthonormal tangent vectors
    normal: np.ndarray  # outward unit normal
    radius: float


def tangent_basis(n) -> np.ndarray:
    """Orthonormal 3x2 basis of the plane orthogonal to unit ``n``.

    Built from a Householder reflection, so it depends only on ``n``.
    The pair ``(b1, b2, n)`` is right-handed.
    """
    n = np.asarray(n, float)
    i = int(np.argmax(np.abs(n)))
    e = np.zeros(3)
    e[i] = 1.0
    v = n + np.copysign(1.0, n[i]) * e
    H = np.eye(3) - 2.0 * np.outer(v, v) / (v @ v)
    j = (i + 1) % 3
    b1 = H[:, j]
    b1 = b1 - (b1 @ n) * n
    b1 /= np.linalg.norm(b1)
    b2 = np.cross(n, b1)
    return np.column_stack([b1, b2])


def make_chart(model: GpisModel, x_surface, radius) -> Chart:
    x = np.asarray(x_surface, float)
    _, g = model.query(x)
    gn = float(np.linalg.norm(g))
    if gn <= GRAD_EPS:
        raise VanishingGradient(f"|grad f| = {gn:.3g} at {x}")
    n = g / gn
    return Chart(x.copy(), tangent_basis(n), n, float(radius))


def chart_point(chart: Chart, u) -> np.ndarray:
    """Point ``center + basis @ u`` on the tangent plane (not reprojected)."""
    u = np.asarray(u, float)
    if np.linalg.norm(u) > chart.radius * (1 + 1e-12):
        raise OutOfChart(f"|u| = {np.linalg.norm(u):.4g} exceeds chart radius {chart.radius:.4g}")
    return chart.center + chart.basis @ u


def random_chart_offset(rng, radius) -> np.ndarray:
    """Uniform sample of the chart disk."""
    r = radius * np.sqrt(rng.random())
    a = 2 * np.pi * rng.random()
    return np.array([r * np.cos(a), r * np.sin(a)])
