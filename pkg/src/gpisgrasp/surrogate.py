"""Gaussian-process surrogate and Bayesian-optimization building blocks.

The GP works on arbitrary feature vectors through a pluggable pairwise
distance; the Matérn 5/2 covariance is applied to that distance. Pose
features are ``[t (3), vec(R) (9)]`` so that the mixed translation/rotation
distance can be evaluated in bulk.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.stats import norm, qmc

from .errors import NotARotation, SingularKernel

log = logging.getLogger(__name__)

SQRT5 = np.sqrt(5.0)


@dataclass(frozen=True)
class KernelParams:
    sigma: float = 1.0  # signal std
    rho: float = 1.0  # length-scale
    noise: float = 1e-4  # observation std

    def __post_init__(self):
        if not (self.sigma > 0 and self.rho > 0 and self.noise > 0):
            raise ValueError(f"kernel parameters must be positive: {self}")

    def to_log(self) -> np.ndarray:
        return np.log([self.sigma, self.rho, self.noise])

    @classmethod
    def from_log(cls, theta) -> "KernelParams":
        s, r, n = np.exp(theta)
        return cls(float(s), float(r), float(n))


def matern52(d, p: KernelParams):
    """Matérn nu=5/2 covariance as a function of distance ``d``."""
    a = SQRT5 * np.asarray(d, float) / p.rho
    return p.sigma**2 * (1.0 + a + a * a / 3.0) * np.exp(-a)


def matern52_dlogrho(d, p: KernelParams):
    """Derivative of :func:`matern52` with respect to ``log(rho)``."""
    a = SQRT5 * np.asarray(d, float) / p.rho
    return p.sigma**2 * a * a * (1.0 + a) / 3.0 * np.exp(-a)


# ---------------------------------------------------------------------------
# distances


def _check_rotation(R, tol=1e-6):
    R = np.asarray(R, float)
    if R.shape != (3, 3) or not np.allclose(R.T @ R, np.eye(3), atol=tol) or np.linalg.det(R) < 0:
        raise NotARotation("matrix is not a proper rotation")
    return R


def rotation_angle(R1, R2) -> float:
    """Geodesic angle of ``R1^T R2``; equals ||log(R1^T R2)||_F / sqrt(2)."""
    c = (np.trace(np.asarray(R1).T @ np.asarray(R2)) - 1.0) / 2.0
    return float(np.arccos(np.clip(c, -1.0, 1.0)))


def se3_distance(T1, T2, w_rot=0.1) -> float:
    """Translation distance plus weighted rotation geodesic between 4x4 transforms."""
    T1, T2 = np.asarray(T1, float), np.asarray(T2, float)
    R1, R2 = _check_rotation(T1[:3, :3]), _check_rotation(T2[:3, :3])
    return float(np.linalg.norm(T1[:3, 3] - T2[:3, 3]) + w_rot * rotation_angle(R1, R2))


def pose_features(T) -> np.ndarray:
    """Flatten transforms ``(..., 4, 4)`` into ``(..., 12)`` GP features."""
    T = np.asarray(T, float)
    return np.concatenate([T[..., :3, 3], T[..., :3, :3].reshape(T.shape[:-2] + (9,))], axis=-1)


def features_to_pose(f) -> np.ndarray:
    f = np.asarray(f, float)
    T = np.eye(4)
    T[:3, 3] = f[:3]
    T[:3, :3] = f[3:12].reshape(3, 3)
    return T


class PoseMetric:
    """Pairwise distance on pose features, ``||dt|| + w_rot * angle``."""

    def __init__(self, w_rot=0.1):
        self.w_rot = float(w_rot)

    def __call__(self, A, B):
        A, B = np.atleast_2d(A), np.atleast_2d(B)
        dt = A[:, None, :3] - B[None, :, :3]
        trans = np.sqrt((dt**2).sum(axis=-1))
        # trace(R1^T R2) is the elementwise product sum
        tr = A[:, 3:12] @ B[:, 3:12].T
        ang = np.arccos(np.clip((tr - 1.0) / 2.0, -1.0, 1.0))
        return trans + self.w_rot * ang

    def __repr__(self):
        return f"PoseMetric(w_rot={self.w_rot})"


def euclidean(A, B):
    A, B = np.atleast_2d(A), np.atleast_2d(B)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.sqrt(np.maximum(sq, 0.0))


# ---------------------------------------------------------------------------
# GP regression


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray

    @classmethod
    def empty(cls, dim):
        return cls(np.empty((0, dim)), np.empty(0))

    def __len__(self):
        return len(self.y)

    def add(self, x, y):
        """Append ``(x, y)``; an existing location within 1e-12 keeps the larger value."""
        x = np.asarray(x, float).ravel()
        y = float(y)
        if not np.isfinite(y):
            raise ValueError("observation must be finite")
        if len(self.y):
            d = np.abs(self.X - x).max(axis=1)
            hit = np.flatnonzero(d <= 1e-12)
            if hit.size:
                self.y[hit[0]] = max(self.y[hit[0]], y)
                return
        self.X = np.vstack([self.X, x[None]])
        self.y = np.append(self.y, y)


def _chol(K, jitter0=1e-10, tries=8):
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    jitter = 0.0
    for k in range(tries):
        try:
            L = np.linalg.cholesky(K + jitter * scale * np.eye(len(K)))
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = jitter0 * 10**k
    # The pose distance is not Euclidean, so its Matern matrix can be
    # indefinite beyond what jitter repairs: clip the spectrum instead.
    if not np.all(np.isfinite(K)):
        raise SingularKernel("kernel matrix has non-finite entries")
    w, V = np.linalg.eigh(0.5 * (K + K.T))
    floor = jitter0 * 10 ** (tries - 1) * scale
    Kp = (V * np.maximum(w, floor)) @ V.T
    try:
        return np.linalg.cholesky(0.5 * (Kp + Kp.T)), float(floor / scale)
    except np.linalg.LinAlgError:
        raise SingularKernel(f"Cholesky failed with relative jitter up to {jitter:g}") from None


class GpPosterior:
    """Immutable GP posterior with a constant (dataset-mean) prior mean."""

    def __init__(self, X, y, params: KernelParams, metric=euclidean):
        self.X = np.atleast_2d(np.asarray(X, float))
        self.y = np.asarray(y, float).ravel()
        self.params = params
        self.metric = metric
        self.mean = float(self.y.mean()) if len(self.y) else 0.0
        n = len(self.y)
        if n:
            self.D = metric(self.X, self.X)
            K = matern52(self.D, params) + params.noise**2 * np.eye(n)
            self.L, self.jitter = _chol(K)
            r = self.y - self.mean
            self.alpha = cho_solve((self.L, True), r)
        else:
            self.D = np.empty((0, 0))
            self.L = np.empty((0, 0))
            self.jitter = 0.0
            self.alpha = np.empty(0)

    @classmethod
    def fit(cls, dataset: Dataset, params: KernelParams, metric=euclidean):
        return cls(dataset.X, dataset.y, params, metric)

    def with_params(self, params: KernelParams) -> "GpPosterior":
        return GpPosterior(self.X, self.y, params, self.metric)

    def predict(self, Xs):
        """Posterior mean and standard deviation at rows of ``Xs``."""
        Xs = np.atleast_2d(np.asarray(Xs, float))
        if not len(self.y):
            return np.zeros(len(Xs)), np.full(len(Xs), self.params.sigma)
        Ks = matern52(self.metric(Xs, self.X), self.params)
        mu = self.mean + Ks @ self.alpha
        v = solve_triangular(self.L, Ks.T, lower=True)
        var = self.params.sigma**2 - (v * v).sum(axis=0)
        if np.any(var < -1e-12 * self.params.sigma**2 - 1e-12):
            log.debug("negative posterior variance clamped: min %g", var.min())
        return mu, np.sqrt(np.maximum(var, 0.0))

    def log_marginal_likelihood(self) -> float:
        n = len(self.y)
        r = self.y - self.mean
        return float(-0.5 * r @ self.alpha - np.log(np.diag(self.L)).sum() - 0.5 * n * np.log(2 * np.pi))

    def lml_gradient(self) -> np.ndarray:
        """Gradient of the log marginal likelihood w.r.t. log(sigma, rho, noise)."""
        n = len(self.y)
        p = self.params
        Kinv = cho_solve((self.L, True), np.eye(n))
        W = np.outer(self.alpha, self.alpha) - Kinv
        dK = [
            2.0 * matern52(self.D, p),
            matern52_dlogrho(self.D, p),
            2.0 * p.noise**2 * np.eye(n),
        ]
        return np.array([0.5 * np.sum(W * g) for g in dK])


def posterior(gp: GpPosterior, x):
    """``(mu, sigma)`` at a single location."""
    mu, sd = gp.predict(np.atleast_2d(x))
    return float(mu[0]), float(sd[0])


def expected_improvement(mu, sigma, f_best, xi=0.01):
    """Closed-form EI for maximization; zero wherever ``sigma <= 0``."""
    mu = np.asarray(mu, float)
    sigma = np.asarray(sigma, float)
    pos = sigma > 0
    safe = np.where(pos, sigma, 1.0)
    imp = mu - f_best - xi
    # beyond |z| = 40 the normal pdf underflows anyway
    with np.errstate(over="ignore"):
        z = np.clip(np.where(pos, imp / safe, 0.0), -40.0, 40.0)
    ei = np.where(pos, imp * norm.cdf(z) + safe * norm.pdf(z), 0.0)
    ei = np.maximum(ei, 0.0)
    return float(ei) if ei.ndim == 0 else ei


def lhs_sample(n, dims, seed=0, lower=None, upper=None) -> np.ndarray:
    """Latin hypercube design; one point per stratum in every 1-D projection."""
    if n < 1:
        raise ValueError("n must be >= 1")
    u = qmc.LatinHypercube(d=dims, seed=np.random.default_rng(seed)).random(n)
    if lower is None:
        return u
    lower, upper = np.asarray(lower, float), np.asarray(upper, float)
    return lower + u * (upper - lower)


# ---------------------------------------------------------------------------
# hyperparameters


def default_params(dataset: Dataset, metric=euclidean, noise=1e-4) -> KernelParams:
    """Initial guess: sigma from the data spread, rho from the median pairwise distance."""
    y = dataset.y
    sd = float(np.std(y)) if len(y) > 1 else 0.0
    D = metric(dataset.X, dataset.X) if len(y) > 1 else np.zeros((1, 1))
    off = D[np.triu_indices(len(D), 1)]
    off = off[off > 0]
    rho = float(np.median(off)) if off.size else 1.0
    return KernelParams(sigma=sd if sd > 1e-8 else 1e-2, rho=rho, noise=noise)


def fit_hyperparams_rprop(
    gp: GpPosterior,
    iters=50,
    step0=0.1,
    eta_plus=1.2,
    eta_minus=0.5,
    step_min=1e-6,
    step_max=1e1,
    log_bounds=None,
    fixed_noise=False,
) -> KernelParams:
    """Maximize the log marginal likelihood with sign-based Rprop steps in log space.

    A step is accepted only if the likelihood does not decrease and the
    kernel stays positive definite; otherwise every step size is halved.
    """
    if iters <= 0 or len(gp.y) < 3:
        return gp.params
    theta = gp.params.to_log()
    if log_bounds is None:
        log_bounds = np.array([[-12.0, 6.0], [-10.0, 6.0], [np.log(1e-6), 0.0]])
    step = np.full(3, step0)
    current = gp
    lml = current.log_marginal_likelihood()
    g_prev = np.zeros(3)
    for _ in range(iters):
        g = current.lml_gradient()
        if fixed_noise:
            g[2] = 0.0
        prod = g * g_prev
        step = np.where(prod > 0, np.minimum(step * eta_plus, step_max), step)
        step = np.where(prod < 0, np.maximum(step * eta_minus, step_min), step)
        g = np.where(prod < 0, 0.0, g)
        cand = np.clip(theta + np.sign(g) * step, log_bounds[:, 0], log_bounds[:, 1])
        if np.allclose(cand, theta):
            if np.all(step <= step_min):
                break
            step = np.maximum(step * eta_minus, step_min)
            g_prev = np.zeros(3)
            continue
        try:
            trial = current.with_params(KernelParams.from_log(cand))
            lml_trial = trial.log_marginal_likelihood()
        except (SingularKernel, ValueError):
            lml_trial = -np.inf
        if np.isfinite(lml_trial) and lml_trial >= lml:
            theta, current, lml, g_prev = cand, trial, lml_trial, g
        else:
            step = np.maximum(step * eta_minus, step_min)
            g_prev = np.zeros(3)
    return current.params


def maximize_acquisition(gp: GpPosterior, sampler, n_cand=512, seed=0, f_best=None, xi=0.01, score=None):
    """Draw ``n_cand`` candidates from ``sampler(rng, n)`` and return the EI argmax.

    ``sampler`` returns ``(locations, features)``: locations are whatever
    the caller searches over, features are what the GP consumes. ``score``
    optionally replaces EI with any ``(mu, sigma, features) -> value``.
    Returns ``(location, features, acquisition_value)``.
    """
    if n_cand < 1:
        raise ValueError("n_cand must be >= 1")
    rng = np.random.default_rng(seed)
    locs, feats = sampler(rng, n_cand)
    mu, sd = gp.predict(feats)
    if score is not None:
        val = score(mu, sd, feats)
    else:
        fb = float(gp.y.max()) if f_best is None else f_best
        val = expected_improvement(mu, sd, fb, xi)
    val = np.atleast_1d(val)
    k = int(np.argmax(val))
    return locs[k], feats[k], float(val[k])


def with_noise(p: KernelParams, noise: float) -> KernelParams:
    return replace(p, noise=noise)
