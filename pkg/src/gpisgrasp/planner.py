"""Grasp planners over a GPIS scene.

* :func:`hpp_opt` runs Bayesian optimization of the palm pose: EI proposals
  in the 6-D pose cube, each followed by local adaption on a surface chart.
* :func:`integrate` adds the ADMM joint refinement after every adaption.
* :func:`baseline_random` and :func:`baseline_sa` are the reference
  planners evaluated on the same pose domain.

Budgets count palm-pose evaluations: one per executed closing sweep,
including poses rejected for collision. Collision probes during chart
retraction and the joint-space evaluations inside ADMM are not counted.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .admm import AdmmState, augmented_penalty, consensus_admm
from .errors import AdaptionFailed, InitialCollision, NoFeasiblePose, VanishingGradient
from .geometry import SurfaceKdTree, SurfaceSamples, TriMesh, compute_aabb, sample_surface
from .gpis import GpisModel, fit_gpis, make_chart, random_chart_offset
from .hand import (
    Contact,
    HandModel,
    HandState,
    auto_grasp,
    check_collision,
    extract_contacts,
    forward_kinematics,
)
from .posedomain import (
    EllipsoidPair,
    PoseDomain,
    chart_aligned_pose,
    from_aabbs,
    pose_to_dict,
)
from .quality import (
    DEFAULT_EDGES,
    DEFAULT_LAMBDA_VOL,
    DEFAULT_MU,
    contact_wrenches,
    grasp_quality,
    objective,
    torque_scale_for,
)
from .surrogate import (
    Dataset,
    GpPosterior,
    PoseMetric,
    default_params,
    euclidean,
    expected_improvement,
    fit_hyperparams_rprop,
    lhs_sample,
    maximize_acquisition,
    pose_features,
)

log = logging.getLogger(__name__)

TOP_K = 20


# ---------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class QualityParams:
    mu: float = DEFAULT_MU
    n_edges: int = DEFAULT_EDGES
    lambda_vol: float = DEFAULT_LAMBDA_VOL
    backend: str = "qhull"


@dataclass(frozen=True)
class AdmmParams:
    enabled: bool = True
    rho: float = 1.0
    mu_pen: float = 100.0
    eps_primal: float = 1e-3
    eps_dual: float = 1e-3
    max_iter: int = 10
    n_seed: int = 1
    sub_budget: int = 30
    sub_init: int = 5
    n_cand: int = 256
    offset_radius: float = 0.01  # chart displacement of the palm (m)
    hinge: bool = False  # penalize only residuals above zero
    settle: bool = True  # also close the hand from the refined palm pose


@dataclass(frozen=True)
class PlannerParams:
    n_init: int = 20
    n_iter: int = 40
    max_evals: int | None = None
    n_seed: int = 5
    delta_lambda: float = 0.005
    lambda_max: float = 0.08
    delta_theta_z: float = np.pi / 8
    chart_radius_frac: float = 0.25
    n_cand: int = 512
    xi: float = 0.01
    w_rot: float = 0.1
    noise: float = 1e-3
    refit_every: int = 10
    rprop_iters: int = 30
    top_k: int = TOP_K
    time_budget: float | None = None
    admm: AdmmParams = field(default_factory=AdmmParams)


@dataclass(frozen=True)
class SaParams:
    t0: float = 1.0
    alpha: float = 0.95
    step: float = 0.1
    reject_collisions: bool = True


# ---------------------------------------------------------------------------
# scene


@dataclass(frozen=True)
class Scene:
    mesh: TriMesh
    samples: SurfaceSamples
    gpis: GpisModel
    hand: HandModel
    pair: EllipsoidPair
    tree: SurfaceKdTree
    torque_scale: float
    origin: np.ndarray
    quality: QualityParams = QualityParams()

    @property
    def diagonal(self):
        return float(np.linalg.norm(self.samples.points.max(axis=0) - self.samples.points.min(axis=0)))


def build_scene(
    mesh: TriMesh,
    hand: HandModel | None = None,
    n_samples=2000,
    sample_seed=0,
    outer_scale=2.5,
    quality: QualityParams | None = None,
    gpis: GpisModel | None = None,
    gpis_kwargs=None,
) -> Scene:
    samples = sample_surface(mesh, n_samples, sample_seed)
    if gpis is None:
        gpis = fit_gpis(samples, **(gpis_kwargs or {}))
    inner = compute_aabb(mesh)
    pair = from_aabbs(inner, inner.scaled(outer_scale))
    origin = samples.points.mean(axis=0)
    return Scene(
        mesh,
        samples,
        gpis,
        hand or HandModel(),
        pair,
        SurfaceKdTree(samples),
        torque_scale_for(samples.points, origin),
        origin,
        quality or QualityParams(),
    )


# ---------------------------------------------------------------------------
# candidates and scoring


@dataclass(frozen=True)
class GraspCandidate:
    pose: np.ndarray  # 4x4 palm transform
    q: np.ndarray
    breakaway: np.ndarray
    contacts: tuple
    q_eps: float
    q_vol: float
    f_obj: float
    provenance: str
    eval_index: int = -1
    collided: bool = False

    @property
    def valid(self):
        return not self.collided

    def state(self) -> HandState:
        return HandState(self.q, self.pose, self.breakaway)

    def to_dict(self) -> dict:
        return {
            "pose": pose_to_dict(self.pose),
            "pose_matrix": self.pose.tolist(),
            "q": self.q.tolist(),
            "breakaway": self.breakaway.tolist(),
            "contacts": [c.to_dict() for c in self.contacts],
            "q_eps": self.q_eps,
            "q_vol": self.q_vol,
            "f_obj": self.f_obj,
            "provenance": self.provenance,
            "eval_index": self.eval_index,
        }


def score_contacts(scene: Scene, contacts) -> tuple:
    """``(q_eps, q_vol, f_obj)`` for a contact list; pushing direction is the inward normal."""
    qp = scene.quality
    if not contacts:
        return 0.0, 0.0, 0.0
    P = np.array([c.point for c in contacts])
    N = -np.array([c.normal for c in contacts])
    ws = contact_wrenches(P, N, qp.mu, qp.n_edges, scene.torque_scale, scene.origin)
    gq = grasp_quality(ws, qp.backend)
    return gq.q_eps, gq.q_vol, objective(gq.q_eps, gq.q_vol, qp.lambda_vol)


def _candidate(scene, state, contacts, provenance, index):
    q_eps, q_vol, f = score_contacts(scene, contacts)
    return GraspCandidate(
        state.palm.copy(), state.q.copy(), state.breakaway.copy(), tuple(contacts), q_eps, q_vol, f, provenance, index
    )


def _collided(scene, T, spread, provenance, index):
    q = np.array([spread] + [scene.hand.proximal_limits[0]] * 3)
    return GraspCandidate(np.array(T, float), q, np.zeros(3), (), 0.0, 0.0, 0.0, provenance, index, True)


def rescore(scene: Scene, cand: GraspCandidate) -> float:
    """Recompute ``f_obj`` from the stored hand state."""
    contacts = extract_contacts(scene.hand, cand.state(), scene.gpis)
    return score_contacts(scene, contacts)[2]


def open_collides(scene: Scene, T, spread=None) -> bool:
    hand = scene.hand
    spread = hand.preset_spread if spread is None else spread
    q = np.array([spread] + [hand.proximal_limits[0]] * 3)
    return check_collision(hand, HandState(q, T), scene.gpis)[0]


class _Counter:
    """Shared evaluation counter and time budget for one run."""

    def __init__(self, max_evals=None, time_budget=None):
        self.n = 0
        self.max_evals = max_evals
        self.deadline = None if time_budget is None else time.perf_counter() + time_budget

    def exhausted(self):
        if self.max_evals is not None and self.n >= self.max_evals:
            return True
        return self.deadline is not None and time.perf_counter() >= self.deadline


def evaluate_pose(scene: Scene, T, provenance="HPP", counter=None, spread=None) -> GraspCandidate:
    """Close the hand at palm pose ``T``; a colliding open hand scores 0."""
    index = -1
    if counter is not None:
        index = counter.n
        counter.n += 1
    spread = scene.hand.preset_spread if spread is None else float(spread)
    try:
        state, contacts = auto_grasp(scene.hand, T, scene.gpis, spread=spread)
    except InitialCollision:
        return _collided(scene, T, spread, provenance, index)
    return _candidate(scene, state, contacts, provenance, index)


# ---------------------------------------------------------------------------
# run bookkeeping


@dataclass
class RunTrace:
    records: list = field(default_factory=list)

    def append(self, iteration, candidate: GraspCandidate | None, ei=None, residuals=None, wall_time=0.0, kind=""):
        if self.records and iteration <= self.records[-1]["iteration"]:
            raise ValueError("trace iterations must strictly increase")
        self.records.append(
            {
                "iteration": int(iteration),
                "kind": kind,
                "eval_index": None if candidate is None else candidate.eval_index,
                "pose": None if candidate is None else pose_to_dict(candidate.pose),
                "q": None if candidate is None else candidate.q.tolist(),
                "breakaway": None if candidate is None else candidate.breakaway.tolist(),
                "f_obj": None if candidate is None else candidate.f_obj,
                "collided": None if candidate is None else candidate.collided,
                "ei": None if ei is None else float(ei),
                "residuals": residuals,
                "wall_time": wall_time,
            }
        )

    def to_list(self):
        return list(self.records)


class TopK:
    """Best candidates by f_obj; ties keep the earlier evaluation."""

    def __init__(self, k=TOP_K):
        self.k = k
        self.items = []

    def offer(self, cand: GraspCandidate):
        if cand.collided:
            return
        self.items.append(cand)
        self.items.sort(key=lambda c: -c.f_obj)  # stable: earlier entries win ties
        del self.items[self.k :]

    def best(self):
        return self.items[0] if self.items else None


@dataclass
class PlanResult:
    best: GraspCandidate | None  # None only for baselines whose every pose collided
    top: list
    trace: RunTrace
    n_evals: int
    planner: str
    hpp_best: GraspCandidate | None = None  # best over the palm-pose stage only
    admm_runs: int = 0
    wall_time: float = 0.0


# ---------------------------------------------------------------------------
# local adaption on a chart


def _roll_to_match(chart, x_axis):
    """Roll about the approach axis that brings the aligned palm x-axis closest to ``x_axis``."""
    R0 = chart_aligned_pose(chart, 0.0, 0.0)[:3, :3]
    v = R0.T @ x_axis
    return float(np.arctan2(v[1], v[0])) if np.hypot(v[0], v[1]) > 1e-12 else 0.0


def gpis_atlas(scene: Scene, T_palm, rng, params: PlannerParams = PlannerParams(), counter=None, provenance="HPP"):
    """Chart-based local adaption around the surface point nearest to the palm.

    For each of ``n_seed`` random chart offsets the palm faces the surface
    and backs off along the chart normal in ``delta_lambda`` steps while the
    open hand collides; past ``lambda_max`` the standoff resets and the palm
    rolls by ``delta_theta_z``. Each collision-free pose is closed and
    scored. Seeds that exhaust all rolls are skipped.
    """
    T_palm = np.asarray(T_palm, float)
    p, _, _ = _nearest(scene, T_palm[:3, 3])
    radius = params.chart_radius_frac * scene.diagonal
    try:
        chart = make_chart(scene.gpis, p, radius)
    except VanishingGradient as exc:
        raise AdaptionFailed(str(exc)) from None
    theta0 = _roll_to_match(chart, T_palm[:3, 0])
    n_roll = int(np.ceil(2 * np.pi / params.delta_theta_z - 1e-9))
    n_lambda = int(np.floor(params.lambda_max / params.delta_lambda + 1e-9)) + 1
    out = []
    for _ in range(params.n_seed):
        if counter is not None and counter.exhausted():
            break
        u = random_chart_offset(rng, radius)
        center = chart.center + chart.basis @ u
        T = None
        for k in range(n_roll):
            theta = theta0 + k * params.delta_theta_z
            for j in range(n_lambda):
                Tc = chart_aligned_pose(chart, j * params.delta_lambda, theta, center)
                if not open_collides(scene, Tc):
                    T = Tc
                    break
            if T is not None:
                break
        if T is None:
            continue
        out.append(evaluate_pose(scene, T, provenance, counter))
    if not out and params.n_seed > 0 and (counter is None or not counter.exhausted()):
        raise AdaptionFailed("every seed exhausted the standoff and roll sweeps")
    return out


def _nearest(scene, x):
    i = scene.tree.nearest_index(x)
    return scene.samples.points[i].copy(), scene.samples.normals[i].copy(), i


# ---------------------------------------------------------------------------
# joint-space refinement


def _pad_contacts(scene: Scene, T, q):
    """Fingertip pad points projected onto the zero level set, as contacts."""
    hand = scene.hand
    pads = forward_kinematics(hand, HandState(q, T)).pads
    x = pads.copy()
    for _ in range(2):
        v, g = scene.gpis.values_and_gradients(x)
        x = x - (v / np.maximum((g * g).sum(axis=1), 1e-12))[:, None] * g
    _, g = scene.gpis.values_and_gradients(x)
    n = g / np.linalg.norm(g, axis=1, keepdims=True)
    return [Contact(x[i], n[i], 2 + 2 * i, i + 1, 0.0) for i in range(len(x))]


def relaxed_objective(scene: Scene, T, q) -> float:
    """Score of the grasp formed by the projected fingertip points."""
    return score_contacts(scene, _pad_contacts(scene, T, q))[2]


def constraint_residual(scene: Scene, T, q, hinge=False):
    hand = scene.hand
    pads = forward_kinematics(hand, HandState(q, T)).pads
    c = np.abs(scene.gpis.values(pads)) - hand.contact_threshold
    return np.maximum(c, 0.0) if hinge else c


class _SubBO:
    """Small GP-based maximizer over the joint box, keeping its data between calls.

    The GP models the black-box term only; the quadratic coupling term is
    known in closed form and enters the acquisition analytically.
    """

    def __init__(self, fun, lower, upper, rng, params: AdmmParams):
        self.fun = fun
        self.lower = np.asarray(lower, float)
        self.upper = np.asarray(upper, float)
        self.span = self.upper - self.lower
        self.rng = rng
        self.p = params
        self.data = Dataset.empty(len(lower))

    def _add(self, u):
        q = self.lower + u * self.span
        self.data.add(u, self.fun(q))

    def seed_point(self, q):
        self._add(np.clip((np.asarray(q, float) - self.lower) / self.span, 0.0, 1.0))

    def maximize(self, penalty, budget):
        """Spend ``budget`` evaluations on ``fun(q) - penalty(q)``; return the best observed q."""
        if len(self.data) < self.p.sub_init:
            for u in lhs_sample(self.p.sub_init, len(self.lower), seed=int(self.rng.integers(2**31))):
                self._add(u)
        for _ in range(budget):
            params = default_params(self.data, euclidean, noise=1e-3)
            gp = GpPosterior.fit(self.data, params)
            U = self.rng.random((self.p.n_cand, len(self.lower)))
            mu, sd = gp.predict(U)
            pen = penalty(self.lower + U * self.span)
            obs = self.data.y - penalty(self.lower + self.data.X * self.span)
            ei = expected_improvement(mu - pen, sd, float(obs.max()))
            self._add(U[int(np.argmax(ei))])
        obs = self.data.y - penalty(self.lower + self.data.X * self.span)
        return self.lower + self.data.X[int(np.argmax(obs))] * self.span


@dataclass
class AdmmOutcome:
    best: GraspCandidate
    state: AdmmState | None
    converged: bool
    improved: bool


def admm_cp_opt(scene: Scene, cand: GraspCandidate, rng, params: AdmmParams = AdmmParams(), counter=None):
    """Refine joints and palm translation of ``cand`` by consensus ADMM.

    The palm moves on the chart through the surface point nearest to it and
    keeps its orientation; displaced poses whose open hand collides are
    rejected. The q-subproblem maximizes the grasp score of the projected
    fingertip points, the z-subproblem the penalty ``-mu_pen sum c_i^2`` on
    fingertip residuals. Every iterate is re-scored strictly (collision and
    contact checks at the actual hand state); the result is the best of the
    input and all strict scores, so it never scores below the input.
    """
    hand = scene.hand
    best = cand
    last_state, converged = None, False
    if cand.collided:
        return AdmmOutcome(cand, None, False, False)
    p, _, _ = _nearest(scene, cand.pose[:3, 3])
    try:
        chart = make_chart(scene.gpis, p, params.offset_radius)
    except VanishingGradient:
        return AdmmOutcome(cand, None, False, False)
    lower, upper = hand.lower, hand.upper

    def consider(c):
        nonlocal best
        if not c.collided and c.f_obj > best.f_obj:
            best = c

    for _ in range(params.n_seed):
        u = random_chart_offset(rng, params.offset_radius)
        T = cand.pose.copy()
        T[:3, 3] = cand.pose[:3, 3] + chart.basis @ u
        if open_collides(scene, T, cand.q[0]):
            continue
        fq = lambda q, T=T: relaxed_objective(scene, T, q)
        gz = lambda z, T=T: -params.mu_pen * float(np.sum(constraint_residual(scene, T, z, params.hinge) ** 2))
        bo_q = _SubBO(fq, lower, upper, rng, params)
        bo_z = _SubBO(gz, lower, upper, rng, params)
        bo_q.seed_point(cand.q)
        bo_z.seed_point(cand.q)

        def q_update(z, y, rho):
            return bo_q.maximize(lambda Q: augmented_penalty(Q, z, y, rho), params.sub_budget)

        def z_update(q, y, rho):
            return bo_z.maximize(lambda Z: augmented_penalty(q, Z, y, rho), params.sub_budget)

        res = consensus_admm(
            q_update, z_update, cand.q, rho=params.rho, mu_pen=params.mu_pen,
            eps_primal=params.eps_primal, eps_dual=params.eps_dual, max_iter=params.max_iter,
        )
        last_state, converged = res.state, res.converged
        for q, z in res.state.iterates:
            for v in (q, z):
                consider(_strict(scene, T, v))
        if params.settle:
            consider(evaluate_pose(scene, T, "ADMM", None, spread=res.state.z[0]))
    return AdmmOutcome(best, last_state, converged, best is not cand)


def _strict(scene, T, q):
    """Score the hand exactly at joints ``q`` (no breakaway); penetration scores as collided."""
    hand = scene.hand
    q = np.clip(q, hand.lower, hand.upper)
    state = HandState(q, T)
    if check_collision(hand, state, scene.gpis)[0]:
        return replace(_collided(scene, T, q[0], "ADMM", -1), q=q)
    return _candidate(scene, state, extract_contacts(hand, state, scene.gpis), "ADMM", -1)


# ---------------------------------------------------------------------------
# palm-pose Bayesian optimization


def _fit_gp(dataset, metric, params: PlannerParams, kparams=None, refit=False):
    if kparams is None:
        kparams = default_params(dataset, metric, noise=params.noise)
    gp = GpPosterior.fit(dataset, kparams, metric)
    if refit and params.rprop_iters > 0:
        kparams = fit_hyperparams_rprop(gp, iters=params.rprop_iters, fixed_noise=True)
        gp = GpPosterior.fit(dataset, kparams, metric)
    return gp, kparams


def _pose_sampler(domain):
    def sample(r, n):
        U = r.random((n, domain.dim))
        return U, np.array([pose_features(T) for T in domain.decode(U)])

    return sample


def _bo_run(scene: Scene, params: PlannerParams, seed, use_admm: bool, name: str) -> PlanResult:
    t_start = time.perf_counter()
    rng = np.random.default_rng(seed)
    rng_admm = np.random.default_rng([seed, 1])
    domain = PoseDomain(scene.pair)
    metric = PoseMetric(params.w_rot)
    counter = _Counter(params.max_evals, params.time_budget)
    trace, top = RunTrace(), TopK(params.top_k)
    hpp_top = TopK(1)
    dataset = Dataset.empty(12)
    it = 0
    admm_runs = 0

    for u in lhs_sample(params.n_init, domain.dim, seed=int(rng.integers(2**31))):
        if counter.exhausted():
            break
        T = domain.decode(u)[0]
        c = evaluate_pose(scene, T, "HPP", counter)
        top.offer(c)
        hpp_top.offer(c)
        dataset.add(pose_features(T), c.f_obj)
        trace.append(it, c, wall_time=time.perf_counter() - t_start, kind="init")
        it += 1

    kparams = None
    for k in range(params.n_iter):
        if counter.exhausted() or len(dataset) == 0:
            break
        gp, kparams = _fit_gp(dataset, metric, params, None if k % params.refit_every == 0 else kparams,
                              refit=k % params.refit_every == 0)

        u, _, ei = maximize_acquisition(
            gp, _pose_sampler(domain), params.n_cand, seed=int(rng.integers(2**31)),
            f_best=float(dataset.y.max()), xi=params.xi,
        )
        T = domain.decode(u)[0]
        group = []
        if not open_collides(scene, T):
            group.append(evaluate_pose(scene, T, "HPP", counter))
        try:
            group += gpis_atlas(scene, T, rng, params, counter)
        except AdaptionFailed as exc:
            log.debug("adaption failed: %s", exc)
        if not group:
            # nothing executable around this proposal: record it as a zero
            dataset.add(pose_features(T), 0.0)
            trace.append(it, None, ei=ei, wall_time=time.perf_counter() - t_start, kind="iter")
            it += 1
            continue
        for c in group:
            top.offer(c)
            hpp_top.offer(c)
        chosen = max(group, key=lambda c: c.f_obj)  # first wins ties
        residuals = None
        if use_admm and params.admm.enabled:
            out = admm_cp_opt(scene, chosen, rng_admm, params.admm, counter)
            admm_runs += 1
            if out.state is not None:
                residuals = {
                    "primal": out.state.primal,
                    "dual": out.state.dual,
                    "converged": out.converged,
                }
            if out.improved:
                top.offer(out.best)
                chosen = out.best
        dataset.add(pose_features(chosen.pose), chosen.f_obj)
        trace.append(it, chosen, ei=ei, residuals=residuals, wall_time=time.perf_counter() - t_start, kind="iter")
        it += 1

    best = top.best()
    if best is None:
        raise NoFeasiblePose(f"all {counter.n} evaluated palm poses collided")
    return PlanResult(best, list(top.items), trace, counter.n, name, hpp_top.best(), admm_runs,
                      time.perf_counter() - t_start)


def hpp_opt(scene: Scene, params: PlannerParams = PlannerParams(), seed=0) -> PlanResult:
    """Palm-pose Bayesian optimization with chart-based local adaption."""
    return _bo_run(scene, params, seed, use_admm=False, name="hpp")


def integrate(scene: Scene, params: PlannerParams = PlannerParams(), seed=0) -> PlanResult:
    """Palm-pose optimization with ADMM joint refinement of every adapted pose.

    With ``params.admm.enabled`` false this is exactly :func:`hpp_opt`.
    """
    return _bo_run(scene, params, seed, use_admm=True, name="integrate")


# ---------------------------------------------------------------------------
# baselines


def baseline_random(scene: Scene, n_evals, seed=0, top_k=TOP_K, time_budget=None) -> PlanResult:
    """Uniform samples of the pose cube, each closed and scored.

    ``best`` is None when every sample collided.
    """
    t_start = time.perf_counter()
    rng = np.random.default_rng(seed)
    domain = PoseDomain(scene.pair)
    counter = _Counter(n_evals, time_budget)
    trace, top = RunTrace(), TopK(top_k)
    while not counter.exhausted():
        T = domain.decode(domain.sample(rng, 1))[0]
        c = evaluate_pose(scene, T, "baseline", counter)
        top.offer(c)
        trace.append(counter.n - 1, c, wall_time=time.perf_counter() - t_start, kind="random")
    return PlanResult(top.best(), list(top.items), trace, counter.n, "random", wall_time=time.perf_counter() - t_start)


def _wrap_cube(u):
    u = u.copy()
    # azimuth of the translation direction and the last quaternion angle are periodic
    for i in (1, 5):
        u[i] %= 1.0
    for i in (0, 2, 3, 4):
        v = u[i] % 2.0
        u[i] = 2.0 - v if v > 1.0 else v
    return u


def baseline_sa(scene: Scene, n_evals, seed=0, schedule: SaParams = SaParams(), top_k=TOP_K, time_budget=None):
    """Metropolis walk over the pose cube with energy ``-f_obj`` and geometric cooling.

    Proposals perturb every coordinate with a heavy-tailed step (see
    :func:`anneal_step`) whose scale starts at ``step``. Temperature and
    step scale are both multiplied by ``alpha`` after every evaluation. With
    ``reject_collisions`` a proposal whose open hand collides is refused
    outright (it still costs an evaluation) unless the walk itself sits on
    a colliding pose.
    """
    t_start = time.perf_counter()
    rng = np.random.default_rng(seed)
    domain = PoseDomain(scene.pair)
    counter = _Counter(n_evals, time_budget)
    trace, top = RunTrace(), TopK(top_k)
    u = domain.sample(rng, 1)[0]
    cur = evaluate_pose(scene, domain.decode(u)[0], "baseline", counter)
    top.offer(cur)
    trace.append(0, cur, wall_time=time.perf_counter() - t_start, kind="sa")
    temp, scale = schedule.t0, schedule.step
    while not counter.exhausted():
        u_new = _wrap_cube(u + anneal_step(rng, scale, domain.dim))
        c = evaluate_pose(scene, domain.decode(u_new)[0], "baseline", counter)
        top.offer(c)
        trace.append(counter.n - 1, c, wall_time=time.perf_counter() - t_start, kind="sa")
        if cur.collided or not (schedule.reject_collisions and c.collided):
            delta = c.f_obj - cur.f_obj  # energy decrease
            if metropolis_accept(delta, temp, rng):
                u, cur = u_new, c
        temp *= schedule.alpha
        scale *= schedule.alpha
    return PlanResult(top.best(), list(top.items), trace, counter.n, "sa", wall_time=time.perf_counter() - t_start)


def anneal_step(rng, scale, n):
    """Ingber's very-fast-annealing generator: ``n`` steps in ``(-1, 1)``.

    Most steps are of order ``scale`` but the tails reach the whole unit
    interval, so the walk keeps making long jumps as the scale shrinks.
    """
    u = rng.random(n)
    return np.sign(u - 0.5) * scale * ((1.0 + 1.0 / scale) ** np.abs(2.0 * u - 1.0) - 1.0)


def metropolis_accept(delta, temperature, rng) -> bool:
    """Accept improvements always, worse moves with probability ``exp(delta / T)``.

    ``delta`` is the objective change (negative energy change). At zero
    temperature only non-worsening moves pass. A uniform draw is consumed
    only for worsening moves.
    """
    if delta >= 0:
        return True
    if temperature <= 0:
        return False
    return bool(rng.random() < np.exp(delta / temperature))
