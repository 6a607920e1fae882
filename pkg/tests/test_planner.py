import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gpisgrasp import planner as PL
from gpisgrasp.errors import NoFeasiblePose
from gpisgrasp.gpis import make_chart, random_chart_offset
from gpisgrasp.hand import check_collision
from gpisgrasp.posedomain import PoseDomain, chart_aligned_pose, transform
from gpisgrasp.quality import objective

SMALL_ADMM = PL.AdmmParams(max_iter=2, sub_budget=3, sub_init=3, n_cand=64)


def small(**kw):
    base = dict(n_init=4, n_iter=20, max_evals=10, n_seed=2, rprop_iters=5, admm=SMALL_ADMM)
    base.update(kw)
    return PL.PlannerParams(**base)


def strip(records):
    return [{k: v for k, v in r.items() if k != "wall_time"} for r in records]


def assert_candidate_ok(scene, c):
    eps = scene.hand.contact_threshold
    assert not c.collided
    assert not check_collision(scene.hand, c.state(), scene.gpis)[0]
    for k in c.contacts:
        assert abs(scene.gpis.values(k.point)[0]) <= eps + 1e-12
    assert c.f_obj == objective(c.q_eps, c.q_vol, scene.quality.lambda_vol)


@pytest.fixture(scope="module")
def hpp_sphere(sphere_scene):
    return PL.hpp_opt(sphere_scene, small(), seed=3)


@pytest.fixture(scope="module")
def integrate_box(box_scene):
    return PL.integrate(box_scene, small(), seed=1)


# ---------------------------------------------------------------------------
# palm-pose optimization


def test_hpp_sphere_finds_force_closure(sphere_scene):
    res = PL.hpp_opt(sphere_scene, PL.PlannerParams(n_init=20, n_iter=40, max_evals=60), seed=0)
    assert res.best.q_eps > 0
    assert res.n_evals <= 60
    assert_candidate_ok(sphere_scene, res.best)


def test_n_iter_zero_returns_lhs_best(sphere_scene):
    res = PL.hpp_opt(sphere_scene, small(n_init=6, n_iter=0, max_evals=None), seed=2)
    assert res.n_evals == 6
    assert {r["kind"] for r in res.trace.records} == {"init"}
    scores = [r["f_obj"] for r in res.trace.records if not r["collided"]]
    assert res.best.f_obj == max(scores)


def test_hpp_is_deterministic(sphere_scene, hpp_sphere):
    again = PL.hpp_opt(sphere_scene, small(), seed=3)
    assert strip(again.trace.records) == strip(hpp_sphere.trace.records)
    assert np.array_equal(again.best.pose, hpp_sphere.best.pose)
    assert [c.f_obj for c in again.top] == [c.f_obj for c in hpp_sphere.top]


def test_hpp_respects_evaluation_budget(hpp_sphere):
    assert hpp_sphere.n_evals <= 10
    assert all(c.eval_index < 10 for c in hpp_sphere.top)


def test_top_list_sorted_and_bounded(sphere_scene, hpp_sphere):
    res = PL.baseline_random(sphere_scene, 30, seed=4)
    for r in (res, hpp_sphere):
        f = [c.f_obj for c in r.top]
        assert len(f) <= PL.TOP_K
        assert f == sorted(f, reverse=True)
        assert r.best is r.top[0]


def test_logged_candidates_rescore_exactly(sphere_scene, hpp_sphere):
    for c in hpp_sphere.top:
        assert abs(PL.rescore(sphere_scene, c) - c.f_obj) <= 1e-12
        assert_candidate_ok(sphere_scene, c)


def test_no_feasible_pose_raises(sphere_scene, monkeypatch):
    monkeypatch.setattr(PL, "open_collides", lambda *a, **k: True)
    monkeypatch.setattr(PL, "evaluate_pose", lambda scene, T, prov="HPP", counter=None, spread=None:
                        PL._collided(scene, T, 0.0, prov, counter.n if counter else -1))
    with pytest.raises(NoFeasiblePose):
        PL.hpp_opt(sphere_scene, small(n_init=3, n_iter=2, max_evals=None), seed=0)


# ---------------------------------------------------------------------------
# chart-based local adaption


def sweep_oracle(scene, chart, theta0, center, params):
    """First collision-free pose of the standoff-then-roll sweep, written as nested loops."""
    theta = theta0
    while theta < theta0 + 2 * np.pi - 1e-9:
        lam = 0.0
        while lam <= params.lambda_max + 1e-12:
            T = chart_aligned_pose(chart, lam, theta, center)
            if not PL.open_collides(scene, T):
                return T
            lam += params.delta_lambda
        theta += params.delta_theta_z
    return None


def test_atlas_matches_sweep_oracle(box_scene):
    params = small(n_seed=3)
    T_palm = transform(t=np.array([0.09, 0.01, 0.02]))
    got = PL.gpis_atlas(box_scene, T_palm, np.random.default_rng(8), params)

    rng = np.random.default_rng(8)
    p, _, _ = PL._nearest(box_scene, T_palm[:3, 3])
    radius = params.chart_radius_frac * box_scene.diagonal
    chart = make_chart(box_scene.gpis, p, radius)
    theta0 = PL._roll_to_match(chart, T_palm[:3, 0])
    want = []
    for _ in range(params.n_seed):
        center = chart.center + chart.basis @ random_chart_offset(rng, radius)
        T = sweep_oracle(box_scene, chart, theta0, center, params)
        if T is not None:
            want.append(T)
    assert len(got) == len(want) > 0
    for c, T in zip(got, want):
        assert np.allclose(c.pose, T, atol=1e-12)


def test_atlas_from_inside_object_is_collision_free(box_scene):
    got = PL.gpis_atlas(box_scene, np.eye(4), np.random.default_rng(0), small(n_seed=3))
    assert 0 < len(got) <= 3
    for c in got:
        assert not PL.open_collides(box_scene, c.pose)
        assert not check_collision(box_scene.hand, c.state(), box_scene.gpis)[0]


def test_atlas_stops_at_zero_standoff_when_free(sphere_scene, monkeypatch):
    monkeypatch.setattr(PL, "open_collides", lambda *a, **k: False)
    params = small(n_seed=2)
    T_palm = transform(t=np.array([0.0, 0.0, 0.12]))
    got = PL.gpis_atlas(sphere_scene, T_palm, np.random.default_rng(5), params)

    rng = np.random.default_rng(5)
    p, _, _ = PL._nearest(sphere_scene, T_palm[:3, 3])
    radius = params.chart_radius_frac * sphere_scene.diagonal
    chart = make_chart(sphere_scene.gpis, p, radius)
    theta0 = PL._roll_to_match(chart, T_palm[:3, 0])
    for c in got:
        center = chart.center + chart.basis @ random_chart_offset(rng, radius)
        assert np.allclose(c.pose, chart_aligned_pose(chart, 0.0, theta0, center), atol=1e-12)


def test_atlas_seed_count_bounds_output(sphere_scene):
    T = transform(t=np.array([0.0, 0.1, 0.0]))
    for n in (1, 3):
        assert len(PL.gpis_atlas(sphere_scene, T, np.random.default_rng(1), small(n_seed=n))) <= n


# ---------------------------------------------------------------------------
# joint refinement and integration


def test_integrate_never_below_hpp_stage(integrate_box):
    res = integrate_box
    stage = [r["f_obj"] for r in res.trace.records if r["kind"] == "init" and not r["collided"]]
    assert res.best.f_obj >= res.hpp_best.f_obj
    assert res.best.f_obj >= max(stage)
    assert res.admm_runs > 0


def test_integrate_candidates_valid(box_scene, integrate_box):
    for c in integrate_box.top:
        assert_candidate_ok(box_scene, c)
        assert abs(PL.rescore(box_scene, c) - c.f_obj) <= 1e-12


def test_disabled_admm_reproduces_hpp(sphere_scene, hpp_sphere):
    p = small(admm=PL.AdmmParams(enabled=False))
    res = PL.integrate(sphere_scene, p, seed=3)
    assert strip(res.trace.records) == strip(hpp_sphere.trace.records)
    assert res.best.f_obj == hpp_sphere.best.f_obj
    assert res.admm_runs == 0


def test_admm_refinement_not_worse(sphere_scene, hpp_sphere):
    cand = hpp_sphere.best
    out = PL.admm_cp_opt(sphere_scene, cand, np.random.default_rng(0), SMALL_ADMM)
    assert out.best.f_obj >= cand.f_obj
    assert_candidate_ok(sphere_scene, out.best)
    if out.improved:
        assert out.best.provenance == "ADMM"


# ---------------------------------------------------------------------------
# baselines


def test_random_single_evaluation_is_that_sample(sphere_scene):
    for seed in range(6):
        res = PL.baseline_random(sphere_scene, 1, seed=seed)
        rng = np.random.default_rng(seed)
        domain = PoseDomain(sphere_scene.pair)
        T = domain.decode(domain.sample(rng, 1))[0]
        ref = PL.evaluate_pose(sphere_scene, T, "baseline")
        assert res.n_evals == 1
        if ref.collided:
            assert res.best is None
        else:
            assert np.array_equal(res.best.pose, T)
            assert res.best.f_obj == ref.f_obj


def test_baselines_deterministic(box_scene):
    a = PL.baseline_random(box_scene, 6, seed=11)
    b = PL.baseline_random(box_scene, 6, seed=11)
    assert strip(a.trace.records) == strip(b.trace.records)
    a = PL.baseline_sa(box_scene, 6, seed=11)
    b = PL.baseline_sa(box_scene, 6, seed=11)
    assert strip(a.trace.records) == strip(b.trace.records)


def test_metropolis_rule(rng):
    assert PL.metropolis_accept(0.3, 0.0, rng)
    assert PL.metropolis_accept(0.0, 0.0, rng)
    assert not PL.metropolis_accept(-1e-9, 0.0, rng)
    for delta, temp in ((-0.5, 1.0), (-0.02, 0.01)):
        n = 20000
        hits = sum(PL.metropolis_accept(delta, temp, rng) for _ in range(n))
        p = np.exp(delta / temp)
        assert abs(hits / n - p) <= 4 * np.sqrt(p * (1 - p) / n)


def test_sa_zero_temperature_is_greedy(sphere_scene, monkeypatch):
    calls = []
    real = PL.metropolis_accept

    def spy(delta, temp, rng):
        out = real(delta, temp, rng)
        calls.append((delta, temp, out))
        return out

    monkeypatch.setattr(PL, "metropolis_accept", spy)
    PL.baseline_sa(sphere_scene, 15, seed=2, schedule=PL.SaParams(t0=0.0))
    assert calls
    assert all(out == (delta >= 0) for delta, _, out in calls)


def test_sa_cools_geometrically(sphere_scene, monkeypatch):
    temps = []
    monkeypatch.setattr(PL, "metropolis_accept", lambda d, t, r: temps.append(t) or False)
    sched = PL.SaParams(t0=0.5, alpha=0.9, reject_collisions=False)
    PL.baseline_sa(sphere_scene, 8, seed=0, schedule=sched)
    assert np.allclose(temps, 0.5 * 0.9 ** np.arange(7), rtol=0, atol=1e-15)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-4, 10.0), st.integers(0, 2**32 - 1))
def test_anneal_step_stays_in_unit_interval(scale, seed):
    y = PL.anneal_step(np.random.default_rng(seed), scale, 64)
    assert np.all(np.abs(y) <= 1.0 + 1e-12)


def test_anneal_step_quantiles():
    s = 0.01
    y = PL.anneal_step(np.random.default_rng(0), s, 200_000)
    assert abs(np.mean(y > 0) - 0.5) < 0.005
    # |y| has the closed-form quantile s((1 + 1/s)^p - 1)
    for p in (0.1, 0.5, 0.9):
        assert abs(np.mean(np.abs(y) <= s * ((1 + 1 / s) ** p - 1)) - p) < 0.005


def test_sa_step_scale_cools_with_temperature(sphere_scene, monkeypatch):
    scales = []
    real = PL.anneal_step
    monkeypatch.setattr(PL, "anneal_step", lambda rng, sc, n: scales.append(sc) or real(rng, sc, n))
    PL.baseline_sa(sphere_scene, 6, seed=0, schedule=PL.SaParams(step=0.2, alpha=0.8))
    assert np.allclose(scales, 0.2 * 0.8 ** np.arange(5), rtol=0, atol=1e-15)


# ---------------------------------------------------------------------------
# bookkeeping


def test_trace_rejects_non_increasing_iterations():
    tr = PL.RunTrace()
    tr.append(0, None)
    tr.append(2, None)
    with pytest.raises(ValueError):
        tr.append(2, None)


def test_top_k_ties_keep_earlier(sphere_scene):
    T = np.eye(4)
    mk = lambda f, i: PL.GraspCandidate(T, np.zeros(4), np.zeros(3), (), 0.0, f, f, "HPP", i)
    top = PL.TopK(2)
    for f, i in ((0.1, 0), (0.2, 1), (0.2, 2), (0.05, 3)):
        top.offer(mk(f, i))
    top.offer(PL._collided(sphere_scene, T, 0.0, "HPP", 4))
    assert [c.eval_index for c in top.items] == [1, 2]


def test_colliding_pose_scores_zero_and_counts(sphere_scene):
    counter = PL._Counter(max_evals=1)
    c = PL.evaluate_pose(sphere_scene, np.eye(4), counter=counter)
    assert c.collided and c.f_obj == 0.0 and c.eval_index == 0
    assert counter.exhausted()
