"""Result bundles, CSV summaries, comparison tables and scene export."""

from __future__ import annotations

import csv
import io
import json
import logging
from pathlib import Path

import numpy as np

from . import __version__
from .config import RunConfig
from .errors import GraspError, NoFeasiblePose, ObjectMismatch
from .gpis import make_chart
from .hand import LINK_NAMES, HandState, check_collision, forward_kinematics
from .planner import (
    PlanResult,
    Scene,
    baseline_random,
    baseline_sa,
    hpp_opt,
    integrate,
    rescore,
)
from .posedomain import pose_from_dict, pose_to_dict

log = logging.getLogger(__name__)

TIMING_KEYS = frozenset({"wall_time"})


class InvariantViolation(GraspError):
    """A planner output failed a post-run consistency check."""


def run_planner(scene: Scene, cfg: RunConfig, seed: int) -> PlanResult:
    name = cfg.data["planner"]
    b = cfg.data["budget"]
    if name == "hpp":
        return hpp_opt(scene, cfg.planner_params(), seed)
    if name == "integrate":
        return integrate(scene, cfg.planner_params(), seed)
    if name == "random":
        return baseline_random(scene, b["evals"], seed, time_budget=b["time_budget"])
    return baseline_sa(scene, b["evals"], seed, cfg.sa_params(), time_budget=b["time_budget"])


def check_result(scene: Scene, res: PlanResult, tol=1e-12):
    """Post-run invariants: best candidate collision-free, contacts in band, score replays."""
    eps = scene.hand.contact_threshold
    for i, c in enumerate(res.top):
        if check_collision(scene.hand, c.state(), scene.gpis)[0]:
            raise InvariantViolation(f"candidate {i} penetrates the object")
        for k in c.contacts:
            if abs(float(scene.gpis.values(k.point)[0])) > eps + 1e-12:
                raise InvariantViolation(f"candidate {i} has a contact outside the threshold band")
        f = rescore(scene, c)
        if abs(f - c.f_obj) > tol * max(1.0, abs(c.f_obj)):
            raise InvariantViolation(f"candidate {i} re-scores to {f} instead of {c.f_obj}")
    if any(a.f_obj < b.f_obj for a, b in zip(res.top, res.top[1:])):
        raise InvariantViolation("top list is not sorted")
    if res.hpp_best is not None and res.best.f_obj < res.hpp_best.f_obj:
        raise InvariantViolation("result scores below the palm-pose stage best")


def run_summary(res: PlanResult) -> dict:
    top = res.top
    best = res.best
    return {
        "best_q_eps": best.q_eps if best else 0.0,
        "best_q_vol": best.q_vol if best else 0.0,
        "best_f_obj": best.f_obj if best else 0.0,
        "force_closure": bool(best and best.q_eps > 0),
        "mean_q_eps": float(np.mean([c.q_eps for c in top])) if top else 0.0,
        "mean_q_vol": float(np.mean([c.q_vol for c in top])) if top else 0.0,
        "n_candidates": len(top),
        "n_evals": res.n_evals,
        "hpp_best_f_obj": None if res.hpp_best is None else res.hpp_best.f_obj,
    }


def run_record(seed, res: PlanResult | None, error=None) -> dict:
    if res is None:
        return {"seed": seed, "planner": None, "error": error, "summary": None, "candidates": [], "trace": []}
    return {
        "seed": seed,
        "planner": res.planner,
        "error": None,
        "summary": run_summary(res),
        "candidates": [c.to_dict() for c in res.top],
        "trace": res.trace.to_list(),
        "admm_runs": res.admm_runs,
        "wall_time": res.wall_time,
    }


def make_bundle(cfg: RunConfig, scene: Scene, runs: list, wall_time=0.0) -> dict:
    ok = [r for r in runs if r["summary"] is not None]
    return {
        "version": __version__,
        "config": cfg.snapshot(),
        "object": {"mesh_id": scene.mesh.mesh_id, "mesh": cfg.data["mesh"]},
        "planner": cfg.data["planner"],
        "runs": runs,
        "summary": {
            "n_runs": len(runs),
            "n_feasible": len(ok),
            "mean_best_q_eps": float(np.mean([r["summary"]["best_q_eps"] for r in ok])) if ok else 0.0,
            "mean_best_q_vol": float(np.mean([r["summary"]["best_q_vol"] for r in ok])) if ok else 0.0,
            "mean_best_f_obj": float(np.mean([r["summary"]["best_f_obj"] for r in ok])) if ok else 0.0,
            "mean_top_q_eps": float(np.mean([r["summary"]["mean_q_eps"] for r in ok])) if ok else 0.0,
            "mean_top_q_vol": float(np.mean([r["summary"]["mean_q_vol"] for r in ok])) if ok else 0.0,
            "force_closure_rate": float(np.mean([r["summary"]["force_closure"] for r in ok])) if ok else 0.0,
        },
        "wall_time": wall_time,
    }


def dumps_bundle(bundle: dict) -> str:
    return json.dumps(bundle, sort_keys=True, indent=1)


def strip_timing(obj):
    """Copy of a bundle without wall-clock fields (for reproducibility checks)."""
    if isinstance(obj, dict):
        return {k: strip_timing(v) for k, v in obj.items() if k not in TIMING_KEYS}
    if isinstance(obj, list):
        return [strip_timing(v) for v in obj]
    return obj


CSV_FIELDS = ["seed", "planner", "best_q_eps", "best_q_vol", "best_f_obj", "force_closure", "n_evals", "error"]


def bundle_csv(bundle: dict) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    w.writeheader()
    for r in bundle["runs"]:
        s = r["summary"] or {}
        w.writerow(
            {
                "seed": r["seed"],
                "planner": bundle["planner"],
                "best_q_eps": repr(s.get("best_q_eps", 0.0)),
                "best_q_vol": repr(s.get("best_q_vol", 0.0)),
                "best_f_obj": repr(s.get("best_f_obj", 0.0)),
                "force_closure": int(bool(s.get("force_closure", False))),
                "n_evals": s.get("n_evals", 0),
                "error": r["error"] or "",
            }
        )
    return buf.getvalue()


def plan(cfg: RunConfig, write=True) -> tuple[dict, int]:
    """Run every configured seed; returns ``(bundle, exit_code)``."""
    import time

    t0 = time.perf_counter()
    scene = cfg.scene()
    runs = []
    for seed in cfg.data["seeds"]:
        try:
            res = run_planner(scene, cfg, seed)
        except NoFeasiblePose as exc:
            log.warning("seed %d: %s", seed, exc)
            runs.append(run_record(seed, None, str(exc)))
            continue
        if res.best is not None:
            check_result(scene, res)
        log.info("seed %d: best f_obj %.6g (q_eps %.4g) after %d evaluations",
                 seed, res.best.f_obj if res.best else 0.0, res.best.q_eps if res.best else 0.0, res.n_evals)
        runs.append(run_record(seed, res))
    bundle = make_bundle(cfg, scene, runs, time.perf_counter() - t0)
    if write:
        out = Path(cfg.data["output_dir"])
        out.mkdir(parents=True, exist_ok=True)
        stem = f"{cfg.data['name']}_{cfg.data['planner']}"
        (out / f"{stem}.json").write_text(dumps_bundle(bundle))
        (out / f"{stem}.csv").write_text(bundle_csv(bundle))
    code = 1 if runs and all(r["summary"] is None for r in runs) else 0
    return bundle, code


# ---------------------------------------------------------------------------
# comparison


def compare(bundles: list, mode="top") -> tuple[list, str, str]:
    """Per-object, per-planner table of q_eps and q_vol.

    ``mode="top"`` averages each run's top candidates (the usual
    "average of the best 20" statistic), ``mode="best"`` uses each run's
    single best candidate. Returns ``(rows, csv_text, markdown_text)``.
    """
    if len(bundles) < 2:
        raise ValueError("need at least two result bundles")
    key_e, key_v = ("mean_q_eps", "mean_q_vol") if mode == "top" else ("best_q_eps", "best_q_vol")
    table = {}
    planners = []
    for b in bundles:
        p = b["planner"]
        if p not in planners:
            planners.append(p)
        ok = [r["summary"] for r in b["runs"] if r["summary"] is not None]
        entry = table.setdefault(b["object"]["mesh_id"], {"mesh": b["object"]["mesh"]})
        entry[p] = (
            float(np.mean([s[key_e] for s in ok])) if ok else 0.0,
            float(np.mean([s[key_v] for s in ok])) if ok else 0.0,
        )
    objects_by_planner = {p: {k for k, v in table.items() if p in v} for p in planners}
    first = next(iter(objects_by_planner.values()))
    if any(s != first for s in objects_by_planner.values()):
        raise ObjectMismatch("bundles do not cover the same objects for every planner")
    rows = []
    for mesh_id, entry in table.items():
        eps = {p: entry[p][0] for p in planners}
        vol = {p: entry[p][1] for p in planners}
        rows.append(
            {
                "object": _object_label(entry["mesh"]),
                "mesh_id": mesh_id,
                "q_eps": eps,
                "q_vol": vol,
                "best_q_eps": max(planners, key=lambda p: eps[p]),
                "best_q_vol": max(planners, key=lambda p: vol[p]),
            }
        )
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["object"] + [f"{p}_q_eps" for p in planners] + [f"{p}_q_vol" for p in planners] + ["best_q_eps", "best_q_vol"])
    for r in rows:
        w.writerow([r["object"]] + [repr(r["q_eps"][p]) for p in planners] + [repr(r["q_vol"][p]) for p in planners]
                   + [r["best_q_eps"], r["best_q_vol"]])
    md = ["| object | " + " | ".join(f"{p} q_eps / q_vol" for p in planners) + " |",
          "|---|" + "---|" * len(planners)]
    for r in rows:
        cells = []
        for p in planners:
            e = f"{r['q_eps'][p]:.4f}"
            v = f"{r['q_vol'][p]:.4f}"
            if r["best_q_eps"] == p:
                e = f"**{e}**"
            if r["best_q_vol"] == p:
                v = f"**{v}**"
            cells.append(f"{e} / {v}")
        md.append(f"| {r['object']} | " + " | ".join(cells) + " |")
    return rows, buf.getvalue(), "\n".join(md) + "\n"


def _object_label(mesh_cfg):
    if "path" in mesh_cfg:
        return Path(mesh_cfg["path"]).stem
    return mesh_cfg["primitive"]


# ---------------------------------------------------------------------------
# scene export


def export_scene(bundle: dict, candidate=0, run=0, scene: Scene | None = None) -> dict:
    """Viewer-neutral JSON scene for one stored candidate."""
    cfg = RunConfig.from_dict(bundle["config"])
    if scene is None:
        scene = cfg.scene()
    if scene.mesh.mesh_id != bundle["object"]["mesh_id"]:
        raise ObjectMismatch("bundle was produced for a different object")
    rec = bundle["runs"][run]
    if not rec["candidates"]:
        raise ValueError(f"run {run} has no candidates")
    c = rec["candidates"][candidate]
    T = np.array(c["pose_matrix"])
    state = HandState(np.array(c["q"]), T, np.array(c["breakaway"]))
    kin = forward_kinematics(scene.hand, state)
    p = scene.samples.points[scene.tree.nearest_index(T[:3, 3])]
    chart = make_chart(scene.gpis, p, cfg.planner_params().chart_radius_frac * scene.diagonal)
    return {
        "version": __version__,
        "object": {"mesh": bundle["object"]["mesh"], "mesh_id": bundle["object"]["mesh_id"],
                   "transform": np.eye(4).tolist()},
        "palm": pose_to_dict(T),
        "links": [{"name": n, "transform": M.tolist()} for n, M in zip(LINK_NAMES, kin.link_transforms)],
        "hand": scene.hand.to_dict(),
        "joints": {"q": c["q"], "breakaway": c["breakaway"]},
        "contacts": c["contacts"],
        "chart": {
            "center": chart.center.tolist(),
            "basis": chart.basis.tolist(),
            "normal": chart.normal.tolist(),
            "radius": chart.radius,
        },
        "quality": {"q_eps": c["q_eps"], "q_vol": c["q_vol"], "f_obj": c["f_obj"]},
    }


def import_scene(d: dict) -> dict:
    """Inverse of the transform part of :func:`export_scene`."""
    return {
        "palm": pose_from_dict(d["palm"]),
        "links": {l["name"]: np.array(l["transform"]) for l in d["links"]},
        "contacts": [(np.array(c["point"]), np.array(c["normal"])) for c in d["contacts"]],
    }
