"""Command-line driver: ``gpisgrasp {fit-gpis,plan,compare,export-scene}``.

Exit codes: 0 success, 1 no feasible pose on any seed, 2 input error,
3 internal invariant violation or unexpected failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .config import ENV_LOG_LEVEL, RunConfig
from .errors import ConfigError, GraspError, ObjectMismatch, ParseError
from .geometry import sample_surface
from .gpis import fit_gpis
from .results import InvariantViolation, compare, export_scene, plan

TRACE = 5
logging.addLevelName(TRACE, "TRACE")
LOG_LEVELS = {"info": logging.INFO, "debug": logging.DEBUG, "trace": TRACE}

EXIT_OK, EXIT_INFEASIBLE, EXIT_INPUT, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("gpisgrasp")


def parse_seeds(text: str) -> list:
    """``"3"``, ``"0,2,5"`` or an inclusive range ``"0..19"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            a, b = part.split("..", 1)
            lo, hi = int(a), int(b)
            if hi < lo:
                raise argparse.ArgumentTypeError(f"empty seed range {part!r}")
            out.extend(range(lo, hi + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("no seeds given")
    return out


def _add_run_flags(p):
    p.add_argument("--config", type=Path, help="JSON run config")
    p.add_argument("--mesh", type=Path, help="mesh file (.obj/.off), overrides the config")
    p.add_argument("--mesh-scale", type=float)
    p.add_argument("--primitive", choices=["sphere", "box", "cylinder"], help="built-in test object")
    p.add_argument("--hand", type=Path, help="hand description JSON")
    p.add_argument("--output-dir", type=Path)
    p.add_argument("--name")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpisgrasp", description=__doc__.splitlines()[0])
    ap.add_argument("--log-level", choices=list(LOG_LEVELS), default=None)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit-gpis", help="fit and save the implicit surface model")
    _add_run_flags(p)
    p.add_argument("--model-out", type=Path, help="model file (default <output-dir>/<name>_gpis.json)")
    p.add_argument("--holdout", type=int, default=2000, help="held-out surface samples for the report")

    p = sub.add_parser("plan", help="run a planner over one or more seeds")
    _add_run_flags(p)
    p.add_argument("--planner", choices=["hpp", "integrate", "random", "sa"])
    p.add_argument("--seeds", type=parse_seeds)
    p.add_argument("--evals", type=int, help="palm-pose evaluation budget")
    p.add_argument("--n-init", type=int)
    p.add_argument("--n-iter", type=int)
    p.add_argument("--time-budget", type=float)

    p = sub.add_parser("compare", help="tabulate two or more result bundles")
    p.add_argument("bundles", nargs="+", type=Path)
    p.add_argument("--mode", choices=["top", "best"], default="top")
    p.add_argument("--csv", type=Path)
    p.add_argument("--markdown", type=Path)

    p = sub.add_parser("export-scene", help="write a viewer scene for one stored candidate")
    p.add_argument("bundle", type=Path)
    p.add_argument("--candidate", type=int, default=0)
    p.add_argument("--run", type=int, default=0)
    p.add_argument("--out", type=Path)
    return ap


def config_from_args(args) -> RunConfig:
    over = {}
    if args.mesh is not None:
        over["mesh"] = {"path": str(args.mesh)}
        if args.mesh_scale is not None:
            over["mesh"]["scale"] = args.mesh_scale
    elif args.primitive is not None:
        over["mesh"] = {"primitive": args.primitive}
    if args.hand is not None:
        over["hand_file"] = str(args.hand)
    if args.output_dir is not None:
        over["output_dir"] = str(args.output_dir)
    if args.name is not None:
        over["name"] = args.name
    budget = {}
    for flag, key in (("evals", "evals"), ("n_init", "n_init"), ("n_iter", "n_iter"), ("time_budget", "time_budget")):
        v = getattr(args, flag, None)
        if v is not None:
            budget[key] = v
    if budget:
        over["budget"] = budget
    if getattr(args, "planner", None):
        over["planner"] = args.planner
    if getattr(args, "seeds", None):
        over["seeds"] = args.seeds
    if args.config is not None:
        base = RunConfig.load(args.config).data
        if "mesh" in over:
            base = {k: v for k, v in base.items() if k != "mesh"}
        over = _deep_merge(base, over)
    elif "mesh" not in over:
        raise ConfigError("no object given: pass --config, --mesh or --primitive")
    if args.mesh_scale is not None and "path" in over["mesh"]:
        over["mesh"]["scale"] = args.mesh_scale
    return RunConfig.from_dict(over)


def _deep_merge(a, b):
    out = dict(a)
    for k, v in b.items():
        out[k] = _deep_merge(out[k], v) if isinstance(v, dict) and isinstance(out.get(k), dict) else v
    return out


# ---------------------------------------------------------------------------
# commands


def cmd_fit_gpis(cfg: RunConfig, model_out=None, n_holdout=2000) -> dict:
    """Fit, save, and report held-out ``|f|`` on fresh surface samples."""
    t0 = time.perf_counter()
    g = cfg.data["gpis"]
    mesh = cfg.mesh()
    samples = sample_surface(mesh, g["n_samples"], g["sample_seed"])
    kw = {k: g[k] for k in ("offset", "length_scale", "sigma", "jitter", "max_points") if g.get(k) is not None}
    model = fit_gpis(samples, **kw)
    held = sample_surface(mesh, n_holdout, g["sample_seed"] + 1)
    f = np.abs(model.values(held.points))
    diag = float(np.linalg.norm(mesh.vertices.max(axis=0) - mesh.vertices.min(axis=0)))
    model_path = Path(model_out) if model_out else Path(cfg.data["output_dir"]) / f"{cfg.data['name']}_gpis.json"
    model_path.parent.mkdir(parents=True, exist_ok=True)
    model_path.write_text(model.dumps())
    report = {
        "model_file": str(model_path),
        "mesh_id": mesh.mesh_id,
        "n_training": int(len(model.X)),
        "n_holdout": int(n_holdout),
        "holdout_abs_f": {
            "mean": float(f.mean()),
            "max": float(f.max()),
            "p95": float(np.quantile(f, 0.95)),
        },
        "diagonal": diag,
        "mean_over_diagonal": float(f.mean() / diag),
        "wall_time": time.perf_counter() - t0,
    }
    report_path = model_path.with_name(model_path.stem + "_report.json")
    report_path.write_text(json.dumps(report, sort_keys=True, indent=1))
    return report


def _load_bundle(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"result bundle not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"result bundle {path} is not valid JSON: {exc}") from None


def _run(args) -> int:
    if args.command == "fit-gpis":
        rep = cmd_fit_gpis(config_from_args(args), args.model_out, args.holdout)
        print(json.dumps(rep, sort_keys=True, indent=1))
        return EXIT_OK
    if args.command == "plan":
        cfg = config_from_args(args)
        bundle, code = plan(cfg)
        s = bundle["summary"]
        print(
            f"{cfg.data['planner']}: {s['n_feasible']}/{s['n_runs']} feasible runs, "
            f"mean best q_eps {s['mean_best_q_eps']:.6g}, force closure rate {s['force_closure_rate']:.2f}"
        )
        return code
    if args.command == "compare":
        if len(args.bundles) < 2:
            raise ConfigError("compare needs at least two result bundles")
        _, text_csv, text_md = compare([_load_bundle(p) for p in args.bundles], args.mode)
        if args.csv:
            args.csv.write_text(text_csv)
        if args.markdown:
            args.markdown.write_text(text_md)
        sys.stdout.write(text_md)
        return EXIT_OK
    # export-scene
    bundle = _load_bundle(args.bundle)
    scene = export_scene(bundle, args.candidate, args.run)
    out = args.out or args.bundle.with_name(f"{args.bundle.stem}_scene{args.run}_{args.candidate}.json")
    out.write_text(json.dumps(scene, sort_keys=True, indent=1))
    print(out)
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = args.log_level or os.environ.get(ENV_LOG_LEVEL, "info").lower()
    logging.basicConfig(level=LOG_LEVELS.get(level, logging.INFO), format="%(levelname)s %(name)s: %(message)s")
    try:
        return _run(args)
    except (ConfigError, ParseError, ObjectMismatch, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InvariantViolation as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except GraspError as exc:
        # remaining module errors stem from the supplied object or hand
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        log.debug("unexpected failure", exc_info=True)
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
