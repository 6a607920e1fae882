"""Run all four planners on one object and print a comparison table.

Same machinery as ``gpisgrasp plan`` / ``gpisgrasp compare``, driven from
Python. Every planner gets the same number of palm-pose evaluations.

    python demos/compare_planners.py [sphere|box|cylinder] [n_seeds]
"""

import sys
import tempfile

from gpisgrasp.config import RunConfig
from gpisgrasp.results import compare, plan

obj = sys.argv[1] if len(sys.argv) > 1 else "box"
n_seeds = int(sys.argv[2]) if len(sys.argv) > 2 else 3

base = {
    "mesh": {"primitive": obj},
    "seeds": list(range(n_seeds)),
    "budget": {"evals": 20, "n_init": 4, "n_iter": 20},
    # a lighter joint refinement than the defaults, to keep the demo short
    "admm": {"max_iter": 3, "sub_budget": 4, "sub_init": 4, "n_cand": 128},
    # start temperature on the scale of f_obj differences
    "sa": {"t0": 0.01, "step": 0.3},
}

bundles = []
with tempfile.TemporaryDirectory() as out:
    for planner in ("random", "sa", "hpp", "integrate"):
        cfg = RunConfig.from_dict(dict(base, planner=planner, output_dir=out, name=obj))
        bundle, _ = plan(cfg)
        s = bundle["summary"]
        print(f"{planner:10s} mean best f_obj {s['mean_best_f_obj']:.4f}  "
              f"force closure {s['force_closure_rate']:.2f}  ({bundle['wall_time']:.1f} s)")
        bundles.append(bundle)

for mode in ("top", "best"):
    _, _, md = compare(bundles, mode)
    print(f"\n{mode}:\n{md}")
