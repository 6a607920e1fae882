"""Plan a three-finger grasp on a sphere and inspect the result.

Walks through the pieces one at a time: the implicit surface fitted to
mesh samples, a chart on it, one closing sweep of the hand, the wrench
space score of that grasp, and finally a short palm-pose optimization.

    python demos/sphere_grasp.py
"""

import numpy as np

from gpisgrasp.geometry import icosphere
from gpisgrasp.gpis import make_chart
from gpisgrasp.hand import LINK_NAMES
from gpisgrasp.planner import PlannerParams, build_scene, evaluate_pose, hpp_opt
from gpisgrasp.posedomain import chart_aligned_pose

scene = build_scene(icosphere(0.05, 3))
g = scene.gpis
print(f"implicit surface: {len(g.X)} training points, offset {g.offset:.4f} m")

# the fitted function is ~0 on the surface, negative inside, positive outside
probe = np.array([[0.05, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.1]])
print("f at surface / center / outside:", np.round(g.values(probe), 4))

# chart at the north pole; the palm faces the surface from 4 cm away
chart = make_chart(g, np.array([0.0, 0.0, 0.05]), 0.02)
T = chart_aligned_pose(chart, 0.04)
c = evaluate_pose(scene, T)
print(f"\nclosing at the pole: {len(c.contacts)} contacts, q_eps {c.q_eps:.4f}, q_vol {c.q_vol:.4f}")
for k in c.contacts:
    print(f"  {LINK_NAMES[k.link]:12s} point {np.round(k.point, 4)}  |f| {abs(g.values(k.point)[0]):.2e}")

# a short optimization run: 4 space-filling poses, then EI proposals with chart adaption
res = hpp_opt(scene, PlannerParams(n_init=4, n_iter=20, max_evals=30), seed=0)
b = res.best
print(f"\nhpp_opt after {res.n_evals} evaluations: f_obj {b.f_obj:.4f} (q_eps {b.q_eps:.4f}, q_vol {b.q_vol:.4f})")
print("joints:", np.round(b.q, 3))
print("top candidates:", [round(x.f_obj, 4) for x in res.top[:5]])
