"""Consensus ADMM for ``max f(q) + g(z)  s.t.  q = z``.

Scaled form with multiplier ``y``::

    q+ = argmax_q f(q) - rho/2 |q - z + y/rho|^2
    z+ = argmax_z g(z) - rho/2 |q+ - z + y/rho|^2
    y+ = y + rho (q+ - z+)

The sub-solvers are supplied by the caller so the same loop drives exact
toy problems and the surrogate-based joint subproblems of the planner.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np


def augmented_penalty(q, z, y, rho):
    """``rho/2 |q - z + y/rho|^2`` (broadcasts over leading axes of q or z)."""
    d = np.asarray(q, float) - np.asarray(z, float) + np.asarray(y, float) / rho
    return 0.5 * rho * (d * d).sum(axis=-1)


@dataclass
class AdmmState:
    q: np.ndarray
    z: np.ndarray
    y: np.ndarray
    rho: float
    mu_pen: float = 0.0
    primal: list = field(default_factory=list)  # |q - z| per iteration
    dual: list = field(default_factory=list)  # |rho (z_k+1 - z_k)| per iteration
    iterates: list = field(default_factory=list)  # (q, z) per iteration

    def __post_init__(self):
        self.q = np.asarray(self.q, float).copy()
        self.z = np.asarray(self.z, float).copy()
        self.y = np.asarray(self.y, float).copy()
        if not (self.q.shape == self.z.shape == self.y.shape):
            raise ValueError("q, z and y must have the same shape")
        if not self.rho > 0:
            raise ValueError("rho must be positive")

    @property
    def iterations(self):
        return len(self.primal)


@dataclass(frozen=True)
class AdmmResult:
    state: AdmmState
    converged: bool


def consensus_admm(
    q_update: Callable,
    z_update: Callable,
    q0,
    z0=None,
    y0=None,
    rho=1.0,
    mu_pen=0.0,
    eps_primal=1e-3,
    eps_dual=1e-3,
    max_iter=10,
) -> AdmmResult:
    """Run the scaled consensus iteration.

    ``q_update(z, y, rho)`` and ``z_update(q, y, rho)`` return the maximizers
    of their augmented subproblems. Stops once both residuals are within
    tolerance; otherwise returns the last iterate with ``converged=False``.
    """
    q0 = np.asarray(q0, float)
    st = AdmmState(q0, q0 if z0 is None else z0, np.zeros_like(q0) if y0 is None else y0, rho, mu_pen)
    for _ in range(max_iter):
        q = np.asarray(q_update(st.z, st.y, rho), float)
        z = np.asarray(z_update(q, st.y, rho), float)
        y = st.y + rho * (q - z)
        r_primal = float(np.linalg.norm(q - z))
        r_dual = float(np.linalg.norm(rho * (z - st.z)))
        st.q, st.z, st.y = q, z, y
        st.primal.append(r_primal)
        st.dual.append(r_dual)
        st.iterates.append((q.copy(), z.copy()))
        if r_primal <= eps_primal and r_dual <= eps_dual:
            return AdmmResult(st, True)
    return AdmmResult(st, False)


def grid_argmax(objective, lower, upper, n=2001):
    """Exhaustive 1-D grid maximizer, used for scalar toy subproblems."""
    xs = np.linspace(lower, upper, n)
    vals = np.array([objective(np.array([x])) for x in xs])
    return np.array([xs[int(np.argmax(vals))]])
