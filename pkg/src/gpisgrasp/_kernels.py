"""Fused Matérn 5/2 evaluation for GPIS value queries (hot path of the hand sweeps)."""

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover
    numba = None


def _matern_sum_numpy(Q, XT, alpha, length_scale, s2):
    sq = (Q * Q).sum(axis=1)[:, None] + (XT * XT).sum(axis=0)[None, :] - 2.0 * Q @ XT
    a = np.sqrt(5.0) * np.sqrt(np.maximum(sq, 0.0)) / length_scale
    return s2 * ((1.0 + a + a * a / 3.0) * np.exp(-a)) @ alpha


if numba is not None:

    @numba.njit(cache=True, fastmath=True)
    def _matern_sum_numba(Q, X0, X1, X2, alpha, c, s2):
        # coordinates passed as separate contiguous arrays so the inner loop vectorizes
        m, n = Q.shape[0], X0.shape[0]
        out = np.empty(m)
        for i in range(m):
            q0, q1, q2 = Q[i, 0], Q[i, 1], Q[i, 2]
            acc = 0.0
            for j in range(n):
                d0 = q0 - X0[j]
                d1 = q1 - X1[j]
                d2 = q2 - X2[j]
                a = c * np.sqrt(d0 * d0 + d1 * d1 + d2 * d2)
                acc += alpha[j] * (1.0 + a + a * a * (1.0 / 3.0)) * np.exp(-a)
            out[i] = s2 * acc
        return out

    def matern_sum(Q, XT, alpha, length_scale, s2):
        """``sum_j alpha_j k(|q_i - x_j|)`` for every row ``q_i`` of ``Q``; ``XT`` is (3, n) C-contiguous."""
        Q = np.ascontiguousarray(Q, dtype=np.float64)
        return _matern_sum_numba(Q, XT[0], XT[1], XT[2], alpha, np.sqrt(5.0) / float(length_scale), float(s2))

else:  # pragma: no cover
    matern_sum = _matern_sum_numpy
