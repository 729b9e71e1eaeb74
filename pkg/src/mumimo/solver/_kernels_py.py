"""Pure numpy barrier kernel; the reference the Cython build must match."""

import math

import numpy as np

LN2 = math.log(2.0)


def barrier_eval(y, coef, group, n_groups, sl, su, sr, A, mu, grad=None, hess=None):
    """Barrier objective ``f(y) - mu * sum(log slacks)``.

    The caller owns the slacks (``y - lo``, ``hi - y`` with ``inf`` for absent
    bounds, and ``1 - A y`` for unit-normalized rows) so they can be tracked
    without cancellation near active constraints.  ``grad`` and ``hess`` are
    filled in place when given.  Returns ``inf`` outside the strict interior.
    """
    one = 1.0 + coef * y
    if one.min(initial=1.0) <= 0 or sl.min(initial=1.0) <= 0 or su.min(initial=1.0) <= 0 \
            or sr.min(initial=1.0) <= 0:
        return math.inf
    R = np.bincount(group, np.log(one) / LN2, minlength=n_groups)
    if R.min(initial=1.0) <= 0:
        return math.inf
    fin = np.isfinite(su)
    value = -np.log(R).sum() - mu * (
        np.log(sl).sum() + np.log(su[fin]).sum() + np.log(sr).sum()
    )
    if grad is None and hess is None:
        return float(value)

    Rg = R[group]
    gv = coef / (one * LN2)
    gf = -gv / Rg
    inv_su = 1.0 / su
    inv_sr = 1.0 / sr
    if grad is not None:
        grad[:] = gf + mu * (-1.0 / sl + inv_su + A.T @ inv_sr)
    if hess is not None:
        same = group[:, None] == group[None, :]
        hess[:] = np.where(same, np.outer(gf, gf), 0.0)
        hess[np.diag_indices_from(hess)] += (
            coef * gv / (one * Rg) + mu * (1.0 / sl**2 + inv_su**2)
        )
        hess += mu * (A.T * inv_sr**2) @ A
    return float(value)
