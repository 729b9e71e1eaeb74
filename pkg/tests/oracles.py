"""Independent reference computations used only by the tests.

Nothing here imports the package's numerical routines: SINRs come from dense
inverses, gradients from central differences, and small convex problems from
a grid search followed by a local SLSQP refinement.
"""

import itertools
import math

import numpy as np
from scipy.optimize import minimize


def sinr_dense(H):
    """``1 / diag((H^H H)^{-1})`` with an explicit inverse."""
    H = np.asarray(H, dtype=complex)
    inv = np.linalg.inv(H.conj().T @ H)
    return 1.0 / np.real(np.diag(inv))


def inv_sqrt_dense(R):
    w, V = np.linalg.eigh(R)
    return V @ np.diag(w ** -0.5) @ V.conj().T


def objective(coef, group, n_groups, x):
    r = np.log1p(coef * x) / math.log(2.0)
    R = np.bincount(group, r, minlength=n_groups)
    if np.any(R <= 0):
        return math.inf
    return float(-np.sum(np.log(R)))


def central_gradient(f, x, h=1e-6):
    g = np.zeros_like(x)
    for k in range(x.size):
        step = h * max(1.0, abs(x[k]))
        e = np.zeros_like(x)
        e[k] = step
        g[k] = (f(x + e) - f(x - e)) / (2 * step)
    return g


def _radial_sample(lower, reach, A, b, count):
    """Random feasible points: a Dirichlet direction pushed a random fraction
    of the way from the lower corner to the boundary of the feasible set."""
    rng = np.random.default_rng(7)
    n = lower.size
    head = b - A @ lower
    for _ in range(count):
        d = rng.dirichlet(np.ones(n)) * (reach - lower)
        load = A @ d
        t = min(1.0, np.min(np.where(load > 0, head / np.where(load > 0, load, 1), np.inf)))
        yield lower + d * t * rng.uniform(0.5, 1.0) ** (1.0 / n)


def grid_oracle(coef, group, n_groups, lower, upper, A, b, points=200):
    """Best objective over a feasible grid, then polished by SLSQP.

    Grids are per-axis uniform on ``[lower, min(upper, max row reach)]``; with
    more than two variables a random radial sample of the feasible set replaces
    the full grid.
    """
    coef = np.asarray(coef, float)
    n = coef.size
    reach = np.array([min(upper[v], min(b[k] / A[k, v] for k in range(len(b)) if A[k, v] > 0))
                      for v in range(n)])
    f = lambda x: objective(coef, group, n_groups, x)
    feasible = lambda x: np.all(A @ x <= b * (1 + 1e-12))
    best_x, best = None, math.inf
    if n <= 2:
        axes = [np.linspace(lower[v], reach[v], points) for v in range(n)]
        cands = (np.array(p) for p in itertools.product(*axes))
    else:
        cands = _radial_sample(lower, reach, A, b, points * 50)
    for x in cands:
        if feasible(x):
            v = f(x)
            if v < best:
                best, best_x = v, x
    cons = [{"type": "ineq", "fun": lambda x, k=k: b[k] - A[k] @ x} for k in range(len(b))]
    res = minimize(f, best_x, method="SLSQP", bounds=list(zip(lower, reach)),
                   constraints=cons, options={"ftol": 1e-14, "maxiter": 500})
    # SLSQP may flag a precision-limited line search as failure at the optimum;
    # any feasible improvement is kept
    if feasible(res.x) and res.fun < best:
        return float(res.fun), res.x
    return best, best_x
