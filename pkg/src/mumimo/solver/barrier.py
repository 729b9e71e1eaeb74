"""Primal log-barrier interior-point method for :class:`ConvexProblem`.

Damped Newton centering with an Armijo backtracking line search; the barrier
weight ``mu`` is cut by ``barrier_reduction`` after every centering (one outer
iteration).  Internally each variable is rescaled by the largest value it can
take on its own, and every row is normalized to a unit right-hand side.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np
import scipy.linalg

from . import kernels
from .problem import ConvexProblem


class NumericalFailure(ArithmeticError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_iterations: int = 10
    tolerance: float = 1e-8
    barrier_reduction: float = 0.1
    initial_interior_margin: float = 0.01
    initial_barrier: float = 0.1
    max_newton_steps: int = 60
    armijo_slope: float = 1e-4
    backtrack: float = 0.5

    def __post_init__(self):
        if self.max_iterations < 1 or self.max_newton_steps < 1:
            raise ValueError("iteration limits must be positive")
        if not 0 < self.barrier_reduction < 1:
            raise ValueError("barrier_reduction must lie in (0, 1)")
        if self.tolerance <= 0 or self.initial_barrier <= 0:
            raise ValueError("tolerance and initial_barrier must be positive")
        if not 0 < self.initial_interior_margin < 1:
            raise ValueError("initial_interior_margin must lie in (0, 1)")


@dataclass
class Solution:
    x: np.ndarray
    objective_value: float
    kkt_residual: float  # on the normalized problem (unit-free)
    iterations_used: int
    status: str  # converged | iteration-capped | infeasible
    duals: Dict[str, np.ndarray] = field(default_factory=dict)
    objective_history: List[float] = field(default_factory=list)
    barrier_history: List[List[float]] = field(default_factory=list, repr=False)
    newton_steps: int = 0

    @property
    def ok(self) -> bool:
        return self.status in ("converged", "iteration-capped")


def kkt_residual(problem: ConvexProblem, x: np.ndarray, duals: Dict[str, np.ndarray]) -> float:
    """Max of stationarity, primal-infeasibility and complementarity norms.

    ``duals`` holds ``rows``, ``lower`` and ``upper`` multipliers (missing
    entries count as zero).
    """
    x = np.asarray(x, dtype=float)
    n, m = problem.n_vars, problem.A.shape[0]
    nu = np.asarray(duals.get("rows", np.zeros(m)), dtype=float)
    zl = np.asarray(duals.get("lower", np.zeros(n)), dtype=float)
    zu = np.asarray(duals.get("upper", np.zeros(n)), dtype=float)
    stat = problem.gradient(x) + problem.A.T @ nu - zl + zu
    row_slack = problem.b - problem.A @ x
    lo_slack = x - problem.lower
    hi_slack = problem.upper - x
    primal = max(0.0, -row_slack.min(initial=0.0), -lo_slack.min(initial=0.0),
                 -hi_slack[np.isfinite(hi_slack)].min(initial=0.0))
    hi_fin = np.isfinite(problem.upper)
    comp = max(
        np.abs(nu * row_slack).max(initial=0.0),
        np.abs(zl * lo_slack).max(initial=0.0),
        np.abs(zu[hi_fin] * hi_slack[hi_fin]).max(initial=0.0),
    )
    return float(max(np.abs(stat).max(initial=0.0), primal, comp))


def _scaling(problem: ConvexProblem) -> np.ndarray:
    """Largest value each variable can reach alone (bounded by its rows)."""
    s = problem.upper.copy()
    A, b = problem.A, problem.b
    for k in range(A.shape[0]):
        nz = A[k] > 0
        s[nz] = np.minimum(s[nz], b[k] / A[k, nz])
    bad = ~np.isfinite(s) | (s <= 0)
    s[bad] = np.maximum(1.0, np.abs(problem.lower[bad]))
    return s


def _start(lo, hi, A, margin) -> np.ndarray:
    target = np.minimum(hi, np.maximum(lo, 0.0) + 1.0)
    for _ in range(80):
        y = lo + margin * (target - lo)
        if np.all(y > lo) and np.all(y < hi) and np.all(A @ y < 1.0):
            return y
        margin *= 0.5
    return None


def _infeasible(problem: ConvexProblem, msg_iters=0) -> Solution:
    x = np.clip(np.zeros(problem.n_vars), problem.lower, problem.upper)
    return Solution(x, math.inf, math.inf, msg_iters, "infeasible")


class _Iterate:
    """Scaled point plus its slacks, tracked through updates.

    Slacks of nearly active constraints are updated incrementally rather than
    recomputed as ``1 - A y``, which would lose all significant digits.
    """

    REFRESH = 1e-3

    def __init__(self, y, lo, hi, A):
        self.lo, self.hi, self.A = lo, hi, A
        self.fin = np.isfinite(hi)
        self.y = y
        self.sl = y - lo
        self.su = np.where(self.fin, hi - y, math.inf)
        self.sr = 1.0 - A @ y

    def moved(self, step, t):
        new = object.__new__(_Iterate)
        new.lo, new.hi, new.A, new.fin = self.lo, self.hi, self.A, self.fin
        dy = t * step
        new.y = self.y + dy
        new.sl = self.sl + dy
        new.su = self.su - dy
        new.sr = self.sr - self.A @ dy
        new._refresh()
        return new

    def _refresh(self):
        ex = self.y - self.lo
        self.sl = np.where(ex > self.REFRESH, ex, self.sl)
        ex = np.where(self.fin, self.hi - self.y, math.inf)
        self.su = np.where(ex > self.REFRESH, ex, self.su)
        ex = 1.0 - self.A @ self.y
        self.sr = np.where(ex > self.REFRESH, ex, self.sr)

    def max_step(self, step) -> float:
        """Fraction-to-boundary step length (99% of the distance to a wall)."""
        t = 1.0
        neg = step < 0
        if np.any(neg):
            t = min(t, 0.99 * np.min(self.sl[neg] / -step[neg]))
        pos = (step > 0) & self.fin
        if np.any(pos):
            t = min(t, 0.99 * np.min(self.su[pos] / step[pos]))
        dA = self.A @ step
        up = dA > 0
        if np.any(up):
            t = min(t, 0.99 * np.min(self.sr[up] / dA[up]))
        return float(t)

    def barrier_gradient(self) -> np.ndarray:
        return -1.0 / self.sl + 1.0 / self.su + self.A.T @ (1.0 / self.sr)


def solve(problem: ConvexProblem, cfg: SolverConfig = SolverConfig()) -> Solution:
    if problem.is_empty or np.any(problem.b <= 0):
        return _infeasible(problem)
    s = _scaling(problem)
    coef = problem.coef * s
    lo = problem.lower / s
    hi = problem.upper / s
    A = np.ascontiguousarray(problem.A * s[None, :] / problem.b[:, None])
    group = np.ascontiguousarray(problem.group, dtype=np.intp)
    ng = problem.n_groups
    n = problem.n_vars

    # residuals are measured on the normalized problem so the stopping test
    # does not depend on the power unit
    scaled = ConvexProblem(coef, group, lo, hi, A, np.ones(A.shape[0]), ng)

    y0 = _start(lo, hi, A, cfg.initial_interior_margin)
    if y0 is None:
        return _infeasible(problem)
    pt = _Iterate(y0, lo, hi, A)

    def evaluate(q, mu, grad=None, hess=None):
        return kernels.barrier_eval(q.y, coef, group, ng, q.sl, q.su, q.sr, A, mu,
                                    grad, hess)

    grad = np.empty(n)
    hess = np.empty((n, n))
    mu = cfg.initial_barrier
    history: List[float] = []
    barrier_hist: List[List[float]] = []
    total_newton = 0
    status = "iteration-capped"
    best = None  # (residual, x, duals)
    it = 0
    for it in range(1, cfg.max_iterations + 1):
        values = []
        stall = math.inf
        for _ in range(cfg.max_newton_steps):
            val = evaluate(pt, mu, grad, hess)
            if not math.isfinite(val) or not np.all(np.isfinite(grad)):
                raise NumericalFailure("barrier evaluation left the domain")
            values.append(val)
            gnorm = np.max(np.abs(grad))
            if gnorm <= 0.1 * cfg.tolerance:
                break
            step = _newton_step(hess, grad)
            slope = float(grad @ step)
            if -slope <= 1e-30:
                break
            t = pt.max_step(step)
            if -slope <= 1e-12 * max(1.0, abs(val)):
                # the line search cannot resolve this decrease in floating
                # point; take safeguarded full steps while the gradient shrinks
                if gnorm > 0.5 * stall:
                    break
                stall = gnorm
                pt = pt.moved(step, t)
                total_newton += 1
                continue
            accepted = False
            while t > 1e-16:
                cand = pt.moved(step, t)
                cval = evaluate(cand, mu)
                if cval <= val + cfg.armijo_slope * t * slope:
                    accepted = cval < val
                    pt = cand
                    break
                t *= cfg.backtrack
            total_newton += 1
            if not accepted:
                break
        barrier_hist.append(values)

        x = np.clip(pt.y * s, problem.lower, problem.upper)
        history.append(problem.objective(x))
        sd = _duals(pt, mu)
        res = kkt_residual(scaled, np.clip(pt.y, lo, hi), sd)
        duals = {"rows": sd["rows"] / problem.b, "lower": sd["lower"] / s,
                 "upper": sd["upper"] / s}
        if best is None or res < best[0]:
            best = (res, x, duals)
        if res <= cfg.tolerance:
            status = "converged"
            break
        if it == cfg.max_iterations:
            break
        # tangent predictor along the central path toward the next mu
        mu_next = mu * cfg.barrier_reduction
        evaluate(pt, mu, grad, hess)
        step = _newton_step(hess, pt.barrier_gradient()) * (mu_next - mu)
        mu = mu_next
        cand = pt.moved(step, pt.max_step(step))
        if math.isfinite(evaluate(cand, mu)):
            pt = cand

    res, x, duals = best
    return Solution(x, problem.objective(x), res, it, status, duals, history,
                    barrier_hist, total_newton)


def _newton_step(hess, grad) -> np.ndarray:
    try:
        step = -scipy.linalg.solve(hess, grad, assume_a="pos", check_finite=False)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise NumericalFailure(f"Newton system failed: {exc}") from exc
    if not np.all(np.isfinite(step)):
        raise NumericalFailure("non-finite Newton step")
    return step


def _duals(pt, mu) -> Dict[str, np.ndarray]:
    # central-path multipliers of the normalized problem
    return {"rows": mu / pt.sr, "lower": mu / pt.sl,
            "upper": np.where(pt.fin, mu / pt.su, 0.0)}
