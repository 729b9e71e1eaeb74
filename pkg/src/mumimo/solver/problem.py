"""Standard-form power-allocation problems and their text dump format.

Every problem has the shape::

    minimize   -sum_i ln( sum_{v in S_i} log2(1 + coef_v x_v) )
    subject to lower <= x <= upper,  A x <= b

with one group ``S_i`` per UE.  Variables whose gain is zero never enter a
problem; ``labels`` maps each variable back to its ``(ue, layer, rbg)``.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

LN2 = math.log(2.0)


class InfeasibleProblemError(ValueError):
    """Lower bounds leave no strictly feasible point."""

    def __init__(self, msg, ues=(), rows=()):
        super().__init__(msg)
        self.ues = list(ues)
        self.rows = list(rows)


class ProblemFormatError(ValueError):
    pass


@dataclass
class ConvexProblem:
    coef: np.ndarray
    group: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    A: np.ndarray
    b: np.ndarray
    n_groups: int = None
    labels: List[Tuple[int, int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.coef = np.asarray(self.coef, dtype=float).reshape(-1)
        n = self.coef.size
        self.group = np.asarray(self.group, dtype=np.intp).reshape(-1)
        self.lower = np.asarray(self.lower, dtype=float).reshape(-1)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        if self.A.size == 0:
            self.A = self.A.reshape(self.A.shape[0] if self.A.shape[-1] == n else 0, n)
        if self.A.shape[1] != n:
            raise ValueError("constraint matrix width must equal the number of variables")
        self.b = np.asarray(self.b, dtype=float).reshape(-1)
        if self.n_groups is None:
            self.n_groups = int(self.group.max()) + 1 if n else 0
        if not (self.group.size == self.lower.size == self.upper.size == n):
            raise ValueError("per-variable arrays must have equal length")
        if self.A.shape[0] != self.b.size:
            raise ValueError("constraint rows and bounds disagree")
        if np.any(self.coef <= 0) or not np.all(np.isfinite(self.coef)):
            raise ValueError("coefficients must be finite and positive")
        if np.any(self.lower >= self.upper):
            raise ValueError("each lower bound must be below its upper bound")
        if n and (self.group.min() < 0 or self.group.max() >= self.n_groups):
            raise ValueError("group index out of range")
        if n and np.any(np.bincount(self.group, minlength=self.n_groups) == 0):
            raise ValueError("every group needs at least one variable")

    @property
    def n_vars(self) -> int:
        return self.coef.size

    @property
    def is_empty(self) -> bool:
        return self.coef.size == 0

    def group_rates(self, x: np.ndarray) -> np.ndarray:
        r = np.log1p(self.coef * np.asarray(x, dtype=float)) / LN2
        return np.bincount(self.group, r, minlength=self.n_groups)

    def objective(self, x: np.ndarray) -> float:
        R = self.group_rates(x)
        if np.any(R <= 0):
            return math.inf
        return float(-np.sum(np.log(R)))

    def gradient(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        R = self.group_rates(x)
        return -self.coef / ((1.0 + self.coef * x) * LN2 * R[self.group])

    def is_feasible(self, x: np.ndarray, rtol: float = 1e-8) -> bool:
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lower - rtol * np.maximum(1.0, np.abs(self.lower))):
            return False
        if np.any(x > self.upper + rtol * np.abs(self.upper)):
            return False
        return bool(np.all(self.A @ x <= self.b + rtol * np.abs(self.b)))

    def strictly_feasible_point_exists(self) -> bool:
        # A >= 0 in every builder, so the lower-bound corner is the least loaded point
        return bool(np.all(self.A @ self.lower < self.b))


def concat_problems(problems: Sequence[ConvexProblem]) -> ConvexProblem:
    """Joint problem with disjoint groups and block-diagonal rows."""
    problems = [p for p in problems if not p.is_empty]
    n = sum(p.n_vars for p in problems)
    m = sum(p.A.shape[0] for p in problems)
    A = np.zeros((m, n))
    r = c = goff = 0
    groups = []
    for p in problems:
        A[r : r + p.A.shape[0], c : c + p.n_vars] = p.A
        groups.append(p.group + goff)
        r += p.A.shape[0]
        c += p.n_vars
        goff += p.n_groups
    return ConvexProblem(
        coef=np.concatenate([p.coef for p in problems]),
        group=np.concatenate(groups),
        lower=np.concatenate([p.lower for p in problems]),
        upper=np.concatenate([p.upper for p in problems]),
        A=A,
        b=np.concatenate([p.b for p in problems]),
        n_groups=goff,
        labels=[lab for p in problems for lab in p.labels],
    )


def _active_vars(lam_ue: np.ndarray, d_ue: np.ndarray, rank: int):
    n_u, n_rbg = lam_ue.shape
    return [(j, g) for g in range(n_rbg) for j in range(min(rank, n_u))
            if d_ue[g] and lam_ue[j, g] > 0]


def build_ul_problem(lambdas, deltas, ranks, p_u_max, rho_max, rho_min=None,
                     scale_c: float = 0.5) -> List[ConvexProblem]:
    """One independent problem per UE under its own power budget.

    A UE with no usable variable yields an empty problem.  With ``rho_min``
    the stage-2 lower bounds ``rho_min / lambda`` are imposed; UEs whose
    bounds already exhaust the budget are reported in one
    :class:`InfeasibleProblemError`.
    """
    values = getattr(lambdas, "values", lambdas)
    d = np.asarray(deltas).astype(bool)
    n_ue = values.shape[0]
    p_max = np.broadcast_to(np.asarray(p_u_max, dtype=float), (n_ue,))
    problems, bad = [], []
    for i in range(n_ue):
        vars_ = _active_vars(values[i], d[i], int(ranks[i]))
        lam = np.array([values[i, j, g] for j, g in vars_])
        n = len(vars_)
        lo = np.zeros(n) if rho_min is None else rho_min / lam if n else np.zeros(0)
        if n and rho_min is not None and lo.sum() >= p_max[i]:
            bad.append(i)
        problems.append(ConvexProblem(
            coef=scale_c * lam, group=np.zeros(n, dtype=np.intp), lower=lo,
            upper=rho_max / lam if n else np.zeros(0), A=np.ones((1, n)),
            b=[p_max[i]], n_groups=1 if n else 0,
            labels=[(i, j, g) for j, g in vars_],
        ))
    if bad:
        raise InfeasibleProblemError(
            f"rate-floor lower bounds exceed the power budget of UE(s) {bad}", ues=bad
        )
    return problems


def build_dl_problem(lambdas, deltas, ranks, weights, p_b_max, p_ant, rho_max,
                     rho_min=None, scale_c: float = 0.5) -> ConvexProblem:
    """Joint downlink problem: one total-power row plus one row per antenna.

    ``weights[k, i, j, g]`` is ``|[W_{i,g}]_{k,j}|^2``.
    """
    values = getattr(lambdas, "values", lambdas)
    a = np.asarray(weights, dtype=float)
    d = np.asarray(deltas).astype(bool)
    n_ue = values.shape[0]
    labels, lam, group = [], [], []
    present = []
    for i in range(n_ue):
        vars_ = _active_vars(values[i], d[i], int(ranks[i]))
        if vars_:
            present.append(i)
        for j, g in vars_:
            labels.append((i, j, g))
            lam.append(values[i, j, g])
            group.append(len(present) - 1)
    lam = np.array(lam)
    n = lam.size
    cols = np.array([a[:, i, j, g] for i, j, g in labels]).T if n else np.zeros((a.shape[0], 0))
    A = np.vstack([cols.sum(axis=0, keepdims=True), cols])
    b = np.concatenate([[p_b_max], np.full(a.shape[0], p_ant)])
    lo = np.zeros(n) if rho_min is None else rho_min / lam
    prob = ConvexProblem(
        coef=scale_c * lam, group=np.array(group, dtype=np.intp), lower=lo,
        upper=rho_max / lam if n else np.zeros(0), A=A, b=b,
        n_groups=len(present), labels=labels,
    )
    if n and rho_min is not None:
        load = A @ lo
        rows = np.flatnonzero(load >= b)
        if rows.size:
            raise InfeasibleProblemError(
                f"rate-floor lower bounds violate power row(s) {rows.tolist()}", rows=rows
            )
    return prob


# --- text dump -----------------------------------------------------------

_HEADER = "# mumimo convex problem v1"


def dump_problem(problem: ConvexProblem, path) -> None:
    lines = [_HEADER, f"vars {problem.n_vars}", f"groups {problem.n_groups}"]
    for v in range(problem.n_vars):
        lab = problem.labels[v] if problem.labels else None
        tail = f" label {lab[0]} {lab[1]} {lab[2]}" if lab else ""
        lines.append(
            f"var {v} group {problem.group[v]} coef {float(problem.coef[v])!r} "
            f"lower {float(problem.lower[v])!r} upper {float(problem.upper[v])!r}{tail}"
        )
    for k in range(problem.A.shape[0]):
        nz = np.flatnonzero(problem.A[k])
        terms = " ".join(f"{v}:{float(problem.A[k, v])!r}" for v in nz)
        lines.append(f"row {float(problem.b[k])!r} {terms}".rstrip())
    Path(path).write_text("\n".join(lines) + "\n")


def load_problem(path) -> ConvexProblem:
    """Parse the line-oriented dump; errors name the offending line."""
    n = n_groups = None
    vars_, rows = {}, []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tok = line.split()
        try:
            if tok[0] == "vars":
                n = int(tok[1])
            elif tok[0] == "groups":
                n_groups = int(tok[1])
            elif tok[0] == "var":
                kv = dict(zip(tok[2::2], tok[3::2]))
                label = None
                if "label" in tok:
                    at = tok.index("label")
                    label = tuple(int(t) for t in tok[at + 1 : at + 4])
                    if len(label) != 3:
                        raise ValueError("label needs three integers")
                vars_[int(tok[1])] = (int(kv["group"]), float(kv["coef"]),
                                      float(kv["lower"]), float(kv["upper"]), label)
            elif tok[0] == "row":
                terms = []
                for t in tok[2:]:
                    v, c = t.split(":")
                    terms.append((int(v), float(c)))
                rows.append((float(tok[1]), terms))
            else:
                raise ValueError(f"unknown record {tok[0]!r}")
        except (IndexError, KeyError, ValueError) as exc:
            raise ProblemFormatError(f"line {lineno}: {exc}: {raw!r}") from exc
    if n is None:
        raise ProblemFormatError("missing 'vars' record")
    if sorted(vars_) != list(range(n)):
        raise ProblemFormatError(f"expected variables 0..{n - 1}, got {sorted(vars_)}")
    A = np.zeros((len(rows), n))
    for k, (_, terms) in enumerate(rows):
        for v, c in terms:
            if not 0 <= v < n:
                raise ProblemFormatError(f"row {k}: variable {v} out of range")
            A[k, v] = c
    entries = [vars_[v] for v in range(n)]
    labels = [s[4] for s in entries] if all(s[4] for s in entries) else []
    return ConvexProblem(
        coef=[s[1] for s in entries], group=[s[0] for s in entries],
        lower=[s[2] for s in entries], upper=[s[3] for s in entries],
        A=A, b=[r[0] for r in rows], n_groups=n_groups, labels=labels,
    )
