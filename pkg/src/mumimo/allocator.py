"""Two-stage joint RBG allocation, rank selection and power allocation.

Stage 1 solves the relaxed power problem with every RBG and every layer
switched on.  The per-layer rates it implies drive a greedy rank/RBG
selection, after which the gains are recomputed for the reduced
configuration and the power problem is solved again with per-variable lower
bounds that guarantee the minimum-MCS rate.  An exhaustive search over all
configurations is provided as a reference for tiny instances.
"""

import itertools
import math
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .gains import LambdaTable, dl_lambdas, dl_power_weights, ul_estimates, ul_lambdas
from .rates import RateConfig, sinr_to_rate, ue_rate
from .solver import (
    ConvexProblem,
    InfeasibleProblemError,
    SolverConfig,
    build_dl_problem,
    build_ul_problem,
    solve,
)
from .transceiver import InfeasibleRankError, RankDeficientError

UPLINK = "uplink"
DOWNLINK = "downlink"


class AllocationError(RuntimeError):
    """The solver failed on a problem that should have been feasible."""


class InstanceTooLargeError(ValueError):
    pass


@dataclass
class ChannelSet:
    """Channel estimates of one cell in one slot.

    ``H[i, g]`` is the ``n_B x n_U`` channel of UE ``i`` on RBG ``g``.
    ``noise`` is what the base station assumes: for the uplink a scalar or a
    per-RBG covariance ``(n_rbg, n_B, n_B)``, for the downlink a scalar or
    the per-UE interference-plus-noise power fed back by each UE.
    """

    H: np.ndarray
    noise: object = 1.0

    def __post_init__(self):
        self.H = np.asarray(self.H, dtype=complex)
        if self.H.ndim != 4:
            raise ValueError("channels must have shape (n_ue, n_rbg, n_B, n_U)")
        if not np.all(np.isfinite(self.H)):
            raise ValueError("non-finite channel entries")

    @property
    def n_ue(self) -> int:
        return self.H.shape[0]

    @property
    def n_rbg(self) -> int:
        return self.H.shape[1]

    @property
    def n_b(self) -> int:
        return self.H.shape[2]

    @property
    def n_u(self) -> int:
        return self.H.shape[3]


@dataclass(frozen=True)
class AllocatorConfig:
    direction: str = UPLINK
    n_rbg_min: int = 4
    rate_cfg: RateConfig = field(default_factory=RateConfig)
    solver_cfg: SolverConfig = field(default_factory=SolverConfig)
    p_u_max: float = 1.0        # linear, per UE
    p_b_max: float = 1.0        # linear, per cell
    p_ant: Optional[float] = None  # defaults to p_b_max / n_B
    uniform_power: bool = False

    def __post_init__(self):
        if self.direction not in (UPLINK, DOWNLINK):
            raise ValueError(f"direction must be uplink or downlink, got {self.direction!r}")
        if self.n_rbg_min < 1:
            raise ValueError("n_rbg_min must be at least 1")
        if self.p_u_max <= 0 or self.p_b_max <= 0:
            raise ValueError("power budgets must be positive")
        if self.p_ant is not None and self.p_ant <= 0:
            raise ValueError("p_ant must be positive")

    def antenna_budget(self, n_b: int) -> float:
        return self.p_b_max / n_b if self.p_ant is None else self.p_ant


@dataclass
class AllocationState:
    deltas: np.ndarray   # (n_ue, n_rbg) in {0, 1}
    ranks: np.ndarray    # (n_ue,)
    powers: np.ndarray   # (n_ue, n_U, n_rbg), linear
    served: np.ndarray = None
    status: str = "ok"   # ok | partial
    lambdas: Optional[LambdaTable] = field(default=None, repr=False)
    rates: np.ndarray = None

    def __post_init__(self):
        if self.served is None:
            self.served = self.deltas.any(axis=1)

    @property
    def n_ue(self) -> int:
        return self.deltas.shape[0]

    def utility(self) -> float:
        """Sum of log rates over all UEs; ``-inf`` if any UE gets nothing."""
        r = self.rates
        if r is None or np.any(r <= 0):
            return -math.inf
        return float(np.sum(np.log(r)))

    def ue_power(self) -> np.ndarray:
        return self.powers.sum(axis=(1, 2))

    def n_rbgs(self) -> np.ndarray:
        return self.deltas.sum(axis=1)


# --- gains and problem plumbing --------------------------------------------

def compute_lambdas(channels: ChannelSet, deltas, ranks, cfg: AllocatorConfig) -> LambdaTable:
    if cfg.direction == UPLINK:
        est, _ = ul_estimates(channels.H, channels.noise)
        return ul_lambdas(est, deltas, ranks)
    return dl_lambdas(channels.H, deltas, ranks, channels.noise)


def _problems(table: LambdaTable, deltas, ranks, cfg: AllocatorConfig, n_b: int,
              lower: bool) -> List[ConvexProblem]:
    rc = cfg.rate_cfg
    rho_min = rc.rho_min if lower else None
    if cfg.direction == UPLINK:
        return build_ul_problem(table, deltas, ranks, cfg.p_u_max, rc.rho_max,
                                rho_min, rc.scale_c)
    a = dl_power_weights(table, n_b)
    return [build_dl_problem(table, deltas, ranks, a, cfg.p_b_max,
                             cfg.antenna_budget(n_b), rc.rho_max, rho_min, rc.scale_c)]


def _solve_into(problems: Sequence[ConvexProblem], shape, solver_cfg: SolverConfig) -> np.ndarray:
    p = np.zeros(shape)
    for prob in problems:
        if prob.is_empty:
            continue
        sol = solve(prob, solver_cfg)
        if not sol.ok:
            raise AllocationError(f"solver returned status {sol.status!r}")
        for (i, j, g), x in zip(prob.labels, sol.x):
            p[i, j, g] = x
    return p


def predicted_rates(table: LambdaTable, powers, deltas, ranks, rate_cfg: RateConfig) -> np.ndarray:
    return np.array([
        ue_rate(table.values[i], powers[i], deltas[i], rate_cfg, i, int(ranks[i])).rate
        for i in range(table.n_ue)
    ])


# --- the algorithm ----------------------------------------------------------

def stage1(channels: ChannelSet, cfg: AllocatorConfig) -> Tuple[LambdaTable, np.ndarray]:
    """Gains and relaxed optimal powers with every RBG and layer active."""
    n_ue, n_rbg = channels.n_ue, channels.n_rbg
    deltas = np.ones((n_ue, n_rbg), dtype=int)
    ranks = np.full(n_ue, channels.n_u)
    if n_ue * channels.n_u > channels.n_b:
        raise InfeasibleRankError(
            f"full-rank stage needs {n_ue * channels.n_u} layers but only "
            f"{channels.n_b} antennas exist"
        )
    table = compute_lambdas(channels, deltas, ranks, cfg)
    probs = _problems(table, deltas, ranks, cfg, channels.n_b, lower=False)
    return table, _solve_into(probs, table.values.shape, cfg.solver_cfg)


def _select_one(r: np.ndarray, r_min: float, n_rbg_min: int) -> Tuple[np.ndarray, int]:
    n_u, n_rbg = r.shape
    keep = r >= r_min
    best_rank, best_delta = 1, keep[0].copy()
    r_current = 0.0
    for n_l in range(1, n_u + 1):
        delta = keep[:n_l].all(axis=0)
        r_sum = float(r[:n_l, delta].sum())
        cnt = n_l * int(delta.sum())
        r_mean = r_sum / cnt if cnt else 0.0
        if not (r_sum > r_current and r_mean > r_min):
            break
        best_rank, best_delta = n_l, delta
        r_current = r_sum
    n_min = min(n_rbg_min, n_rbg)
    if best_delta.sum() < n_min:
        score = r[:best_rank].sum(axis=0)
        # stable sort on the negated score: ties go to the lowest index
        top = np.argsort(-score, kind="stable")[:n_min]
        best_delta = np.zeros(n_rbg, dtype=bool)
        best_delta[top] = True
    return best_delta.astype(int), best_rank


def select_ranks_and_rbgs(lambdas: LambdaTable, p1: np.ndarray,
                          cfg: AllocatorConfig) -> Tuple[np.ndarray, np.ndarray]:
    """Per-UE rank growth on the stage-1 rates, then the minimum-RBG backfill."""
    lam = lambdas.values
    r = sinr_to_rate(lam * p1, cfg.rate_cfg)
    n_ue, _, n_rbg = lam.shape
    deltas = np.zeros((n_ue, n_rbg), dtype=int)
    ranks = np.ones(n_ue, dtype=int)
    for i in range(n_ue):
        deltas[i], ranks[i] = _select_one(r[i], cfg.rate_cfg.r_min, cfg.n_rbg_min)
    return deltas, ranks


def _lower_bound_loads(table, deltas, ranks, cfg, n_b):
    """Per-UE lower-bound load on every budget row, plus the row bounds."""
    rho_min = cfg.rate_cfg.rho_min
    lam = table.values
    n_ue = lam.shape[0]
    active = np.zeros_like(lam, dtype=bool)
    for i in range(n_ue):
        active[i, : ranks[i]] = deltas[i][None, :].astype(bool)
    active &= lam > 0
    lo = np.where(active, rho_min / np.where(active, lam, 1.0), 0.0)
    if cfg.direction == UPLINK:
        # one private row per UE
        return lo.sum(axis=(1, 2))[None, :], np.full(1, cfg.p_u_max), True
    a = dl_power_weights(table, n_b)                      # (k, i, j, g)
    per_ant = np.einsum("kijg,ijg->ki", a, lo)            # (n_b, n_ue)
    loads = np.vstack([per_ant.sum(axis=0, keepdims=True), per_ant])
    b = np.concatenate([[cfg.p_b_max], np.full(n_b, cfg.antenna_budget(n_b))])
    return loads, b, False


def _greedy_drop(table, deltas, ranks, cfg, n_b, served) -> np.ndarray:
    """UEs to drop so that the rate-floor lower bounds fit every budget row."""
    loads, b, private = _lower_bound_loads(table, deltas, ranks, cfg, n_b)
    served = served.copy()
    if private:
        return np.flatnonzero(served & (loads[0] >= b[0]))
    dropped = []
    while True:
        tot = loads[:, served].sum(axis=1)
        ratio = tot / b
        worst = int(np.argmax(ratio))
        if ratio[worst] < 1.0:
            return np.array(dropped, dtype=int)
        # drop the UE loading the most violated row the most
        cand = np.where(served, loads[worst], -np.inf)
        i = int(np.argmax(cand))
        served[i] = False
        dropped.append(i)


def stage2(channels: ChannelSet, deltas, ranks, cfg: AllocatorConfig) -> AllocationState:
    """Recompute gains for the selected configuration and solve with rate floors.

    UEs whose floors cannot be met are dropped and the gains recomputed once.
    If the second pass still leaves a violated budget, the offending UEs get
    zero power under the second-pass precoder and the state is ``partial``.
    """
    deltas = np.array(deltas, dtype=int)
    ranks = np.array(ranks, dtype=int)
    n_b = channels.n_b
    served = deltas.any(axis=1)
    status = "ok"

    table = compute_lambdas(channels, deltas, ranks, cfg)
    drop = _greedy_drop(table, deltas, ranks, cfg, n_b, served)
    if drop.size:
        served[drop] = False
        deltas[drop] = 0
        table = compute_lambdas(channels, deltas, ranks, cfg)
        drop = _greedy_drop(table, deltas, ranks, cfg, n_b, served)
        if drop.size:
            served[drop] = False
            status = "partial"

    d_eff = deltas * served[:, None]
    try:
        probs = _problems(table, d_eff, ranks, cfg, n_b, lower=True)
    except InfeasibleProblemError as exc:  # pragma: no cover - guarded by the drop above
        raise AllocationError(str(exc)) from exc
    powers = _solve_into(probs, table.values.shape, cfg.solver_cfg)
    rates = predicted_rates(table, powers, d_eff, ranks, cfg.rate_cfg)
    if status == "partial":
        deltas = d_eff
    return AllocationState(deltas, ranks, powers, served, status, table, rates)


def _uniform(state: AllocationState, cfg: AllocatorConfig) -> AllocationState:
    """Replace each UE's powers by their mean over its active variables.

    A UE whose rate floor would break under the mean keeps its optimized
    powers.
    """
    lam = state.lambdas.values
    powers = state.powers.copy()
    rho_max = cfg.rate_cfg.rho_max
    for i in np.flatnonzero(state.served):
        act = lam[i] > 0
        act[state.ranks[i]:] = False
        act &= state.deltas[i][None, :].astype(bool)
        if not act.any():
            continue
        p = np.zeros_like(powers[i])
        p[act] = np.minimum(powers[i][act].mean(), rho_max / lam[i][act])
        r = ue_rate(lam[i], p, state.deltas[i], cfg.rate_cfg, i, int(state.ranks[i])).rate
        if r > 0:
            powers[i] = p
    rates = predicted_rates(state.lambdas, powers, state.deltas, state.ranks, cfg.rate_cfg)
    return replace(state, powers=powers, rates=rates)


def allocate(channels: ChannelSet, cfg: AllocatorConfig) -> AllocationState:
    """Stage 1, rank/RBG selection and stage 2 in sequence."""
    table, p1 = stage1(channels, cfg)
    deltas, ranks = select_ranks_and_rbgs(table, p1, cfg)
    state = stage2(channels, deltas, ranks, cfg)
    if cfg.uniform_power and cfg.direction == UPLINK:
        state = _uniform(state, cfg)
    return state


# --- exhaustive reference ----------------------------------------------------

ORACLE_LIMITS = (3, 3, 2)  # UEs, RBGs, rank


def _oracle_solver_cfg(base: SolverConfig) -> SolverConfig:
    return replace(base, max_iterations=200, tolerance=1e-8)


def _evaluate_config(channels, deltas, ranks, cfg, scfg):
    """Best floor-respecting utility for one fixed (deltas, ranks)."""
    try:
        table = compute_lambdas(channels, deltas, ranks, cfg)
    except (RankDeficientError, InfeasibleRankError):
        return -math.inf, None
    best = (-math.inf, None)
    for lower in (False, True):
        try:
            probs = _problems(table, deltas, ranks, cfg, channels.n_b, lower)
            powers = _solve_into(probs, table.values.shape, scfg)
        except (InfeasibleProblemError, AllocationError):
            continue
        rates = predicted_rates(table, powers, deltas, ranks, cfg.rate_cfg)
        if np.all(rates > 0):
            u = float(np.sum(np.log(rates)))
            if u > best[0]:
                best = (u, AllocationState(np.array(deltas), np.array(ranks), powers,
                                           np.ones(len(ranks), bool), "ok", table, rates))
        if best[1] is not None:
            break
    return best


def exhaustive_oracle(channels: ChannelSet, cfg: AllocatorConfig,
                      limits=ORACLE_LIMITS) -> Optional[AllocationState]:
    """Utility-maximizing configuration over every admissible (deltas, ranks).

    Every UE must hold at least ``n_rbg_min`` RBGs (clipped to ``n_rbg``) and
    meet its rate floor.  For each configuration the relaxed problem is
    solved first; if its optimum breaks a floor, the problem with
    per-variable lower bounds is tried instead.  Returns ``None`` when no
    configuration serves every UE.
    """
    max_ue, max_rbg, max_rank = limits
    if channels.n_ue > max_ue or channels.n_rbg > max_rbg:
        raise InstanceTooLargeError(
            f"oracle limited to {max_ue} UEs x {max_rbg} RBGs, got "
            f"{channels.n_ue} x {channels.n_rbg}"
        )
    n_min = min(cfg.n_rbg_min, channels.n_rbg)
    rows = [np.array(bits) for bits in itertools.product((0, 1), repeat=channels.n_rbg)
            if sum(bits) >= n_min]
    rank_opts = range(1, min(channels.n_u, max_rank) + 1)
    per_ue = [(row, r) for row in rows for r in rank_opts]
    scfg = _oracle_solver_cfg(cfg.solver_cfg)
    best_u, best = -math.inf, None
    for combo in itertools.product(per_ue, repeat=channels.n_ue):
        deltas = np.stack([c[0] for c in combo])
        ranks = np.array([c[1] for c in combo])
        # layers sharing an RBG cannot exceed the antenna count
        if np.any((deltas * ranks[:, None]).sum(axis=0) > channels.n_b):
            continue
        u, state = _evaluate_config(channels, deltas, ranks, cfg, scfg)
        if u > best_u:
            best_u, best = u, state
    return best
