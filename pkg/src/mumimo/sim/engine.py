"""Slot-level multi-cell simulation.

Every scheme runs network-wide on the same channel realizations.  Schemes
plan with thermal noise only (uplink) or with the interference-plus-noise
power each UE reported in the previous slot (downlink).  Realized SINRs use
the true interference from the transmissions of the same slot, and each
layer's rate is capped at the rate the scheme planned for, which stands in
for MCS selection on the assumed covariance.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..allocator import (
    DOWNLINK,
    UPLINK,
    AllocationError,
    AllocatorConfig,
    ChannelSet,
    allocate,
)
from ..baselines import (
    OlpcParams,
    baseline_dl_precoder_power,
    baseline_rank,
    baseline_rbg_allocation,
    olpc_power,
    olpc_rbg_cost_dbm,
    ue_covariance,
    uniform_powers,
)
from ..gains import dl_lambdas, ul_estimates, ul_lambdas
from ..rates import RateConfig, rate_floor_applied
from ..solver import NumericalFailure, SolverConfig
from ..transceiver import InfeasibleRankError, RankDeficientError, zf_inverse_gram_diag
from .channels import ChannelStream, Geometry, build_geometry
from .config import ConfigError, SimConfig

log = logging.getLogger(__name__)

PROPOSED = "proposed"
FULL_POWER = "full-power"
N_SUBCARRIERS_PER_RBG = 12

_ALLOC_ERRORS = (AllocationError, RankDeficientError, InfeasibleRankError,
                 NumericalFailure, np.linalg.LinAlgError)


class SimulationError(RuntimeError):
    """A slot could not be simulated; the message names drop, slot and scheme."""


# --- scheme catalogue ----------------------------------------------------------

def olpc_scheme(p0, alpha, gamma) -> str:
    return f"olpc{p0:g}a{alpha:g}-g{gamma:g}"


def bd_scheme(gamma) -> str:
    return f"bd-equal-g{gamma:g}"


def available_schemes(cfg: SimConfig) -> List[str]:
    if cfg.link == UPLINK:
        names = [PROPOSED, FULL_POWER]
        names += [olpc_scheme(p0, a, g) for p0 in cfg.olpc.p0_dbm
                  for a in cfg.olpc.alpha for g in cfg.gamma]
        return names
    return [PROPOSED] + [bd_scheme(g) for g in cfg.gamma]


def resolve_schemes(cfg: SimConfig) -> List[str]:
    avail = available_schemes(cfg)
    if tuple(cfg.schemes) == ("all",):
        return avail
    unknown = [s for s in cfg.schemes if s not in avail]
    if unknown:
        raise ConfigError("schemes", f"unknown scheme(s) {unknown}; available: {avail}")
    return list(cfg.schemes)


def allocator_config(cfg: SimConfig, r_max: float = None) -> AllocatorConfig:
    return AllocatorConfig(
        direction=cfg.link,
        n_rbg_min=cfg.rbg_min,
        rate_cfg=RateConfig(cfg.r_min, cfg.r_max if r_max is None else r_max, cfg.scale_c),
        solver_cfg=SolverConfig(max_iterations=cfg.solver_iterations),
        p_u_max=cfg.p_u_max,
        p_b_max=cfg.p_b_max,
        p_ant=cfg.p_ant,
        uniform_power=cfg.uniform_power,
    )


# --- per-cell decisions -----------------------------------------------------

@dataclass
class CellDecision:
    """What one cell transmits (or schedules) on every RBG."""

    ues: np.ndarray          # global UE indices, local order
    deltas: np.ndarray       # (n, n_rbg)
    ranks: np.ndarray        # (n,)
    powers: np.ndarray       # (n, n_U, n_rbg)
    assumed: np.ndarray      # (n, n_U, n_rbg) planned SINR per layer
    served: np.ndarray       # (n,)
    # uplink: UE precoders (n, n_rbg, n_U, n_U); downlink: per-RBG {local ue: W}
    precoders: object = None
    error: str = ""

    def layer_power(self) -> np.ndarray:
        return self.powers.sum(axis=(1, 2))


def _empty_decision(ues, cfg: SimConfig, error: str) -> CellDecision:
    n = ues.size
    shape = (n, cfg.n_u, cfg.n_rbg)
    return CellDecision(ues, np.zeros((n, cfg.n_rbg), int), np.zeros(n, int),
                        np.zeros(shape), np.zeros(shape), np.zeros(n, bool), None, error)


def _ul_baseline(cfg, scheme, H, pl_db):
    n = H.shape[0]
    if scheme == FULL_POWER:
        deltas = np.ones((n, cfg.n_rbg), dtype=int)
        ranks = np.full(n, cfg.n_u)
        totals = np.full(n, cfg.p_u_max)
    else:
        p0, alpha, gamma = _parse_olpc(cfg, scheme)
        params = OlpcParams(p0, alpha)
        deltas = np.zeros((n, cfg.n_rbg), dtype=int)
        ranks = np.ones(n, dtype=int)
        totals = np.zeros(n)
        budget_mw = 10 ** (cfg.p_u_max_dbm / 10)
        for i in range(n):
            cost_mw = 10 ** (olpc_rbg_cost_dbm(params, pl_db[i]) / 10)
            gains = np.sum(np.abs(H[i]) ** 2, axis=(1, 2))
            deltas[i] = baseline_rbg_allocation(gains, budget_mw, cfg.rbg_min, cost_mw)
            n_prb = int(deltas[i].sum())
            ranks[i] = baseline_rank(ue_covariance(H[i]), gamma, n_prb, cfg.rbg_min)
            p_dbm = olpc_power(params, n_prb, pl_db[i], cfg.p_u_max_dbm)
            totals[i] = 10 ** ((p_dbm - cfg.noise_dbm_per_prb) / 10)
    powers = uniform_powers(deltas, ranks, cfg.n_u, totals)
    return deltas, ranks, powers


def _parse_olpc(cfg, scheme):
    for p0 in cfg.olpc.p0_dbm:
        for a in cfg.olpc.alpha:
            for g in cfg.gamma:
                if olpc_scheme(p0, a, g) == scheme:
                    return p0, a, g
    raise ConfigError("schemes", f"unknown scheme {scheme!r}")


def decide(cfg: SimConfig, scheme: str, ues: np.ndarray, H: np.ndarray,
           pl_db: np.ndarray, sigma2: np.ndarray, r_max: float = None) -> CellDecision:
    """Run one scheme for one cell.  ``H`` is the ``(n, n_rbg, n_B, n_U)``
    serving-link stack."""
    try:
        if cfg.link == UPLINK:
            est, W = ul_estimates(H, 1.0)
            if scheme == PROPOSED:
                st = allocate(ChannelSet(H, 1.0), allocator_config(cfg, r_max))
                deltas, ranks, powers, served = st.deltas, st.ranks, st.powers, st.served
                lam = st.lambdas.values
            else:
                deltas, ranks, powers = _ul_baseline(cfg, scheme, H, pl_db)
                lam = ul_lambdas(est, deltas, ranks).values
                served = np.ones(len(ues), bool)
            return CellDecision(ues, deltas, ranks, powers, lam * powers, served, W)

        if scheme == PROPOSED:
            st = allocate(ChannelSet(H, sigma2), allocator_config(cfg, r_max))
            deltas, ranks, powers, served = st.deltas, st.ranks, st.powers, st.served
            table = st.lambdas
        else:
            gamma = float(scheme.rsplit("-g", 1)[1])
            n = len(ues)
            deltas = np.ones((n, cfg.n_rbg), dtype=int)
            ranks = np.array([baseline_rank(ue_covariance(H[i]), gamma, cfg.n_rbg, cfg.rbg_min)
                              for i in range(n)])
            table = dl_lambdas(H, deltas, ranks, sigma2)
            stacks = [pre.stacked() for pre in table.precoders]
            # the busiest antenna radiates exactly p_ant over the band in per-RBG units
            scaled = baseline_dl_precoder_power(
                stacks, cfg.p_ant * N_SUBCARRIERS_PER_RBG / cfg.n_rbg, N_SUBCARRIERS_PER_RBG)
            P = float(np.sum(np.abs(scaled[0]) ** 2) / np.sum(np.abs(stacks[0]) ** 2))
            powers = np.zeros((n, cfg.n_u, cfg.n_rbg))
            for i in range(n):
                powers[i, : ranks[i]] = P
            served = np.ones(n, bool)
        pre = [pre.weights for pre in table.precoders]
        return CellDecision(ues, deltas, ranks, powers, table.values * powers, served, pre)
    except _ALLOC_ERRORS as exc:
        log.warning("scheme %s failed on UEs %s: %s", scheme, ues.tolist(), exc)
        return _empty_decision(ues, cfg, f"{type(exc).__name__}: {exc}")


# --- interference and realized SINR -----------------------------------------------

def ici_covariance(noise: float, cross: np.ndarray, tx_cov: np.ndarray) -> np.ndarray:
    """``noise * I + sum_k H_k S_k H_k^H`` for every RBG.

    ``cross`` is ``(K, n_rbg, n_rx, n_tx)`` and ``tx_cov`` ``(K, n_rbg, n_tx,
    n_tx)``.  With ``K = 0`` the result is exactly ``noise * I``.
    """
    cross = np.asarray(cross, dtype=complex)
    n_rbg, n_rx = cross.shape[1], cross.shape[2]
    R = np.broadcast_to(noise * np.eye(n_rx, dtype=complex), (n_rbg, n_rx, n_rx)).copy()
    if cross.shape[0]:
        R += np.einsum("kgat,kgts,kgbs->gab", cross, tx_cov, cross.conj())
    return R


def _whitened_sinr(Hbar: np.ndarray, R: Optional[np.ndarray]) -> np.ndarray:
    if R is None:
        return 1.0 / zf_inverse_gram_diag(Hbar)
    L = np.linalg.cholesky(R)
    return 1.0 / zf_inverse_gram_diag(np.linalg.solve(L, Hbar))


def _ul_tx_cov(dec: CellDecision, n_rbg, n_u) -> np.ndarray:
    """UE transmit covariances ``W diag(p) W^H`` per RBG, ``(n, n_rbg, n_U, n_U)``."""
    n = dec.ues.size
    T = np.zeros((n, n_rbg, n_u, n_u), dtype=complex)
    if dec.precoders is None:
        return T
    for i in range(n):
        W = dec.precoders[i]                          # (n_rbg, n_U, n_U)
        p = dec.powers[i].T                           # (n_rbg, n_U)
        T[i] = np.einsum("gaj,gj,gbj->gab", W, p, W.conj())
    return T


def _dl_tx_cov(dec: CellDecision, n_rbg, n_b) -> np.ndarray:
    S = np.zeros((n_rbg, n_b, n_b), dtype=complex)
    if dec.precoders is None:
        return S
    for g, blocks in enumerate(dec.precoders):
        for i, W in blocks.items():
            p = dec.powers[i, : W.shape[1], g]
            S[g] += (W * p) @ W.conj().T
    return S


@dataclass
class Realized:
    sinr: np.ndarray      # (N, n_U, n_rbg)
    sigma2: np.ndarray    # (N,) measured interference-plus-noise (downlink)


def realize(cfg: SimConfig, H_all: np.ndarray, geo: Geometry,
            decisions: List[CellDecision], ici: bool) -> Realized:
    """Realized per-layer SINRs given every cell's decision in this slot."""
    N = geo.serving.size
    sinr = np.zeros((N, cfg.n_u, cfg.n_rbg))
    sigma2 = np.ones(N)
    if cfg.link == UPLINK:
        T = np.zeros((N, cfg.n_rbg, cfg.n_u, cfg.n_u), dtype=complex)
        for dec in decisions:
            T[dec.ues] = _ul_tx_cov(dec, cfg.n_rbg, cfg.n_u)
        for c, dec in enumerate(decisions):
            R = None
            if ici:
                others = np.flatnonzero(geo.serving != c)
                R = ici_covariance(1.0, H_all[others, c], T[others])
            for g in range(cfg.n_rbg):
                cols, where = [], []
                for i, u in enumerate(dec.ues):
                    if not (dec.served[i] and dec.deltas[i, g]):
                        continue
                    for j in range(int(dec.ranks[i])):
                        p = dec.powers[i, j, g]
                        if p > 0:
                            cols.append(H_all[u, c, g] @ dec.precoders[i][g][:, j] * math.sqrt(p))
                            where.append((u, j))
                if not cols:
                    continue
                rho = _whitened_sinr(np.stack(cols, axis=1), None if R is None else R[g])
                for (u, j), r in zip(where, rho):
                    sinr[u, j, g] = r
        return Realized(sinr, sigma2)

    S = np.stack([_dl_tx_cov(dec, cfg.n_rbg, cfg.n_b) for dec in decisions])  # (C, G, B, B)
    for c, dec in enumerate(decisions):
        for i, u in enumerate(dec.ues):
            Q = None
            if ici:
                others = [k for k in range(cfg.n_cells) if k != c]
                cross = np.transpose(H_all[u, others], (0, 1, 3, 2))        # (K, G, n_U, n_B)
                Q = ici_covariance(1.0, cross, S[others])
                sigma2[u] = float(np.mean(np.real(np.trace(Q, axis1=1, axis2=2)))) / cfg.n_u
            if not dec.served[i] or dec.precoders is None:
                continue
            for g in range(cfg.n_rbg):
                W = dec.precoders[g].get(i)
                if W is None:
                    continue
                p = dec.powers[i, : W.shape[1], g]
                if not np.any(p > 0):
                    continue
                Heff = H_all[u, c, g].T @ W * np.sqrt(p)
                live = p > 0
                rho = _whitened_sinr(Heff[:, live], None if Q is None else Q[g])
                sinr[u, np.flatnonzero(live), g] = rho
    return Realized(sinr, sigma2)


# --- per-slot metrics ---------------------------------------------------------------

@dataclass
class SlotMetrics:
    drop: int
    slot: int
    scheme: str
    cell: np.ndarray          # (N,)
    rates: np.ndarray         # (N,) realized, bits per symbol summed over RBGs
    predicted: np.ndarray     # (N,) what the scheme planned
    power: np.ndarray         # (N,) linear, noise-normalized
    n_prb: np.ndarray         # (N,)
    ranks: np.ndarray         # (N,), 0 when not served
    cell_layers: np.ndarray   # (n_cells,)
    cell_power: np.ndarray    # (n_cells,)
    errors: List[str] = field(default_factory=list)

    @property
    def gm(self) -> float:
        r = self.rates
        return 0.0 if np.any(r <= 0) else float(np.exp(np.mean(np.log(r))))

    @property
    def am(self) -> float:
        return float(np.mean(self.rates))


def _layer_rates(rho, cfg: SimConfig):
    return np.log2(1.0 + cfg.scale_c * np.maximum(rho, 0.0))


def delivered_rates(real_sinr, planned_sinr, cfg: SimConfig) -> np.ndarray:
    """Per-layer delivered rate given the realized and the planned SINR.

    The MCS follows the planned SINR through the rate map, capped at
    ``mcs_max_se``.  Under ``outage`` a block is decoded while the realized
    channel's capacity ``log2(1 + rho)`` still reaches the MCS rate (the map's
    factor ``scale_c`` is the link margin) and lost otherwise.  Under
    ``capped`` it delivers whatever the realized SINR supports up to the MCS
    rate.
    """
    planned = np.minimum(_layer_rates(planned_sinr, cfg), cfg.mcs_max_se)
    if cfg.link_model == "capped":
        return np.minimum(_layer_rates(real_sinr, cfg), planned)
    ok = np.log2(1.0 + np.maximum(real_sinr, 0.0)) >= planned
    return np.where(ok, planned, 0.0)


def slot_metrics(cfg, drop, slot, scheme, geo, decisions, real: Realized) -> SlotMetrics:
    N = geo.serving.size
    rates = np.zeros(N)
    predicted = np.zeros(N)
    power = np.zeros(N)
    n_prb = np.zeros(N, dtype=int)
    ranks = np.zeros(N, dtype=int)
    cell_layers = np.zeros(cfg.n_cells, dtype=int)
    cell_power = np.zeros(cfg.n_cells)
    errors = []
    for c, dec in enumerate(decisions):
        if dec.error:
            errors.append(f"cell {c}: {dec.error}")
        for i, u in enumerate(dec.ues):
            if not dec.served[i]:
                continue
            n_l = int(dec.ranks[i])
            d = dec.deltas[i].astype(bool)
            assumed = dec.assumed[i, :n_l][:, d]
            planned = np.minimum(_layer_rates(assumed, cfg), cfg.mcs_max_se)
            real_r = delivered_rates(real.sinr[u, :n_l][:, d], assumed, cfg)
            rates[u] = rate_floor_applied(float(real_r.sum()), n_l, int(d.sum()), cfg.r_min)
            predicted[u] = rate_floor_applied(float(planned.sum()), n_l, int(d.sum()), cfg.r_min)
            power[u] = dec.powers[i].sum()
            n_prb[u] = int(d.sum())
            ranks[u] = n_l
        cell_layers[c] = int(np.sum(dec.ranks * dec.served))
        cell_power[c] = float(dec.powers.sum())
    return SlotMetrics(drop, slot, scheme, geo.serving.copy(), rates, predicted, power,
                       n_prb, ranks, cell_layers, cell_power, errors)


# --- drop driver -----------------------------------------------------------------

def run_drop(cfg: SimConfig, drop: int, schemes: List[str] = None,
             r_max: float = None) -> List[SlotMetrics]:
    """Simulate every slot of one drop for each scheme, slot-major order."""
    schemes = resolve_schemes(cfg) if schemes is None else schemes
    geo = build_geometry(cfg, drop)
    chan = ChannelStream(cfg, geo, drop)
    ici = cfg.scenario == "ici"
    pl = geo.pathloss_db
    cells = [geo.ues_of(c) for c in range(cfg.n_cells)]
    sigma2: Dict[str, np.ndarray] = {s: np.ones(geo.serving.size) for s in schemes}
    memo: Dict[str, tuple] = {}
    out: List[SlotMetrics] = []
    H_all = None
    for slot in range(cfg.slots_per_drop):
        epoch, offset = divmod(slot, cfg.csi_period_slots)
        if offset == 0:
            H_all = chan.epoch(epoch)
            memo.clear()
        for s in schemes:
            try:
                # decisions depend on the slot only through the downlink feedback
                fresh = s not in memo or (cfg.link == DOWNLINK and ici)
                if fresh:
                    decs = [
                        decide(cfg, s, ues, H_all[ues, c], pl[ues], sigma2[s][ues], r_max)
                        for c, ues in enumerate(cells)
                    ]
                    real = realize(cfg, H_all, geo, decs, ici)
                    # channels and decisions are frozen until the next CSI epoch
                    memo[s] = (decs, real)
                decs, real = memo[s]
                m = slot_metrics(cfg, drop, slot, s, geo, decs, real)
            except (ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
                raise SimulationError(f"drop {drop}, slot {slot}, scheme {s}: {exc}") from exc
            for e in m.errors if fresh else ():
                log.warning("drop %d, slot %d, scheme %s: %s", drop, slot, s, e)
            out.append(m)
            sigma2[s] = real.sigma2
    return out
