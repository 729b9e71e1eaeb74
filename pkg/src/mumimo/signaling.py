"""Power-command granularity of the scheduling grant.

Three ways of conveying allocated powers to the UE, from one value per
(layer, RBG) down to one value per UE, each followed by a log-domain
quantizer.
"""

import math
from dataclasses import dataclass, replace

import numpy as np

from .allocator import UPLINK, AllocationState, AllocatorConfig, predicted_rates
from .gains import dl_power_weights

MODES = ("high", "medium", "low")


@dataclass(frozen=True)
class DciGranularity:
    mode: str = "high"
    levels: int = 16
    range_db: float = 40.0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.levels < 2:
            raise ValueError("levels must be at least 2")
        if self.range_db <= 0:
            raise ValueError("range_db must be positive")

    @property
    def bits(self) -> int:
        return int(math.ceil(math.log2(self.levels)))


def snap(p, ref, g: DciGranularity):
    """Nearest of ``levels`` log-spaced steps spanning ``range_db`` below ``ref``."""
    p = np.asarray(p, dtype=float)
    ref = np.broadcast_to(np.asarray(ref, dtype=float), p.shape)
    out = np.zeros_like(p)
    pos = p > 0
    step = g.range_db / (g.levels - 1)
    db = 10.0 * np.log10(p[pos] / ref[pos]) + g.range_db
    k = np.clip(np.rint(db / step), 0, g.levels - 1)
    out[pos] = ref[pos] * 10.0 ** ((k * step - g.range_db) / 10.0)
    return out


def _active(state: AllocationState) -> np.ndarray:
    lam = state.lambdas.values
    act = (lam > 0) & state.deltas[:, None, :].astype(bool) & state.served[:, None, None]
    for i, r in enumerate(state.ranks):
        act[i, int(r):] = False
    return act


def _restore_budgets(p, state: AllocationState, cfg: AllocatorConfig):
    if cfg.direction == UPLINK:
        tot = p.sum(axis=(1, 2))
        scale = np.where(tot > cfg.p_u_max, cfg.p_u_max / np.maximum(tot, 1e-300), 1.0)
        return p * scale[:, None, None]
    n_b = next(W.shape[0] for pre in state.lambdas.precoders for W in pre.weights.values())
    a = dl_power_weights(state.lambdas, n_b)
    per_ant = np.einsum("kijg,ijg->ki", a, p)            # (n_b, n_ue)
    b = np.concatenate([[cfg.p_b_max], np.full(n_b, cfg.antenna_budget(n_b))])
    loads = np.vstack([per_ant.sum(axis=0, keepdims=True), per_ant])
    ratio = loads.sum(axis=1) / b
    if ratio.max(initial=0.0) <= 1.0:
        return p
    # every UE loading a violated row is scaled by the worst violation factor
    bad = ratio > 1.0
    involved = (loads[bad] > 0).any(axis=0)
    scale = np.where(involved, 1.0 / ratio.max(), 1.0)
    return p * scale[:, None, None]


def quantize_powers(state: AllocationState, g: DciGranularity,
                    cfg: AllocatorConfig) -> AllocationState:
    """Average to the signaled granularity, snap, then restore the budgets."""
    lam = state.lambdas.values
    act = _active(state)
    upper = np.where(act, cfg.rate_cfg.rho_max / np.where(act, lam, 1.0), np.inf)
    p = np.where(act, state.powers, 0.0)
    out = np.zeros_like(p)
    if g.mode == "high":
        out[act] = snap(p[act], upper[act], g)
    else:
        for i in range(state.n_ue):
            if g.mode == "medium":
                for j in range(lam.shape[1]):
                    m = act[i, j]
                    if m.any():
                        out[i, j, m] = snap(p[i, j, m].mean(), upper[i, j, m].min(), g)
            else:
                m = act[i]
                if m.any():
                    out[i, m] = snap(p[i, m].mean(), upper[i, m].min(), g)
    out = np.minimum(out, np.where(act, upper, 0.0))
    out = _restore_budgets(out, state, cfg)
    rates = predicted_rates(state.lambdas, out, state.deltas * state.served[:, None],
                            state.ranks, cfg.rate_cfg)
    return replace(state, powers=out, rates=rates)


def signaling_overhead_bits(state: AllocationState, g: DciGranularity) -> int:
    served = state.served.astype(bool)
    ranks = np.asarray(state.ranks)[served]
    n_rbg = state.deltas.sum(axis=1)[served]
    if g.mode == "high":
        scalars = int(np.sum(ranks * n_rbg))
    elif g.mode == "medium":
        scalars = int(np.sum(ranks))
    else:
        scalars = int(served.sum())
    return scalars * g.bits
