"""Reference schemes: open-loop power control, strongest-RBG allocation,
eigenvalue-ratio rank selection and equal-power downlink precoding."""

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np


@dataclass(frozen=True)
class OlpcParams:
    p0_dbm: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    @property
    def label(self) -> str:
        return f"olpc({self.p0_dbm:g},{self.alpha:g})"


def olpc_power(params: OlpcParams, n_prb: int, pathloss_db: float, p_u_max_dbm: float) -> float:
    """Total UE transmit power in dBm under fractional pathloss compensation."""
    if n_prb < 1:
        raise ValueError("n_prb must be at least 1")
    return min(p_u_max_dbm,
               params.p0_dbm + 10.0 * math.log10(n_prb) + params.alpha * pathloss_db)


def olpc_rbg_cost_dbm(params: OlpcParams, pathloss_db: float) -> float:
    """Power one PRB needs under the OLPC target (the per-RBG cost)."""
    return params.p0_dbm + params.alpha * pathloss_db


def baseline_rbg_allocation(channel_gains, power_budget: float, n_rbg_min: int = 4,
                            per_rbg_cost: float = 0.0) -> np.ndarray:
    """All RBGs unless power-limited, else the strongest affordable ones.

    ``power_budget`` and ``per_rbg_cost`` share a linear unit; the affordable
    count is ``floor(budget / cost)``, never below ``n_rbg_min``.
    """
    gains = np.asarray(channel_gains, dtype=float)
    if np.any(gains < 0):
        raise ValueError("channel gains must be non-negative")
    n = gains.size
    if per_rbg_cost <= 0 or power_budget >= n * per_rbg_cost:
        return np.ones(n, dtype=int)
    count = int(min(n, max(n_rbg_min, math.floor(power_budget / per_rbg_cost))))
    top = np.argsort(-gains, kind="stable")[:count]
    out = np.zeros(n, dtype=int)
    out[top] = 1
    return out


def baseline_rank(channel_covariance, gamma: float, n_rbg_assigned: int = None,
                  n_rbg_min: int = None) -> int:
    """Largest ``n`` with ``mu_n / mu_1 >= gamma`` over the UE-side covariance."""
    R = np.asarray(channel_covariance, dtype=complex)
    if n_rbg_assigned is not None and n_rbg_min is not None and n_rbg_assigned == n_rbg_min:
        return 1
    mu = np.linalg.eigvalsh(0.5 * (R + R.conj().T))[::-1]
    if mu[0] <= 0:
        return 1
    # small slack so exact ratios such as 0.5 / 1 are not lost to rounding
    return int(np.sum(mu / mu[0] >= gamma * (1 - 1e-12)))


def ue_covariance(H_ue: np.ndarray) -> np.ndarray:
    """Mean of ``H^H H`` over the RBG axis of a ``(n_rbg, n_B, n_U)`` stack."""
    H = np.asarray(H_ue, dtype=complex)
    return np.einsum("gbu,gbv->uv", H.conj(), H) / H.shape[0]


def baseline_dl_precoder_power(precoders: Sequence[np.ndarray], p_ant: float,
                               n_subcarriers_per_rbg: int = 12) -> List[np.ndarray]:
    """Scale unit-column precoders by the common factor that loads the
    busiest antenna to ``n_RBG * p_ant``."""
    Ws = [np.asarray(W, dtype=complex) for W in precoders]
    if not Ws:
        return []
    n_b = Ws[0].shape[0]
    load = np.zeros(n_b)
    for W in Ws:
        load += n_subcarriers_per_rbg * np.sum(np.abs(W) ** 2, axis=1)
    peak = load.max()
    if peak <= 0:
        raise ValueError("all precoder rows are zero")
    P = len(Ws) * p_ant / peak
    return [math.sqrt(P) * W for W in Ws]


def uniform_powers(deltas, ranks, n_u: int, totals) -> np.ndarray:
    """Split each UE total evenly over its allocated RBGs and layers."""
    d = np.asarray(deltas, dtype=float)
    n_ue, n_rbg = d.shape
    totals = np.broadcast_to(np.asarray(totals, dtype=float), (n_ue,))
    p = np.zeros((n_ue, n_u, n_rbg))
    for i in range(n_ue):
        cnt = int(ranks[i]) * d[i].sum()
        if cnt:
            p[i, : int(ranks[i])] = d[i] * totals[i] / cnt
    return p
