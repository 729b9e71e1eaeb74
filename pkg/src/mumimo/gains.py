"""Effective per-layer gains (the lambda table) for both link directions.

``lambda[i, j, g]`` is the SINR per unit transmit power of layer ``j`` of UE
``i`` on RBG ``g`` given who shares the RBG and with how many layers.  Entries
for unallocated RBGs and unused layers are exactly zero.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .transceiver import (
    InfeasibleRankError,
    RankDeficientError,
    ZfPrecoder,
    build_zf_precoder,
    inv_sqrtm_hermitian,
    zf_inverse_gram_diag,
)

MAX_GRAM_COND = 1e12


@dataclass
class LambdaTable:
    values: np.ndarray  # (n_ue, n_u_max, n_rbg)
    # downlink only: one precoder per RBG over its co-scheduled set
    precoders: Optional[List[ZfPrecoder]] = field(default=None, repr=False)

    @property
    def n_ue(self) -> int:
        return self.values.shape[0]

    @property
    def n_rbg(self) -> int:
        return self.values.shape[2]

    def ue(self, i: int) -> np.ndarray:
        return self.values[i]

    def check_zeroing(self, deltas: np.ndarray, ranks) -> bool:
        d = np.asarray(deltas).astype(bool)
        for i, r in enumerate(ranks):
            if np.any(self.values[i, :, ~d[i]] != 0) or np.any(self.values[i, int(r):] != 0):
                return False
        return bool(np.all(np.isfinite(self.values)) and np.all(self.values >= 0))


def ul_estimates(channels: np.ndarray, noise) -> tuple:
    """Whitened, UE-precoded channel estimates.

    Parameters
    ----------
    channels : ndarray, shape (n_ue, n_rbg, n_B, n_U)
    noise : float or ndarray of shape (n_rbg, n_B, n_B)
        Thermal variance, or the per-RBG interference-plus-noise covariance
        assumed by the base station.

    Returns
    -------
    (estimates, precoders)
        ``estimates[i, g] = R_g^{-1/2} H_{i,g} W_{i,g}`` where ``W_{i,g}`` holds
        the right-singular vectors of the whitened channel, strongest first.
    """
    H = np.asarray(channels, dtype=complex)
    if np.ndim(noise) == 0:
        Hw = H / np.sqrt(noise)
    else:
        Rm = np.stack([inv_sqrtm_hermitian(R) for R in noise])
        Hw = np.einsum("gab,igbu->igau", Rm, H)
    _, _, Vh = np.linalg.svd(Hw, full_matrices=False)
    W = Vh.conj().swapaxes(-1, -2)
    return Hw @ W, W


def _active_columns(n_u: np.ndarray, d_col: np.ndarray, ranks: np.ndarray):
    cols = []
    for i in np.flatnonzero(d_col):
        cols.extend((i, j) for j in range(int(ranks[i])))
    return cols


def ul_lambdas(estimates: np.ndarray, deltas: np.ndarray, ranks) -> LambdaTable:
    """Uplink gains ``1 / [(H_g^H H_g)^{-1}]_ll`` over the active columns.

    ``estimates`` has shape ``(n_ue, n_rbg, n_B, n_U)``; only the first
    ``ranks[i]`` columns of UE ``i`` enter the Gram matrix of RBG ``g`` and
    only UEs with ``deltas[i, g] = 1``.
    """
    est = np.asarray(estimates, dtype=complex)
    n_ue, n_rbg, n_b, n_u = est.shape
    d = np.asarray(deltas).astype(bool)
    ranks = np.asarray(ranks, dtype=int)
    if np.any(ranks > n_u) or np.any(ranks < 0):
        raise InfeasibleRankError(f"ranks {ranks.tolist()} outside [0, {n_u}]")
    values = np.zeros((n_ue, n_u, n_rbg))

    # RBGs sharing an active pattern are processed as one batched SVD
    patterns: Dict[bytes, List[int]] = {}
    for g in range(n_rbg):
        patterns.setdefault(d[:, g].tobytes(), []).append(g)
    for _, rbgs in patterns.items():
        cols = _active_columns(n_u, d[:, rbgs[0]], ranks)
        if not cols:
            continue
        if len(cols) > n_b:
            raise RankDeficientError(
                f"RBG {rbgs[0]}: {len(cols)} layers exceed {n_b} antennas"
            )
        ue_idx = np.array([c[0] for c in cols])
        lay_idx = np.array([c[1] for c in cols])
        Hs = est[ue_idx[:, None], np.array(rbgs)[None, :], :, lay_idx[:, None]]
        # Hs: (n_cols, n_rbgs, n_B) -> (n_rbgs, n_B, n_cols)
        Hs = np.transpose(Hs, (1, 2, 0))
        s = np.linalg.svd(Hs, compute_uv=False)
        cond = (s[:, 0] / np.maximum(s[:, -1], np.finfo(float).tiny)) ** 2
        bad = np.flatnonzero(cond > MAX_GRAM_COND)
        if bad.size:
            raise RankDeficientError(
                f"ill-conditioned Gram matrix on RBG {rbgs[bad[0]]} (cond {cond[bad[0]]:.2e})"
            )
        lam = 1.0 / zf_inverse_gram_diag(Hs)
        values[ue_idx[:, None], lay_idx[:, None], np.array(rbgs)[None, :]] = lam.T
    return LambdaTable(values)


def dl_lambdas(channels: np.ndarray, deltas: np.ndarray, ranks,
               sigma2=1.0) -> LambdaTable:
    """Downlink gains from per-RBG block-diagonalization precoders.

    ``channels`` has shape ``(n_ue, n_rbg, n_B, n_U)`` (uplink convention);
    ``sigma2`` is a scalar or per-UE noise power the gains are normalized by.
    """
    H = np.asarray(channels, dtype=complex)
    n_ue, n_rbg, n_b, n_u = H.shape
    d = np.asarray(deltas).astype(bool)
    ranks = np.asarray(ranks, dtype=int)
    sig = np.broadcast_to(np.asarray(sigma2, dtype=float), (n_ue,))
    values = np.zeros((n_ue, n_u, n_rbg))
    precoders = []
    for g in range(n_rbg):
        ues = [i for i in range(n_ue) if d[i, g] and ranks[i] > 0]
        try:
            pre = build_zf_precoder({i: H[i, g] for i in ues},
                                    {i: ranks[i] for i in ues}, ues)
        except InfeasibleRankError as exc:
            raise InfeasibleRankError(f"RBG {g}, UEs {ues}: {exc}") from exc
        for i in ues:
            values[i, : ranks[i], g] = pre.lambdas(i) / sig[i]
        precoders.append(pre)
    return LambdaTable(values, precoders)


def dl_power_weights(table: LambdaTable, n_b: int) -> np.ndarray:
    """``a[k, i, j, g] = |[W_{i,g}]_{k,j}|^2`` from the stored precoders."""
    n_ue, n_u, n_rbg = table.values.shape
    a = np.zeros((n_b, n_ue, n_u, n_rbg))
    for g, pre in enumerate(table.precoders or []):
        for i, W in pre.weights.items():
            a[:, i, : W.shape[1], g] = np.abs(W) ** 2
    return a
