"""Linear MU-MIMO transceiver machinery.

Uplink: noise whitening, effective-channel stacking, LMMSE/ZF equalization and
the closed-form post-equalization SINR.  Downlink: block-diagonalization ZF
precoders and the resulting per-layer SINRs.

Channel convention: ``H`` is ``n_B x n_U`` (base-station antennas by UE
antennas).  The uplink uses ``H`` directly, the downlink uses ``H.T``.
"""

from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Tuple, Union

import numpy as np

# singular values below RANK_RTOL * s_max count as zero
RANK_RTOL = 1e-10
EIG_FLOOR = 1e-12


class InvalidCovarianceError(ValueError):
    """Covariance matrix is not Hermitian positive definite."""


class RankDeficientError(np.linalg.LinAlgError):
    """Gram matrix of an effective channel is (numerically) singular."""


class InfeasibleRankError(ValueError):
    """Requested ranks do not fit in the ZF null spaces."""


@dataclass(frozen=True)
class ChannelMatrix:
    entries: np.ndarray
    ue_id: int
    rbg_id: int = 0

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=complex)
        if entries.ndim != 2:
            raise ValueError("channel matrix must be 2-D (n_B x n_U)")
        if not np.all(np.isfinite(entries)):
            raise ValueError(f"non-finite channel entries for UE {self.ue_id}")
        object.__setattr__(self, "entries", entries)

    @property
    def n_b(self) -> int:
        return self.entries.shape[0]

    @property
    def n_u(self) -> int:
        return self.entries.shape[1]


@dataclass
class EffectiveChannel:
    stacked: np.ndarray
    layer_index_map: List[Tuple[int, int]]

    @property
    def n_layers(self) -> int:
        return self.stacked.shape[1]


@dataclass
class ZfPrecoder:
    """Per-UE ZF blocks with ``H_i^T W_i = U_i diag(sqrt(lambda_i))``."""

    weights: Dict[int, np.ndarray] = field(default_factory=dict)
    gains: Dict[int, np.ndarray] = field(default_factory=dict)
    rotations: Dict[int, np.ndarray] = field(default_factory=dict)

    def lambdas(self, ue_id: int) -> np.ndarray:
        return self.gains[ue_id] ** 2

    def stacked(self, order: Iterable[int] = None) -> np.ndarray:
        order = sorted(self.weights) if order is None else list(order)
        return np.concatenate([self.weights[i] for i in order], axis=1)


ChannelLike = Union[ChannelMatrix, np.ndarray]


def _entries(ch: ChannelLike) -> np.ndarray:
    if isinstance(ch, ChannelMatrix):
        return ch.entries
    return np.asarray(ch, dtype=complex)


def inv_sqrtm_hermitian(R: np.ndarray) -> np.ndarray:
    """``R^{-1/2}`` through the Hermitian eigendecomposition."""
    R = np.asarray(R, dtype=complex)
    if R.ndim != 2 or R.shape[0] != R.shape[1]:
        raise InvalidCovarianceError("covariance must be square")
    scale = max(np.max(np.abs(R)), np.finfo(float).tiny)
    if np.max(np.abs(R - R.conj().T)) > 1e-10 * scale:
        raise InvalidCovarianceError("covariance is not Hermitian")
    w, V = np.linalg.eigh(0.5 * (R + R.conj().T))
    if not np.all(np.isfinite(w)) or w[0] <= 0:
        raise InvalidCovarianceError(
            f"covariance is not positive definite (min eigenvalue {w[0]:.3e})"
        )
    w = np.maximum(w, EIG_FLOOR * w[-1])
    return (V / np.sqrt(w)) @ V.conj().T


def whiten(x: np.ndarray, R) -> np.ndarray:
    """Apply ``R^{-1/2}`` to a received vector or channel matrix.

    ``R`` may be a full ``n x n`` covariance or a positive scalar (``sigma^2 I``).
    """
    x = np.asarray(x, dtype=complex)
    if np.ndim(R) == 0:
        if not R > 0:
            raise InvalidCovarianceError(f"noise variance must be positive, got {R}")
        return x / np.sqrt(R)
    return inv_sqrtm_hermitian(R) @ x


def stack_effective_channel(
    channels: Sequence[ChannelLike],
    precoders: Sequence[np.ndarray],
    powers: Sequence[np.ndarray],
    coscheduled: Iterable[int] = None,
    ue_ids: Sequence[int] = None,
) -> EffectiveChannel:
    """Stack ``H_i W_i D_i`` column-wise for the co-scheduled UEs (UE order)."""
    if not (len(channels) == len(precoders) == len(powers)):
        raise ValueError("channels, precoders and powers must have equal length")
    if ue_ids is None:
        ue_ids = [ch.ue_id if isinstance(ch, ChannelMatrix) else k
                  for k, ch in enumerate(channels)]
    active = set(ue_ids) if coscheduled is None else set(coscheduled)

    blocks = []
    layer_map = []
    n_b = None
    for ue, ch, W, p in sorted(zip(ue_ids, channels, precoders, powers),
                               key=lambda t: t[0]):
        if ue not in active:
            continue
        H = _entries(ch)
        W = np.asarray(W, dtype=complex)
        p = np.asarray(p, dtype=float).reshape(-1)
        if n_b is None:
            n_b = H.shape[0]
        if H.shape[0] != n_b or W.shape[0] != H.shape[1] or W.shape[1] != p.size:
            raise ValueError(f"dimension mismatch for UE {ue}")
        if np.any(p < 0):
            raise ValueError(f"negative layer power for UE {ue}")
        blocks.append((H @ W) * np.sqrt(p))
        layer_map.extend((ue, j) for j in range(p.size))
    if not blocks:
        return EffectiveChannel(np.zeros((0, 0), dtype=complex), [])
    stacked = np.concatenate(blocks, axis=1)
    if stacked.shape[1] > n_b:
        raise ValueError(
            f"{stacked.shape[1]} layers exceed the {n_b} receive antennas"
        )
    return EffectiveChannel(stacked, layer_map)


def _matrix(h) -> np.ndarray:
    if isinstance(h, EffectiveChannel):
        return h.stacked
    return np.asarray(h, dtype=complex)


def lmmse_equalizer(H_prime) -> np.ndarray:
    """``G = (H'^H H' + I)^{-1} H'^H``; always well defined."""
    H = _matrix(H_prime)
    gram = H.conj().T @ H
    return np.linalg.solve(gram + np.eye(gram.shape[0]), H.conj().T)


def lmmse_post_eq_sinr(H_prime) -> np.ndarray:
    """Unbiased post-LMMSE SINR ``1/[(H'^H H' + I)^{-1}]_ll - 1``."""
    H = _matrix(H_prime)
    gram = H.conj().T @ H
    mse = np.real(np.diag(np.linalg.inv(gram + np.eye(gram.shape[0]))))
    return 1.0 / mse - 1.0


def zf_inverse_gram_diag(H: np.ndarray) -> np.ndarray:
    """Diagonal of ``(H^H H)^{-1}`` for a stack ``(..., n_B, n_L)`` via SVD.

    Raises RankDeficientError when a matrix in the stack has a singular value
    below ``RANK_RTOL`` times its largest one.
    """
    H = np.asarray(H, dtype=complex)
    if H.shape[-1] == 0:
        return np.zeros(H.shape[:-2] + (0,))
    if H.shape[-1] > H.shape[-2]:
        raise RankDeficientError("more layers than receive antennas")
    _, s, Vh = np.linalg.svd(H, full_matrices=False)
    smax = s[..., :1]
    bad = (s[..., -1:] <= RANK_RTOL * smax) | (smax <= 0)
    if np.any(bad):
        where = np.argwhere(bad[..., 0]) if bad.ndim > 1 else []
        raise RankDeficientError(
            f"rank-deficient effective channel (stack index {where.tolist()})"
            if len(where) else "rank-deficient effective channel"
        )
    # (H^H H)^{-1} = V diag(s^-2) V^H
    return np.einsum("...kl,...k->...l", np.abs(Vh) ** 2, 1.0 / s**2)


def ul_post_eq_sinr(H_prime) -> np.ndarray:
    """ZF closed-form SINR ``1/[(H'^H H')^{-1}]_ll`` per stacked layer."""
    return 1.0 / zf_inverse_gram_diag(_matrix(H_prime))


def null_space(A: np.ndarray) -> np.ndarray:
    """Orthonormal basis (columns) of the right null space of ``A``."""
    n = A.shape[1]
    if A.shape[0] == 0:
        return np.eye(n, dtype=complex)
    _, s, Vh = np.linalg.svd(A, full_matrices=True)
    rank = int(np.sum(s > RANK_RTOL * s[0])) if s.size and s[0] > 0 else 0
    return Vh[rank:].conj().T


def build_zf_precoder(
    channels: Mapping[int, ChannelLike],
    ranks: Mapping[int, int],
    coscheduled: Iterable[int] = None,
) -> ZfPrecoder:
    """Block-diagonalization ZF precoder for one RBG.

    ``channels`` maps ue_id to its ``n_B x n_U`` uplink-convention channel.
    Each UE's block lives in the null space of every other co-scheduled UE's
    full downlink channel; inside it the top right-singular directions of the
    projected channel are kept (strongest layer first).
    """
    ues = sorted(channels) if coscheduled is None else sorted(coscheduled)
    if not ues:
        return ZfPrecoder()
    H = {i: _entries(channels[i]) for i in ues}
    n_b = H[ues[0]].shape[0]
    total = sum(int(ranks[i]) for i in ues)
    if total > n_b:
        raise InfeasibleRankError(f"{total} layers exceed {n_b} antennas for UEs {ues}")

    pre = ZfPrecoder()
    for i in ues:
        n_l = int(ranks[i])
        if n_l < 1 or n_l > H[i].shape[1]:
            raise InfeasibleRankError(f"rank {n_l} invalid for UE {i}")
        others = [H[j].T for j in ues if j != i]
        basis = null_space(np.concatenate(others, axis=0)) if others else np.eye(n_b, dtype=complex)
        if basis.shape[1] < n_l:
            raise InfeasibleRankError(
                f"null space of dimension {basis.shape[1]} too small for rank {n_l} of UE {i}"
            )
        proj = H[i].T @ basis
        U, s, Vh = np.linalg.svd(proj, full_matrices=False)
        if s.size < n_l or s[n_l - 1] <= RANK_RTOL * max(s[0], np.finfo(float).tiny):
            raise InfeasibleRankError(f"projected channel of UE {i} has rank < {n_l}")
        pre.weights[i] = basis @ Vh[:n_l].conj().T
        pre.gains[i] = s[:n_l].copy()
        pre.rotations[i] = U[:, :n_l]
    return pre


def dl_post_eq_sinr(precoder: ZfPrecoder, powers: Mapping[int, np.ndarray],
                    sigma2: Mapping[int, float]) -> Dict[int, np.ndarray]:
    """``rho_ij = lambda_ij p_ij / sigma_i^2`` for every UE in the precoder."""
    out = {}
    for i, g in precoder.gains.items():
        p = np.asarray(powers[i], dtype=float)
        if np.any(p < 0) or not sigma2[i] > 0:
            raise ValueError(f"invalid power or noise for UE {i}")
        out[i] = g**2 * p / sigma2[i]
    return out
