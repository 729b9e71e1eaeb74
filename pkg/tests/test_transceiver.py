import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import crandn
from oracles import inv_sqrt_dense, sinr_dense

from mumimo.transceiver import (
    ChannelMatrix,
    InfeasibleRankError,
    InvalidCovarianceError,
    RankDeficientError,
    build_zf_precoder,
    dl_post_eq_sinr,
    lmmse_equalizer,
    lmmse_post_eq_sinr,
    stack_effective_channel,
    ul_post_eq_sinr,
    whiten,
    zf_inverse_gram_diag,
)


# --- whitening ---------------------------------------------------------------

def test_whiten_identity_leaves_channel(rng):
    H = crandn(rng, 4, 2)
    assert np.allclose(whiten(H, np.eye(4)), H, atol=1e-14)


def test_whiten_scalar_covariance(rng):
    H = crandn(rng, 4, 2)
    assert np.allclose(whiten(H, 4.0 * np.eye(4)), 0.5 * H, atol=1e-14)
    assert np.allclose(whiten(H, 4.0), 0.5 * H)


def test_whiten_matches_direct_gram(rng):
    A = crandn(rng, 4, 4)
    R = A @ A.conj().T + 0.5 * np.eye(4)
    H = crandn(rng, 4, 2)
    Hw = whiten(H, R)
    assert np.allclose(Hw.conj().T @ Hw, H.conj().T @ np.linalg.inv(R) @ H, atol=1e-10)
    # independent square root
    assert np.allclose(Hw, inv_sqrt_dense(R) @ H, atol=1e-10)


@pytest.mark.parametrize("R", [
    np.array([[1.0, 2.0], [0.0, 1.0]]),      # not Hermitian
    np.array([[1.0, 0.0], [0.0, -1.0]]),     # indefinite
])
def test_whiten_rejects_bad_covariance(R):
    with pytest.raises(InvalidCovarianceError):
        whiten(np.ones((2, 1)), R)


def test_channel_matrix_validates():
    with pytest.raises(ValueError):
        ChannelMatrix(np.array([1.0, np.nan]).reshape(2, 1), 0)
    with pytest.raises(ValueError):
        ChannelMatrix(np.ones(3), 0)


# --- stacking and equalization ------------------------------------------------------

def test_stack_single_ue_identity():
    H = np.arange(6.0).reshape(3, 2) + 1j
    eff = stack_effective_channel([H], [np.eye(2)], [np.ones(2)])
    assert np.allclose(eff.stacked, H)
    assert eff.layer_index_map == [(0, 0), (0, 1)]


def test_stack_two_single_layer_ues(rng):
    H1, H2 = crandn(rng, 4, 2), crandn(rng, 4, 2)
    w1, w2 = crandn(rng, 2, 1), crandn(rng, 2, 1)
    eff = stack_effective_channel([ChannelMatrix(H1, 1), ChannelMatrix(H2, 2)],
                                  [w1, w2], [np.array([2.0]), np.array([0.5])])
    assert eff.layer_index_map == [(1, 0), (2, 0)]
    assert np.allclose(eff.stacked[:, 0], (H1 @ w1)[:, 0] * np.sqrt(2.0))
    assert np.allclose(eff.stacked[:, 1], (H2 @ w2)[:, 0] * np.sqrt(0.5))


def test_stack_skips_unscheduled(rng):
    chans = [crandn(rng, 4, 1) for _ in range(3)]
    eff = stack_effective_channel(chans, [np.eye(1)] * 3, [np.ones(1)] * 3, coscheduled={0, 2})
    assert [u for u, _ in eff.layer_index_map] == [0, 2]


def test_stack_rejects_too_many_layers(rng):
    with pytest.raises(ValueError):
        stack_effective_channel([crandn(rng, 2, 2)] * 2, [np.eye(2)] * 2, [np.ones(2)] * 2)


def test_lmmse_examples():
    assert np.allclose(lmmse_equalizer(np.eye(3)), 0.5 * np.eye(3))
    assert np.allclose(lmmse_equalizer(np.array([[2.0]])), [[0.4]])


def test_lmmse_against_dense(rng):
    H = crandn(rng, 4, 2)
    G = lmmse_equalizer(H)
    ref = np.linalg.inv(H.conj().T @ H + np.eye(2)) @ H.conj().T
    assert np.allclose(G, ref, atol=1e-12)
    GH = G @ H
    assert np.allclose(GH, GH.conj().T, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(GH) > 0)


def test_lmmse_sinr_exceeds_zf(rng):
    H = crandn(rng, 6, 3)
    assert np.all(lmmse_post_eq_sinr(H) >= ul_post_eq_sinr(H) - 1e-9)


def test_ul_sinr_examples():
    assert np.allclose(ul_post_eq_sinr(np.eye(3)), 1.0)
    assert np.allclose(ul_post_eq_sinr(np.diag([1.0, 2.0])), [1.0, 4.0])


def test_ul_sinr_rank_deficient():
    H = np.ones((4, 2))
    with pytest.raises(RankDeficientError):
        ul_post_eq_sinr(H)
    with pytest.raises(RankDeficientError):
        zf_inverse_gram_diag(np.ones((2, 3)))


@given(st.integers(1, 16), st.integers(1, 8), st.integers(0, 2**32 - 1))
def test_ul_sinr_matches_dense_inverse(n_b, n_l, seed):
    n_l = min(n_l, n_b)
    H = crandn(np.random.default_rng(seed), n_b, n_l)
    ref = sinr_dense(H)
    assert np.allclose(ul_post_eq_sinr(H), ref, rtol=1e-8)


# --- block diagonalization ----------------------------------------------------------

def _leakage(pre, chans):
    worst = 0.0
    for i, W in pre.weights.items():
        for j, H in chans.items():
            if j != i:
                worst = max(worst, np.linalg.norm(H.T @ W) / np.linalg.norm(H))
    return worst


def test_zf_single_ue_is_svd(rng):
    H = crandn(rng, 6, 3)
    pre = build_zf_precoder({0: H}, {0: 2})
    s = np.linalg.svd(H.T, compute_uv=False)
    assert np.allclose(pre.lambdas(0), s[:2] ** 2)
    W = pre.weights[0]
    assert np.allclose(W.conj().T @ W, np.eye(2), atol=1e-12)


def test_zf_orthogonal_ues_match_isolated():
    Q, _ = np.linalg.qr(crandn(np.random.default_rng(3), 8, 8))
    H1 = Q[:, :2] @ np.diag([3.0, 1.0])
    H2 = Q[:, 2:4] @ np.diag([2.0, 0.5])
    pre = build_zf_precoder({1: H1, 2: H2}, {1: 2, 2: 2})
    for i, H in ((1, H1), (2, H2)):
        alone = build_zf_precoder({i: H}, {i: 2})
        assert np.allclose(pre.lambdas(i), alone.lambdas(i))
    assert _leakage(pre, {1: H1, 2: H2}) < 1e-12


def test_zf_rotation_identity(rng):
    chans = {i: crandn(rng, 8, 2) for i in range(3)}
    pre = build_zf_precoder(chans, {0: 2, 1: 1, 2: 2})
    for i, W in pre.weights.items():
        U = pre.rotations[i]
        assert np.allclose(chans[i].T @ W, U * pre.gains[i], atol=1e-10)


def test_zf_rank_errors(rng):
    chans = {i: crandn(rng, 4, 2) for i in range(3)}
    with pytest.raises(InfeasibleRankError):
        build_zf_precoder(chans, {0: 2, 1: 2, 2: 2})
    with pytest.raises(InfeasibleRankError):
        build_zf_precoder({0: chans[0]}, {0: 3})


@given(st.integers(0, 2**32 - 1), st.integers(2, 3))
def test_zf_leakage_and_unitary(seed, n_ue):
    r = np.random.default_rng(seed)
    chans = {i: crandn(r, 8, 2) for i in range(n_ue)}
    ranks = {i: int(r.integers(1, 3)) for i in range(n_ue)}
    pre = build_zf_precoder(chans, ranks)
    assert _leakage(pre, chans) <= 1e-9
    for i in chans:
        U = pre.rotations[i]
        assert np.allclose(U.conj().T @ U, np.eye(ranks[i]), atol=1e-9)


def test_dl_sinr_examples():
    from mumimo.transceiver import ZfPrecoder
    pre = ZfPrecoder(gains={0: np.array([1.0]), 1: np.array([2.0])})
    out = dl_post_eq_sinr(pre, {0: [1.0], 1: [2.0]}, {0: 1.0, 1: 2.0})
    assert out[0][0] == pytest.approx(1.0)
    assert out[1][0] == pytest.approx(4.0)
    out = dl_post_eq_sinr(pre, {0: [0.0], 1: [0.0]}, {0: 1.0, 1: 1.0})
    assert out[0][0] == 0.0


@given(st.integers(0, 2**32 - 1))
def test_whitened_noise_is_white(seed):
    r = np.random.default_rng(seed)
    A = crandn(r, 4, 4)
    R = A @ A.conj().T + 0.1 * np.eye(4)
    M = whiten(np.eye(4, dtype=complex), R)
    assert np.allclose(M @ R @ M.conj().T, np.eye(4), atol=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_lmmse_approaches_zf_at_high_snr(seed):
    H = crandn(np.random.default_rng(seed), 8, 3)
    t = 1e3
    lm = lmmse_post_eq_sinr(t * H)
    zf = ul_post_eq_sinr(t * H)
    assert np.allclose(lm, zf, rtol=1e-2)
