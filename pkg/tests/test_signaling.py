import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import crandn

from mumimo.allocator import (
    DOWNLINK,
    UPLINK,
    AllocationState,
    AllocatorConfig,
    ChannelSet,
    allocate,
    compute_lambdas,
)
from mumimo.gains import dl_power_weights
from mumimo.rates import gm_am_report
from mumimo.signaling import DciGranularity, quantize_powers, signaling_overhead_bits, snap

FINE = dict(levels=2 ** 20, range_db=40.0)


def manual_state(powers, n_u=1):
    """Single UE with unit gains on every (layer, RBG) of ``powers``."""
    powers = np.asarray(powers, float).reshape(1, n_u, -1)
    n_rbg = powers.shape[2]
    H = np.zeros((1, n_rbg, n_u, n_u), complex)
    H[0, :] = np.eye(n_u)
    cfg = AllocatorConfig(direction=UPLINK, p_u_max=100.0)
    ch = ChannelSet(H)
    d = np.ones((1, n_rbg), int)
    table = compute_lambdas(ch, d, [n_u], cfg)
    return AllocationState(d, np.array([n_u]), powers, lambdas=table), cfg


def test_snap_stays_within_half_step():
    g = DciGranularity(levels=16, range_db=40.0)
    p = np.logspace(-3, 0, 50)
    q = snap(p, 1.0, g)
    half = 0.5 * 40.0 / 15
    assert np.all(np.abs(10 * np.log10(q / p)) <= half + 1e-9)
    assert np.all(snap(np.zeros(3), 1.0, g) == 0)


def test_uniform_powers_unchanged_up_to_step():
    state, cfg = manual_state([3.0, 3.0, 3.0])
    for mode in ("high", "medium", "low"):
        g = DciGranularity(mode, 16)
        out = quantize_powers(state, g, cfg).powers
        assert np.ptp(out[0, 0]) == 0
        assert abs(10 * np.log10(out[0, 0, 0] / 3.0)) <= 0.5 * 40 / 15 + 1e-9


def test_medium_mode_averages_per_layer():
    state, cfg = manual_state([2.0, 4.0])
    out = quantize_powers(state, DciGranularity("medium", **FINE), cfg).powers
    assert np.allclose(out[0, 0], 3.0, rtol=1e-4)


def test_low_mode_replicates_one_value():
    state, cfg = manual_state([[1.0, 2.0], [3.0, 6.0]], n_u=2)
    out = quantize_powers(state, DciGranularity("low", **FINE), cfg).powers
    assert np.allclose(out[0], 3.0, rtol=1e-4)
    assert np.ptp(out[0]) == 0


def test_overhead_examples():
    state4 = AllocationState(np.ones((4, 24), int), np.ones(4, int), np.zeros((4, 1, 24)))
    assert signaling_overhead_bits(state4, DciGranularity("low", 16)) == 16
    state1 = AllocationState(np.ones((1, 24), int), np.ones(1, int), np.zeros((1, 1, 24)))
    assert signaling_overhead_bits(state1, DciGranularity("high", 16)) == 96
    state2 = AllocationState(np.ones((1, 6), int), np.array([2]), np.zeros((1, 2, 6)))
    assert signaling_overhead_bits(state2, DciGranularity("medium", 16)) == 2 * 4


def test_granularity_validation():
    with pytest.raises(ValueError):
        DciGranularity("coarse")
    with pytest.raises(ValueError):
        DciGranularity("high", levels=1)


def _instance(seed, direction):
    r = np.random.default_rng(seed)
    gain = r.uniform(0.05, 2.0, (3, 1, 1, 1))
    ch = ChannelSet(crandn(r, 3, 6, 8, 2) * np.sqrt(gain))
    cfg = AllocatorConfig(direction=direction, p_u_max=10.0, p_b_max=20.0)
    return ch, cfg, allocate(ch, cfg)


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1), st.sampled_from([UPLINK, DOWNLINK]),
       st.sampled_from(["high", "medium", "low"]), st.sampled_from([4, 16, 64]))
def test_quantized_states_stay_feasible(seed, direction, mode, levels):
    ch, cfg, state = _instance(seed, direction)
    q = quantize_powers(state, DciGranularity(mode, levels), cfg)
    assert np.all(q.powers * state.lambdas.values <= cfg.rate_cfg.rho_max * (1 + 1e-8))
    if direction == UPLINK:
        assert np.all(q.ue_power() <= cfg.p_u_max * (1 + 1e-8))
    else:
        per_ant = np.einsum("kijg,ijg->k", dl_power_weights(state.lambdas, ch.n_b), q.powers)
        assert per_ant.sum() <= cfg.p_b_max * (1 + 1e-8)
        assert np.all(per_ant <= cfg.antenna_budget(ch.n_b) * (1 + 1e-8))


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1), st.sampled_from([4, 16, 1024]))
def test_overhead_ordering(seed, levels):
    _, _, state = _instance(seed, UPLINK)
    bits = [signaling_overhead_bits(state, DciGranularity(m, levels))
            for m in ("high", "medium", "low")]
    assert bits[0] >= bits[1] >= bits[2]


@settings(max_examples=10)
@given(st.integers(0, 2**32 - 1), st.sampled_from([UPLINK, DOWNLINK]))
def test_fine_high_mode_keeps_gm(seed, direction):
    _, cfg, state = _instance(seed, direction)
    q = quantize_powers(state, DciGranularity("high", 1024), cfg)
    gm0, _ = gm_am_report(state.rates[state.served])
    gm1, _ = gm_am_report(q.rates[state.served])
    assert gm1 >= 0.995 * gm0
