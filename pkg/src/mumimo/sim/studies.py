"""Offline studies: allocator vs exhaustive oracle, and power-command quantization."""

import math
from dataclasses import dataclass, replace
from typing import List

import numpy as np

from ..allocator import AllocatorConfig, ChannelSet, allocate, exhaustive_oracle
from ..rates import RateConfig, gm_am_report
from ..signaling import MODES, DciGranularity, quantize_powers, signaling_overhead_bits
from ..solver import SolverConfig
from .channels import ChannelStream, build_geometry
from .config import SimConfig
from .engine import _ALLOC_ERRORS, allocator_config

# spawn-key branch of the oracle instances, disjoint from (drop, cell, ue, k)
ORACLE_BRANCH = 1 << 31


@dataclass
class OracleResult:
    ratios: np.ndarray      # one per instance the oracle could serve
    skipped: int            # instances with no configuration serving every UE
    threshold: float

    @property
    def median(self) -> float:
        return float(np.median(self.ratios)) if self.ratios.size else math.nan

    @property
    def passed(self) -> bool:
        return bool(self.ratios.size) and self.median >= self.threshold


def oracle_instance(cfg: SimConfig, index: int) -> ChannelSet:
    """Rayleigh channels with a random large-scale gain per UE."""
    o = cfg.oracle
    rng = np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=(ORACLE_BRANCH, index)))
    shape = (o.n_ue, o.n_rbg, o.n_b, o.n_u)
    H = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    H *= np.sqrt(rng.uniform(0.05, 2.0, (o.n_ue, 1, 1, 1)))
    return ChannelSet(H, 1.0)


def oracle_allocator_config(cfg: SimConfig) -> AllocatorConfig:
    o = cfg.oracle
    return AllocatorConfig(
        direction=cfg.link, n_rbg_min=1,
        rate_cfg=RateConfig(cfg.r_min, cfg.r_max, cfg.scale_c),
        solver_cfg=SolverConfig(max_iterations=cfg.solver_iterations),
        p_u_max=o.p_u_max, p_b_max=o.p_b_max,
    )


def utility_ratio(u_alloc: float, u_oracle: float, n_ue: int) -> float:
    """Geometric-mean rate ratio ``exp((U_alloc - U_oracle) / N)``."""
    if u_alloc == -math.inf:
        return 0.0
    return math.exp((u_alloc - u_oracle) / n_ue)


def oracle_compare(cfg: SimConfig, n_instances: int = None) -> OracleResult:
    n = cfg.oracle.instances if n_instances is None else n_instances
    if n < 1:
        raise ValueError("n_instances must be at least 1")
    acfg = oracle_allocator_config(cfg)
    ratios, skipped = [], 0
    for k in range(n):
        ch = oracle_instance(cfg, k)
        ref = exhaustive_oracle(ch, acfg)
        if ref is None:
            skipped += 1
            continue
        try:
            u = allocate(ch, acfg).utility()
        except _ALLOC_ERRORS:
            u = -math.inf
        ratios.append(utility_ratio(u, ref.utility(), ch.n_ue))
    return OracleResult(np.array(ratios), skipped, cfg.oracle.threshold)


@dataclass
class QuantizeRow:
    mode: str
    levels: int
    gm: float
    overhead_bits: int


def quantize_study(cfg: SimConfig, drop: int = 0) -> List[QuantizeRow]:
    """GM of the proposed allocation on one drop under every granularity.

    Cells are isolated and the rates are the allocator's predictions, so the
    comparison isolates the quantization loss.  The first row (mode
    ``none``) is the unquantized reference.
    """
    geo = build_geometry(cfg, drop)
    H = ChannelStream(cfg, geo, drop).epoch(0)
    acfg = allocator_config(cfg)
    states = []
    for c in range(cfg.n_cells):
        ues = geo.ues_of(c)
        try:
            states.append(allocate(ChannelSet(H[ues, c], 1.0), acfg))
        except _ALLOC_ERRORS as exc:
            raise RuntimeError(f"drop {drop}, cell {c}: {exc}") from exc

    def gm(rate_lists):
        return gm_am_report(np.concatenate(rate_lists))[0]

    rows = [QuantizeRow("none", 0, gm([s.rates for s in states]), 0)]
    for levels in cfg.dci_levels:
        for mode in MODES:
            g = DciGranularity(mode, levels, cfg.dci_range_db)
            q = [quantize_powers(s, g, acfg) for s in states]
            bits = sum(signaling_overhead_bits(s, g) for s in states)
            rows.append(QuantizeRow(mode, levels, gm([s.rates for s in q]), bits))
    return rows
