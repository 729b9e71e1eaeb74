"""SINR-to-rate map, the finite-MCS rate floor and alpha-fair utilities."""

import math
from dataclasses import dataclass, field
from typing import Sequence, Tuple

import numpy as np


class UnservableUeError(ValueError):
    """A zero rate entered a log utility."""


@dataclass(frozen=True)
class RateConfig:
    r_min: float = 0.23
    r_max: float = 8.0
    scale_c: float = 0.5
    alpha: float = 1.0

    def __post_init__(self):
        if not 0 < self.r_min < self.r_max:
            raise ValueError(f"need 0 < r_min < r_max, got {self.r_min}, {self.r_max}")
        if self.scale_c <= 0:
            raise ValueError("scale_c must be positive")
        if self.alpha <= 0:
            raise ValueError("alpha must be positive")

    @property
    def rho_min(self) -> float:
        return snr_bound_from_se(self.r_min, self.scale_c)

    @property
    def rho_max(self) -> float:
        return snr_bound_from_se(self.r_max, self.scale_c)


@dataclass
class UeRate:
    ue_id: int
    rate: float
    per_rbg_layer_rates: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))


def sinr_to_rate(rho, cfg: RateConfig = None, scale_c: float = None):
    """``log2(1 + c rho)`` in bits/symbol; works elementwise on arrays."""
    c = scale_c if scale_c is not None else (cfg.scale_c if cfg else 0.5)
    rho = np.asarray(rho, dtype=float)
    if np.any(rho < 0):
        raise ValueError("SINR must be non-negative")
    out = np.log2(1.0 + c * rho)
    return float(out) if out.ndim == 0 else out


def snr_bound_from_se(r, scale_c: float = 0.5):
    """Inverse of :func:`sinr_to_rate`: ``(2^r - 1) / c``."""
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("spectral efficiency must be non-negative")
    out = np.expm1(r * math.log(2.0)) / scale_c
    return float(out) if out.ndim == 0 else out


def rate_floor_applied(raw: float, n_layers: int, n_rbgs: int, r_min: float) -> float:
    """Finite-MCS indicator: keep ``raw`` only if it beats ``n_l |G| r_min``."""
    return raw if raw > n_layers * n_rbgs * r_min else 0.0


def ue_rate(lambdas: np.ndarray, powers: np.ndarray, deltas: np.ndarray,
            cfg: RateConfig, ue_id: int = 0, rank: int = None) -> UeRate:
    """Rate of one UE from its ``(n_U, n_rbg)`` gain and power slices.

    Layers beyond ``rank`` (default: all rows) are ignored.
    """
    lam = np.asarray(lambdas, dtype=float)
    p = np.asarray(powers, dtype=float)
    d = np.asarray(deltas).astype(bool)
    if lam.ndim == 1:
        lam, p = lam[None, :], p[None, :]
    n_l = lam.shape[0] if rank is None else int(rank)
    per = np.zeros_like(lam)
    if n_l > 0:
        per[:n_l] = sinr_to_rate(d[None, :] * lam[:n_l] * p[:n_l], cfg)
    raw = float(per.sum())
    rate = rate_floor_applied(raw, n_l, int(d.sum()), cfg.r_min)
    return UeRate(ue_id, rate, per)


def f_alpha(x, alpha: float):
    x = np.asarray(x, dtype=float)
    if alpha == 1.0:
        return np.log(x)
    return x ** (1.0 - alpha) / (1.0 - alpha)


def utility(rates: Sequence, cfg: RateConfig) -> float:
    """Unweighted alpha-fair utility; ``sum ln R`` at alpha = 1."""
    r = np.array([getattr(x, "rate", x) for x in rates], dtype=float)
    if np.any(r <= 0) and cfg.alpha >= 1.0:
        bad = [getattr(x, "ue_id", k) for k, x in enumerate(rates) if getattr(x, "rate", x) <= 0]
        raise UnservableUeError(f"non-positive rate for UE(s) {bad}")
    return float(np.sum(f_alpha(r, cfg.alpha)))


def gm_am_report(rates: Sequence[float]) -> Tuple[float, float]:
    """Geometric and arithmetic mean; a single zero rate zeroes the GM."""
    r = np.asarray(rates, dtype=float)
    if r.size == 0:
        raise ValueError("empty rate list")
    if np.any(r < 0):
        raise ValueError("rates must be non-negative")
    am = float(r.mean())
    if np.any(r == 0):
        return 0.0, am
    return float(np.exp(np.mean(np.log(r)))), am
