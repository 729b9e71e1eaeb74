"""Synthetic multi-cell channels on a hexagonal layout with wraparound.

Large-scale loss is log-distance pathloss plus log-normal shadowing (and a
sector pattern when sites carry three cells).  Small-scale fading is i.i.d.
Rayleigh across antennas, first-order autoregressive across RBGs (so the
RBG-to-RBG correlation decays exponentially) and across CSI epochs.

Randomness follows a fixed split hierarchy: ``(seed, drop)`` for the drop,
``(seed, drop, cell)`` for a cell and ``(seed, drop, cell, ue)`` for each UE.
Each UE node has two children: ``0`` draws position and shadowing, ``1`` the
fading of every link in epoch order, so every scheme sees the same channels.
"""

import math
from dataclasses import dataclass
from typing import List

import numpy as np

from .config import SimConfig

SQ3 = math.sqrt(3.0)
SECTOR_BORESIGHT_DEG = (30.0, 150.0, 270.0)
SECTOR_BEAMWIDTH_DEG = 65.0
SECTOR_FRONT_BACK_DB = 20.0


def stream(cfg: SimConfig, *key: int) -> np.random.Generator:
    """Generator for one node of the seed-split hierarchy."""
    return np.random.default_rng(np.random.SeedSequence(cfg.seed, spawn_key=tuple(key)))


def site_positions(n_sites: int, isd: float) -> np.ndarray:
    pos = [(0.0, 0.0)]
    for k in range(6):
        a = math.radians(60.0 * k)
        pos.append((isd * math.cos(a), isd * math.sin(a)))
    return np.array(pos[:n_sites])


def wrap_shifts(n_sites: int, isd: float) -> np.ndarray:
    """Translations of the 7-site cluster that tile the plane."""
    if n_sites == 1:
        return np.zeros((1, 2))
    base = isd * np.array([2.5, SQ3 / 2])
    out = [np.zeros(2)]
    for k in range(6):
        a = math.radians(60.0 * k)
        rot = np.array([[math.cos(a), -math.sin(a)], [math.sin(a), math.cos(a)]])
        out.append(rot @ base)
    return np.array(out)


def in_hexagon(xy: np.ndarray, isd: float) -> bool:
    # neighbours lie across edges at multiples of 60 degrees
    return all(abs(xy[0] * math.cos(math.radians(60 * k)) + xy[1] * math.sin(math.radians(60 * k)))
               <= isd / 2 for k in range(3))


def sector_gain_db(phi_deg):
    phi = (np.asarray(phi_deg) + 180.0) % 360.0 - 180.0
    return -np.minimum(12.0 * (phi / SECTOR_BEAMWIDTH_DEG) ** 2, SECTOR_FRONT_BACK_DB)


def pathloss_reference_db(cfg: SimConfig) -> float:
    """Intercept that puts the cell-vertex SNR at ``edge_snr_db``.

    The SNR is per receive antenna and per PRB with ``P_U_max`` spread over
    the whole band.
    """
    r_edge = cfg.isd_m / SQ3
    per_prb = cfg.p_u_max_dbm - 10 * math.log10(cfg.n_rbg)
    return per_prb - cfg.noise_dbm_per_prb - cfg.edge_snr_db \
        - 10 * cfg.pathloss_exponent * math.log10(r_edge)


@dataclass
class Geometry:
    ue_pos: np.ndarray      # (N, 2) metres
    serving: np.ndarray     # (N,) cell index
    loss_db: np.ndarray     # (N, n_cells) total link loss incl. shadowing and pattern
    distance: np.ndarray    # (N, n_cells) wraparound distance to each cell's site

    @property
    def pathloss_db(self) -> np.ndarray:
        """Loss to the serving cell (the OLPC pathloss estimate)."""
        return self.loss_db[np.arange(self.serving.size), self.serving]

    def ues_of(self, cell: int) -> np.ndarray:
        return np.flatnonzero(self.serving == cell)


def _drop_ue(rng, isd, min_d, boresight):
    r_max = isd / SQ3
    while True:
        r = r_max * math.sqrt(rng.uniform())
        a = rng.uniform(0.0, 2 * math.pi)
        xy = np.array([r * math.cos(a), r * math.sin(a)])
        if r < min_d or not in_hexagon(xy, isd):
            continue
        if boresight is not None:
            d = (math.degrees(a) - boresight + 180.0) % 360.0 - 180.0
            if abs(d) > 60.0:
                continue
        return xy


def build_geometry(cfg: SimConfig, drop: int) -> Geometry:
    n_sites = 1 if cfg.n_cells == 1 else 7
    per_site = cfg.n_cells // n_sites
    sites = site_positions(n_sites, cfg.isd_m)
    shifts = wrap_shifts(n_sites, cfg.isd_m)
    pl0 = pathloss_reference_db(cfg)

    pos, serving, shadow = [], [], []
    for cell in range(cfg.n_cells):
        site, sector = divmod(cell, per_site)
        bore = SECTOR_BORESIGHT_DEG[sector] if per_site == 3 else None
        for u in range(cfg.ues_per_cell):
            rng = stream(cfg, drop, cell, u, 0)
            pos.append(sites[site] + _drop_ue(rng, cfg.isd_m, cfg.min_distance_m, bore))
            serving.append(cell)
            # one shadowing value per (UE, site): sectors of a site share it
            shadow.append(cfg.shadowing_db * rng.standard_normal(n_sites))
    pos = np.array(pos)
    shadow = np.array(shadow)

    n = pos.shape[0]
    loss = np.empty((n, cfg.n_cells))
    dist = np.empty((n, cfg.n_cells))
    for cell in range(cfg.n_cells):
        site, sector = divmod(cell, per_site)
        images = sites[site][None, :] + shifts                     # (n_img, 2)
        vec = pos[:, None, :] - images[None, :, :]                 # (n, n_img, 2)
        d = np.linalg.norm(vec, axis=2)
        k = np.argmin(d, axis=1)
        dmin = np.maximum(d[np.arange(n), k], cfg.min_distance_m)
        v = vec[np.arange(n), k]
        gain = 0.0
        if per_site == 3:
            phi = np.degrees(np.arctan2(v[:, 1], v[:, 0])) - SECTOR_BORESIGHT_DEG[sector]
            gain = sector_gain_db(phi)
        dist[:, cell] = dmin
        loss[:, cell] = pl0 + 10 * cfg.pathloss_exponent * np.log10(dmin) \
            + shadow[:, site] - gain
    return Geometry(pos, np.array(serving), loss, dist)


def _ar1_rbg(rng, n_links, n_rbg, shape, rho):
    """Unit-variance CN blocks with ``E[h_g h_g'^*] = rho^|g-g'|``."""
    def cn(*s):
        return (rng.standard_normal(s) + 1j * rng.standard_normal(s)) / math.sqrt(2.0)
    out = np.empty((n_links, n_rbg) + shape, dtype=complex)
    out[:, 0] = cn(n_links, *shape)
    innov = math.sqrt(max(0.0, 1.0 - rho * rho))
    for g in range(1, n_rbg):
        out[:, g] = rho * out[:, g - 1] + innov * cn(n_links, *shape)
    return out


class ChannelStream:
    """Per-epoch channels ``H[u, c, g]`` (``n_B x n_U``) for every UE-cell link.

    Epochs must be requested in increasing order; each call advances every
    UE's generator by one epoch of fading.
    """

    def __init__(self, cfg: SimConfig, geometry: Geometry, drop: int):
        self.cfg = cfg
        self.geometry = geometry
        n = geometry.serving.size
        self._rngs: List[np.random.Generator] = []
        for u in range(n):
            cell = int(geometry.serving[u])
            k = u - int(np.flatnonzero(geometry.serving == cell)[0])
            self._rngs.append(stream(cfg, drop, cell, k, 1))
        self._amp = np.sqrt(10.0 ** (-geometry.loss_db / 10.0))   # (n, n_cells)
        self._state = None
        self._epoch = -1

    def epoch(self, e: int) -> np.ndarray:
        cfg = self.cfg
        if e < self._epoch:
            raise ValueError("epochs must be requested in order")
        shape = (cfg.n_b, cfg.n_u)
        rho_t = cfg.time_correlation
        while self._epoch < e:
            fresh = np.stack([_ar1_rbg(rng, cfg.n_cells, cfg.n_rbg, shape, cfg.freq_correlation)
                              for rng in self._rngs])          # (n, n_cells, n_rbg, n_B, n_U)
            if self._state is None:
                self._state = fresh
            else:
                self._state = rho_t * self._state + math.sqrt(1 - rho_t**2) * fresh
            self._epoch += 1
        return self._amp[:, :, None, None, None] * self._state


def generate_channels(cfg: SimConfig, drop: int):
    """First-epoch channels and the geometry of one drop."""
    geo = build_geometry(cfg, drop)
    return ChannelStream(cfg, geo, drop).epoch(0), geo
