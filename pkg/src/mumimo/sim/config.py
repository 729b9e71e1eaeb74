"""Simulation configuration with a closed YAML schema.

A config file is a flat mapping (plus the ``olpc`` and ``oracle``
sub-mappings).  ``profile`` selects the defaults every other key overrides:
``desk`` is small enough for a laptop, ``full`` matches the full-scale
parameter table.  Unknown keys are rejected.
"""

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Tuple

import yaml


LINK_MODELS = ("capped", "outage")


class ConfigError(ValueError):
    """A config value or key is invalid; ``key`` names the offending field."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass(frozen=True)
class OlpcGrid:
    p0_dbm: Tuple[float, ...] = (-85.0, -90.0, -100.0, -110.0)
    alpha: Tuple[float, ...] = (0.85, 1.0)


@dataclass(frozen=True)
class OracleSettings:
    instances: int = 200
    threshold: float = 0.9
    n_ue: int = 2
    n_rbg: int = 2
    n_b: int = 8
    n_u: int = 2
    p_u_max: float = 10.0     # linear, in units of the noise power
    p_b_max: float = 20.0


@dataclass(frozen=True)
class SimConfig:
    profile: str = "desk"
    link: str = "uplink"              # uplink | downlink
    scenario: str = "isolated"        # isolated | ici
    schemes: Tuple[str, ...] = ("all",)
    seed: int = 1
    drops: int = 3
    slots_per_drop: int = 20
    csi_period_slots: int = 20
    n_cells: int = 7
    ues_per_cell: int = 4
    n_b: int = 16
    n_u: int = 2
    n_rbg: int = 8
    n_rbg_min: int = 0                # 0 picks the link default (4 UL, 2 DL)
    T: int = 14
    p_b_max_dbm: float = 36.0
    p_u_max_dbm: float = 23.0
    noise_dbm_per_prb: float = -111.4
    r_min: float = 0.23
    r_max: float = 8.0
    scale_c: float = 0.5
    mcs_max_se: float = 8.0           # highest MCS efficiency, caps every realized layer rate
    link_model: str = "capped"        # capped | outage
    gamma: Tuple[float, ...] = (0.5, 0.1, 0.01)
    olpc: OlpcGrid = field(default_factory=OlpcGrid)
    uniform_power: bool = True
    solver_iterations: int = 10
    isd_m: float = 500.0
    min_distance_m: float = 35.0
    pathloss_exponent: float = 3.7
    edge_snr_db: float = 5.0
    shadowing_db: float = 6.0
    freq_correlation: float = 0.7
    time_correlation: float = 0.9
    dci_levels: Tuple[int, ...] = (16, 1024)
    dci_range_db: float = 40.0
    oracle: OracleSettings = field(default_factory=OracleSettings)

    def __post_init__(self):
        _validate(self)

    @property
    def rbg_min(self) -> int:
        if self.n_rbg_min:
            return self.n_rbg_min
        return min(self.n_rbg, 4 if self.link == "uplink" else 2)

    @property
    def p_u_max(self) -> float:
        """UE budget in linear units of the per-PRB thermal noise."""
        return 10.0 ** ((self.p_u_max_dbm - self.noise_dbm_per_prb) / 10.0)

    @property
    def p_b_max(self) -> float:
        return 10.0 ** ((self.p_b_max_dbm - self.noise_dbm_per_prb) / 10.0)

    @property
    def p_ant(self) -> float:
        return self.p_b_max / self.n_b

    @property
    def n_ue_total(self) -> int:
        return self.n_cells * self.ues_per_cell


PROFILES = {
    "desk": {},
    "full": dict(
        n_cells=21, ues_per_cell=8, n_b=128, n_u=4, n_rbg=24, drops=10,
        slots_per_drop=100,
    ),
}

_NESTED = {"olpc": OlpcGrid, "oracle": OracleSettings}


def _check(cond, key, msg):
    if not cond:
        raise ConfigError(key, msg)


def _validate(c: SimConfig):
    _check(c.profile in PROFILES, "profile", f"must be one of {sorted(PROFILES)}")
    _check(c.link in ("uplink", "downlink"), "link", "must be uplink or downlink")
    _check(c.scenario in ("isolated", "ici"), "scenario", "must be isolated or ici")
    for key in ("drops", "slots_per_drop", "csi_period_slots", "ues_per_cell", "n_b",
                "n_u", "n_rbg", "T", "solver_iterations"):
        _check(getattr(c, key) >= 1, key, f"must be a positive integer, got {getattr(c, key)}")
    _check(c.n_cells in (1, 7, 21), "n_cells", "must be 1, 7 or 21")
    _check(0 <= c.n_rbg_min <= c.n_rbg, "n_rbg_min", "must lie in [0, n_rbg]")
    for key in ("p_b_max_dbm", "p_u_max_dbm", "noise_dbm_per_prb", "edge_snr_db"):
        _check(math.isfinite(getattr(c, key)), key, "must be finite")
    _check(0 < c.r_min < c.r_max, "r_min", f"need 0 < r_min < r_max, got {c.r_min}, {c.r_max}")
    _check(c.scale_c > 0, "scale_c", "must be positive")
    _check(c.mcs_max_se > 0, "mcs_max_se", "must be positive")
    _check(c.link_model in LINK_MODELS, "link_model", f"must be one of {LINK_MODELS}")
    _check(len(c.gamma) > 0 and all(0 < g <= 1 for g in c.gamma), "gamma",
           "entries must lie in (0, 1]")
    _check(all(0 <= a <= 1 for a in c.olpc.alpha), "olpc.alpha",
           f"entries must lie in [0, 1], got {list(c.olpc.alpha)}")
    _check(len(c.olpc.p0_dbm) > 0 and all(math.isfinite(p) for p in c.olpc.p0_dbm),
           "olpc.p0_dbm", "needs finite entries")
    _check(0 <= c.freq_correlation <= 1, "freq_correlation", "must lie in [0, 1]")
    _check(0 <= c.time_correlation <= 1, "time_correlation", "must lie in [0, 1]")
    _check(c.isd_m > 0 and 0 < c.min_distance_m < c.isd_m / 2, "min_distance_m",
           "must be positive and below half the inter-site distance")
    _check(c.pathloss_exponent > 0, "pathloss_exponent", "must be positive")
    _check(c.shadowing_db >= 0, "shadowing_db", "must be non-negative")
    _check(all(L >= 2 for L in c.dci_levels), "dci_levels", "entries must be >= 2")
    _check(c.dci_range_db > 0, "dci_range_db", "must be positive")
    _check(0 <= c.seed < 2**64, "seed", "must be a 64-bit unsigned integer")
    o = c.oracle
    _check(o.instances >= 1, "oracle.instances", "must be at least 1")
    _check(0 < o.threshold <= 1, "oracle.threshold", "must lie in (0, 1]")
    _check(1 <= o.n_ue <= 3 and 1 <= o.n_rbg <= 3, "oracle.n_ue",
           "oracle instances are limited to 3 UEs x 3 RBGs")
    _check(o.n_ue * o.n_u <= o.n_b, "oracle.n_b", "must fit every UE at full rank")
    _check(o.p_u_max > 0 and o.p_b_max > 0, "oracle.p_u_max", "budgets must be positive")


def _coerce(cls, key, value, prefix=""):
    """Convert a YAML value to the declared type of ``cls.key``."""
    name = prefix + key
    fields = {f.name: f for f in dataclasses.fields(cls)}
    if key not in fields:
        raise ConfigError(name, "unknown key")
    default = fields[key].default
    if default is dataclasses.MISSING:
        default = fields[key].default_factory()
    if key in _NESTED and cls is SimConfig:
        _check(isinstance(value, dict), name, "must be a mapping")
        sub = {k: _coerce(_NESTED[key], k, v, name + ".") for k, v in value.items()}
        return _NESTED[key](**sub)
    try:
        if isinstance(default, bool):
            _check(isinstance(value, bool), name, "must be true or false")
            return value
        if isinstance(default, int):
            _check(isinstance(value, int) and not isinstance(value, bool), name,
                   f"must be an integer, got {value!r}")
            return value
        if isinstance(default, float):
            _check(isinstance(value, (int, float)) and not isinstance(value, bool), name,
                   f"must be a number, got {value!r}")
            return float(value)
        if isinstance(default, str):
            _check(isinstance(value, str), name, f"must be a string, got {value!r}")
            return value
        if isinstance(default, tuple):
            items = value if isinstance(value, list) else [value]
            kind = type(default[0]) if default else str
            if kind is float:
                _check(all(isinstance(v, (int, float)) and not isinstance(v, bool)
                           for v in items), name, "entries must be numbers")
                return tuple(float(v) for v in items)
            if kind is int:
                _check(all(isinstance(v, int) for v in items), name, "entries must be integers")
            else:
                _check(all(isinstance(v, str) for v in items), name, "entries must be strings")
            return tuple(items)
    except ConfigError:
        raise
    raise ConfigError(name, f"unsupported value {value!r}")  # pragma: no cover


def from_mapping(data: dict) -> SimConfig:
    data = dict(data or {})
    profile = data.get("profile", "desk")
    _check(isinstance(profile, str) and profile in PROFILES, "profile",
           f"must be one of {sorted(PROFILES)}")
    kwargs = dict(PROFILES[profile])
    for key, value in data.items():
        kwargs[key] = _coerce(SimConfig, key, value)
    return SimConfig(**kwargs)


def load_config(path) -> SimConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"YAML parse error: {exc}") from exc
    if data is not None and not isinstance(data, dict):
        raise ConfigError("<file>", "top level must be a mapping")
    return from_mapping(data)


def to_mapping(cfg: SimConfig) -> dict:
    """Plain-data view used for the run manifest."""
    out = dataclasses.asdict(cfg)
    for k, v in list(out.items()):
        if isinstance(v, tuple):
            out[k] = list(v)
        elif isinstance(v, dict):
            out[k] = {kk: list(vv) if isinstance(vv, tuple) else vv for kk, vv in v.items()}
    return out
