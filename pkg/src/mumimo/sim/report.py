"""Aggregation across drops and the CSV artifacts of a run.

Numbers are written with ``repr``-exact formatting so two runs with the same
configuration produce byte-identical files.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Sequence

import numpy as np

from .engine import SlotMetrics

CI_Z90 = 1.645
CDF_QUANTITIES = ("power_dbm", "n_prb", "rank", "cell_layers")


def _fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isinf(x):
        return "-inf" if x < 0 else "inf"
    return repr(x)


def to_dbm(p, noise_dbm: float) -> np.ndarray:
    """Noise-normalized linear power to dBm; zero maps to ``-inf``."""
    p = np.asarray(p, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(p > 0, 10.0 * np.log10(np.where(p > 0, p, 1.0)) + noise_dbm, -np.inf)


def mean_ci(values: Sequence[float]):
    """Mean and 90% normal-approximation half-width over drop means."""
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        return float(v.mean()), 0.0
    return float(v.mean()), float(CI_Z90 * v.std(ddof=1) / math.sqrt(v.size))


def empirical_cdf(values) -> np.ndarray:
    """Sorted unique values with their percentile ranks (0-100]."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        return np.zeros((0, 2))
    uniq, counts = np.unique(v, return_counts=True)
    return np.column_stack([uniq, 100.0 * np.cumsum(counts) / v.size])


@dataclass
class SchemeSummary:
    scheme: str
    gm_mean: float
    gm_ci90: float
    am_mean: float
    am_ci90: float
    power_dbm_mean: float
    n_drops: int
    drop_gm: List[float] = field(default_factory=list)
    drop_am: List[float] = field(default_factory=list)


@dataclass
class Report:
    summaries: Dict[str, SchemeSummary]
    cdfs: Dict[str, Dict[str, np.ndarray]]  # quantity -> scheme -> (value, percentile)

    def best_baseline(self, exclude=("proposed",)) -> SchemeSummary:
        rest = [s for k, s in self.summaries.items() if k not in exclude]
        return max(rest, key=lambda s: s.gm_mean)


def aggregate(drops: List[List[SlotMetrics]], noise_dbm: float) -> Report:
    """Per-scheme means of per-slot GM/AM over slots, then over drops."""
    per: Dict[str, Dict[int, List[SlotMetrics]]] = {}
    for slots in drops:
        for m in slots:
            per.setdefault(m.scheme, {}).setdefault(m.drop, []).append(m)
    summaries, cdfs = {}, {q: {} for q in CDF_QUANTITIES}
    for scheme, by_drop in per.items():
        keys = sorted(by_drop)
        gm = [float(np.mean([m.gm for m in by_drop[d]])) for d in keys]
        am = [float(np.mean([m.am for m in by_drop[d]])) for d in keys]
        ms = [m for d in keys for m in by_drop[d]]
        power = np.concatenate([m.power for m in ms])
        mean_p = float(np.mean(power))
        g_mean, g_ci = mean_ci(gm)
        a_mean, a_ci = mean_ci(am)
        summaries[scheme] = SchemeSummary(
            scheme, g_mean, g_ci, a_mean, a_ci,
            float(to_dbm(mean_p, noise_dbm)), len(keys), gm, am)
        cdfs["power_dbm"][scheme] = empirical_cdf(to_dbm(power, noise_dbm))
        cdfs["n_prb"][scheme] = empirical_cdf(np.concatenate([m.n_prb for m in ms]))
        cdfs["rank"][scheme] = empirical_cdf(np.concatenate([m.ranks for m in ms]))
        cdfs["cell_layers"][scheme] = empirical_cdf(np.concatenate([m.cell_layers for m in ms]))
    return Report(summaries, cdfs)


METRICS_HEADER = ["drop", "slot", "cell", "ue", "scheme", "rate", "power_dbm", "n_prb", "rank"]
SUMMARY_HEADER = ["scheme", "gm_mean", "gm_ci90", "am_mean", "am_ci90", "power_dbm_mean",
                  "n_drops"]


def write_metrics(path: Path, drops: List[List[SlotMetrics]], noise_dbm: float):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        for slots in drops:
            for m in slots:
                dbm = to_dbm(m.power, noise_dbm)
                for u in range(m.rates.size):
                    w.writerow([m.drop, m.slot, int(m.cell[u]), u, m.scheme, _fmt(m.rates[u]),
                                _fmt(dbm[u]), int(m.n_prb[u]), int(m.ranks[u])])


def write_summary(path: Path, report: Report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_HEADER)
        for s in report.summaries.values():
            w.writerow([s.scheme, _fmt(s.gm_mean), _fmt(s.gm_ci90), _fmt(s.am_mean),
                        _fmt(s.am_ci90), _fmt(s.power_dbm_mean), s.n_drops])


def write_cdfs(out_dir: Path, report: Report) -> List[Path]:
    paths = []
    for q, per_scheme in report.cdfs.items():
        path = Path(out_dir) / f"cdf_{q}.csv"
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["scheme", "value", "percentile"])
            for scheme, table in per_scheme.items():
                for value, pct in table:
                    w.writerow([scheme, _fmt(value), _fmt(pct)])
        paths.append(path)
    return paths


def read_summary(path) -> Dict[str, dict]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return {r["scheme"]: {k: (v if k == "scheme" else float(v)) for k, v in r.items()}
            for r in rows}
