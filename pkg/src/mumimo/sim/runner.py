"""Multi-drop driver.  Drops are independent and may run in worker processes;
results are always collected in drop order so the outputs do not depend on
``jobs``."""

from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import List

from .config import SimConfig
from .engine import SlotMetrics, resolve_schemes, run_drop
from .report import Report, aggregate, write_cdfs, write_metrics, write_summary


def _drop_job(args):
    cfg, drop, schemes = args
    return run_drop(cfg, drop, schemes)


def simulate(cfg: SimConfig, jobs: int = 1) -> List[List[SlotMetrics]]:
    schemes = resolve_schemes(cfg)
    tasks = [(cfg, d, schemes) for d in range(cfg.drops)]
    if jobs <= 1 or cfg.drops == 1:
        return [_drop_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, cfg.drops)) as pool:
        return list(pool.map(_drop_job, tasks))


def write_outputs(out_dir, cfg: SimConfig, drops: List[List[SlotMetrics]]) -> Report:
    out_dir = Path(out_dir)
    report = aggregate(drops, cfg.noise_dbm_per_prb)
    write_metrics(out_dir / "metrics.csv", drops, cfg.noise_dbm_per_prb)
    write_summary(out_dir / "summary.csv", report)
    write_cdfs(out_dir, report)
    return report
