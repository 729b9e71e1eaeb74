"""Command-line front end.

    mumimo simulate        --config run.yaml --out results/ [--seed N] [--jobs N] [--force]
    mumimo solve           problem.txt [--max-iterations N]
    mumimo oracle-compare  --config run.yaml [--instances N] [--out DIR] [--force]
    mumimo quantize-report --config run.yaml --out DIR [--force]

Exit codes: 0 success, 1 a check failed (oracle median below threshold),
2 bad input (config, instance file, existing outputs), 3 simulation failure.
"""

import argparse
import csv
import dataclasses
import json
import logging
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .solver import BACKEND, ProblemFormatError, SolverConfig, load_problem, solve
from .sim.config import ConfigError, SimConfig, from_mapping, load_config, to_mapping

log = logging.getLogger("mumimo")

EXIT_CHECK = 1
EXIT_INPUT = 2
EXIT_SIM = 3


class CliError(Exception):
    def __init__(self, msg, code=EXIT_INPUT):
        super().__init__(msg)
        self.code = code


def git_describe() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent, capture_output=True,
                             text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def _config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else from_mapping({})
    if getattr(args, "seed", None) is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    return cfg


def _prepare_out(out_dir: Path, outputs, force: bool) -> Path:
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"output directory {out_dir}: cannot create ({exc.strerror})")
    if not out_dir.is_dir():
        raise CliError(f"output directory {out_dir}: not a directory")
    existing = [p for p in outputs if (out_dir / p).exists()]
    if existing and not force:
        raise CliError(f"output directory {out_dir} already holds {', '.join(sorted(existing))}; "
                       "pass --force to overwrite")
    probe = out_dir / ".write_probe"
    try:
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        raise CliError(f"output directory {out_dir}: not writable ({exc.strerror})")
    return out_dir


class Manifest:
    """Written before any result file and completed with the wall time."""

    def __init__(self, out_dir: Path, command: str, args, cfg: SimConfig):
        self.path = out_dir / "manifest.json"
        self.data = {
            "command": command,
            "config_path": str(Path(args.config).resolve()) if args.config else None,
            "output_dir": str(out_dir.resolve()),
            "git_describe": git_describe(),
            "version": __version__,
            "kernel_backend": BACKEND,
            "seed": cfg.seed,
            "wall_time": None,
            "config": to_mapping(cfg),
        }
        self._t0 = time.perf_counter()
        self._write()

    def _write(self):
        self.path.write_text(json.dumps(self.data, indent=2, sort_keys=True) + "\n")

    def finish(self, **extra):
        self.data["wall_time"] = round(time.perf_counter() - self._t0, 3)
        self.data.update(extra)
        self._write()


# --- subcommands ----------------------------------------------------------------

SIM_OUTPUTS = ("manifest.json", "metrics.csv", "summary.csv", "cdf_power_dbm.csv",
               "cdf_n_prb.csv", "cdf_rank.csv", "cdf_cell_layers.csv")


def cmd_simulate(args) -> int:
    from .sim.engine import SimulationError, resolve_schemes
    from .sim.runner import simulate, write_outputs

    cfg = _config(args)
    resolve_schemes(cfg)  # reject unknown scheme names before touching the disk
    out = _prepare_out(Path(args.out), SIM_OUTPUTS, args.force)
    manifest = Manifest(out, "simulate", args, cfg)
    try:
        drops = simulate(cfg, args.jobs)
    except SimulationError as exc:
        raise CliError(f"simulation failed: {exc}", EXIT_SIM)
    report = write_outputs(out, cfg, drops)
    errors = sum(len(m.errors) for slots in drops for m in slots)
    manifest.finish(slot_errors=errors)
    for s in report.summaries.values():
        print(f"{s.scheme:28s} GM {s.gm_mean:9.4f} +- {s.gm_ci90:.4f}   "
              f"AM {s.am_mean:9.4f} +- {s.am_ci90:.4f}   power {s.power_dbm_mean:7.2f} dBm")
    if errors:
        print(f"warning: {errors} slot-cell allocations failed (see metrics and log)",
              file=sys.stderr)
    return 0


def cmd_solve(args) -> int:
    try:
        problem = load_problem(args.instance)
    except FileNotFoundError:
        raise CliError(f"{args.instance}: no such file")
    except ProblemFormatError as exc:
        raise CliError(f"{args.instance}: {exc}")
    sol = solve(problem, SolverConfig(max_iterations=args.max_iterations))
    print(f"status: {sol.status}")
    print("x: " + " ".join(repr(float(v)) for v in sol.x))
    print(f"objective: {sol.objective_value!r}")
    print(f"kkt_residual: {sol.kkt_residual:.3e}")
    print(f"iterations: {sol.iterations_used}")
    if sol.status == "iteration-capped":
        print("warning: iteration cap reached before the KKT tolerance", file=sys.stderr)
    return 0 if sol.ok else EXIT_CHECK


def cmd_oracle_compare(args) -> int:
    from .sim.studies import oracle_compare

    cfg = _config(args)
    n = cfg.oracle.instances if args.instances is None else args.instances
    if n < 1:
        raise CliError(f"--instances must be at least 1, got {n}")
    out = None
    if args.out:
        out = _prepare_out(Path(args.out), ("manifest.json", "oracle.csv"), args.force)
        manifest = Manifest(out, "oracle-compare", args, cfg)
    res = oracle_compare(cfg, n)
    if out is not None:
        with open(out / "oracle.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["instance", "ratio"])
            for k, r in enumerate(res.ratios):
                w.writerow([k, repr(float(r))])
        manifest.finish(median=res.median, skipped=res.skipped)
    if res.ratios.size:
        q = np.percentile(res.ratios, [0, 10, 50, 90, 100])
        print(f"instances: {res.ratios.size} compared, {res.skipped} without a full-service optimum")
        print("ratio min/p10/median/p90/max: " + " ".join(f"{v:.4f}" for v in q))
    else:
        print(f"no comparable instances ({res.skipped} skipped)")
    verdict = "PASS" if res.passed else "FAIL"
    print(f"{verdict}: median {res.median:.4f} vs threshold {res.threshold:.4f}")
    return 0 if res.passed else EXIT_CHECK


def cmd_quantize_report(args) -> int:
    from .sim.studies import quantize_study

    cfg = _config(args)
    out = _prepare_out(Path(args.out), ("manifest.json", "quantize.csv"), args.force)
    manifest = Manifest(out, "quantize-report", args, cfg)
    try:
        rows = quantize_study(cfg, drop=0)
    except RuntimeError as exc:
        raise CliError(f"quantize study failed: {exc}", EXIT_SIM)
    with open(out / "quantize.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["mode", "levels", "gm", "overhead_bits"])
        for r in rows:
            w.writerow([r.mode, r.levels, repr(float(r.gm)), r.overhead_bits])
    manifest.finish()
    for r in rows:
        print(f"{r.mode:7s} {r.levels:5d}  GM {r.gm:9.4f}  overhead {r.overhead_bits} bits")
    return 0


# --- entry point ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mumimo", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required):
        sp.add_argument("--config", help="YAML run configuration (desk defaults if omitted)")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--force", action="store_true", help="overwrite existing outputs")

    sp = sub.add_parser("simulate", help="run the multi-cell simulation")
    common(sp, True)
    sp.add_argument("--jobs", type=int, default=1, help="worker processes over drops")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("solve", help="solve one dumped power-allocation problem")
    sp.add_argument("instance", help="problem file in the dump format")
    sp.add_argument("--max-iterations", type=int, default=SolverConfig.max_iterations)
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("oracle-compare", help="allocator vs exhaustive search on tiny instances")
    common(sp, False)
    sp.add_argument("--instances", type=int, help="number of instances (config default)")
    sp.add_argument("--jobs", type=int, default=1, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_oracle_compare)

    sp = sub.add_parser("quantize-report", help="GM and overhead per power-command granularity")
    common(sp, True)
    sp.add_argument("--jobs", type=int, default=1, help=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_quantize_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "jobs", 1) < 1:
        print("error: --jobs must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: config field '{exc.key}': {exc}", file=sys.stderr)
        return EXIT_INPUT
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
