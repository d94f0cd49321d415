"""Command-line driver: ``lpexit {simulate,lsmc,pde,sweep}``.

Every run writes its artifacts and a ``manifest.json`` (full resolved config,
seed, package version, file list and status) under ``--out``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import DEFAULT_SEED, PRESETS, RunConfig, parse_config
from .experiments import (
    exit_histogram,
    exit_scatter,
    run_sweep,
    table_scenarios,
    write_exit_scatter,
)
from .lsmc import backward_induct, exit_statistics
from .model import ConfigError, DomainError
from .pde import (
    RiskAversion,
    extract_policy,
    solve_qvi,
    solve_qvi_risk_averse,
    write_policy_csv,
    write_value_csv,
)
from .simulation import simulate, write_csv, write_quantiles_csv

log = logging.getLogger("lpexit")

SUMMARY_KEYS = ("v0", "stderr", "mean_tau", "mean_R", "mean_IL", "std_tau", "std_R", "std_IL")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


class Run:
    """Tracks the files a command writes so the manifest can list them."""

    def __init__(self, command: str, cfg: RunConfig, out: Path):
        self.command, self.cfg, self.out = command, cfg, out
        self.files: list[str] = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        self.files.append(name)
        return self.out / name

    def manifest(self, status: str, error: str | None = None, extra: dict | None = None) -> Path:
        doc = {
            "command": self.command,
            "status": status,
            "version": __version__,
            "seed": self.cfg.sim.seed,
            "config": self.cfg.as_dict(),
            "files": self.files,
        }
        if error:
            doc["error"] = error
        if extra:
            doc.update(extra)
        target = self.out / "manifest.json"
        target.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
        return target


def cmd_simulate(run: Run, args) -> dict:
    c = run.cfg
    bundle = simulate(c.pool, c.market, c.fee, c.sim)
    write_csv(bundle, run.path("paths.csv"), stride=args.stride, max_paths=args.max_paths)
    if bundle.n_paths >= 100:
        write_quantiles_csv(bundle, run.path("quantiles.csv"))
    return {"n_paths": bundle.n_paths, "clipped_probabilities": bundle.clipped_probabilities}


def cmd_lsmc(run: Run, args) -> dict:
    c = run.cfg
    bundle = simulate(c.pool, c.market, c.fee, c.sim)
    res = backward_induct(bundle, c.lsmc)
    st = exit_statistics(res, bundle)
    summary = {"v0": res.v0_estimate, "stderr": res.v0_stderr, **st.as_dict()}
    summary = {k: summary[k] for k in SUMMARY_KEYS} | {
        "mean_perf": st.mean_perf, "std_perf": st.std_perf, "n_paths": st.n_paths,
    }
    run.path("summary.json").write_text(json.dumps(_jsonable(summary), indent=2) + "\n")

    counts, edges = exit_histogram(res, c.market.horizon)
    np.savetxt(run.path("exit_histogram.csv"),
               np.column_stack([edges[:-1], edges[1:], counts]),
               delimiter=",", header="t_lo,t_hi,count", comments="", fmt="%.17g")
    write_exit_scatter(exit_scatter(bundle, res), run.path("exit_scatter.csv"))
    if c.lsmc.basis == "poly":
        width = len(next(co for co in res.coefficients if co is not None))
        rows = [[bundle.times[i], *co] for i, co in enumerate(res.coefficients) if co is not None]
        np.savetxt(run.path("coefficients.csv"), np.array(rows), delimiter=",",
                   header="t," + ",".join(f"c{k}" for k in range(width)), comments="",
                   fmt="%.17g")
    return summary


def cmd_pde(run: Run, args) -> dict:
    c = run.cfg
    vg = solve_qvi(c.pool, c.market, c.fee, c.grid)
    write_value_csv(vg, run.path("value_grid.csv"))
    write_policy_csv(extract_policy(vg), run.path("policy.csv"))
    out = {"v0": float(vg.value_at(0.0, c.pool.y0, c.market.s0)), "substeps": vg.substeps}
    if c.risk is not None:
        va = solve_qvi_risk_averse(c.pool, c.market, c.fee, c.grid, c.risk)
        write_value_csv(va, run.path("value_grid_risk_averse.csv"))
        write_policy_csv(extract_policy(va), run.path("policy_risk_averse.csv"))
        out["v0_risk_averse"] = float(va.value_at(0.0, c.pool.y0, c.market.s0))
        out["psi"] = c.risk.psi
    run.path("pde_summary.json").write_text(json.dumps(_jsonable(out), indent=2) + "\n")
    return out


def cmd_sweep(run: Run, args) -> dict:
    c = run.cfg
    scenarios = table_scenarios(c.sweep.target, c.pool, c.market, c.fee, c.sim, c.lsmc,
                                c.sweep.multipliers)
    report = run_sweep(scenarios, seed=c.sim.seed, seed_mode=c.sweep.seed_mode,
                       progress=lambda r: log.info("row %s done", r.label))
    report.write_csv(run.path("sweep.csv"))
    run.path("sweep.txt").write_text(report.render() + "\n")
    failed = [r.label for r in report.rows if not r.ok]
    return {"rows": len(report), "failed_rows": failed}


COMMANDS = {"simulate": cmd_simulate, "lsmc": cmd_lsmc, "pde": cmd_pde, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="flat key = value config file")
    common.add_argument("--preset", choices=PRESETS, help="parameter preset (default paper-calibrated)")
    common.add_argument("--seed", type=int, help=f"master seed (default {DEFAULT_SEED})")
    common.add_argument("--out", type=Path, help="output directory (default from config, 'out')")
    common.add_argument("--profile", choices=("paper", "desk"), help="path-count profile")
    common.add_argument("--psi", type=float, help="risk aversion; enables the risk-averse solve")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="lpexit", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")
    p = sub.add_parser("simulate", parents=[common], help="simulate pool paths")
    p.add_argument("--stride", type=int, default=10, help="write every k-th time step")
    p.add_argument("--max-paths", type=int, default=100, help="number of paths written")
    sub.add_parser("lsmc", parents=[common], help="fit the exit rule by regression Monte Carlo")
    sub.add_parser("pde", parents=[common], help="solve the exit problem on a grid")
    sub.add_parser("sweep", parents=[common], help="one-parameter multiplier sweep")
    return parser


def resolve_config(args) -> RunConfig:
    text = args.config.read_text() if args.config else ""
    cfg = parse_config(text, preset_name=args.preset, profile=args.profile)
    if args.seed is not None:
        cfg = replace(cfg, sim=replace(cfg.sim, seed=args.seed))
    if args.psi is not None:
        cfg = replace(cfg, risk=RiskAversion(args.psi))
    if args.out is not None:
        cfg = replace(cfg, output_dir=str(args.out))
    return cfg


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"lpexit: configuration error: {exc}", file=sys.stderr)
        return 2
    run = Run(args.command, cfg, Path(cfg.output_dir))
    started = time.perf_counter()
    try:
        result = COMMANDS[args.command](run, args)
    except (ConfigError, DomainError, ArithmeticError, ValueError, MemoryError) as exc:
        run.manifest("incomplete", error=f"{type(exc).__name__}: {exc}")
        print(f"lpexit {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    options = {k: getattr(args, k) for k in ("stride", "max_paths") if hasattr(args, k)}
    run.manifest("complete", extra={"result": result, "options": options,
                                    "elapsed_seconds": round(time.perf_counter() - started, 3)})
    print(json.dumps(_jsonable(result), indent=2))
    return 0


if __name__ == "__main__":
    sys.exit(main())
