"""Parameter sweeps: simulate, fit the exit rule and aggregate exit statistics.

A :class:`Scenario` is a base setup plus at most one parameter multiplier
(volatility, fee level or one of the two intensity slopes). :func:`run_sweep`
turns a list of scenarios into a :class:`SweepReport`, one row per scenario.

By default every row is simulated from the same master seed (common random
numbers), so differences between rows reflect the parameter change rather
than sampling noise. ``seed_mode="independent"`` derives a distinct seed per
row instead.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .lsmc import LsmcConfig, LsmcResult, backward_induct, exit_statistics
from .model import ConfigError, FeeSchedule, MarketParams, PoolConfig
from .simulation import PathBundle, SimConfig, simulate

log = logging.getLogger(__name__)

TABLE_MULTIPLIERS = (1 / 5, 1 / 4, 1 / 3, 1 / 2, 1, 2, 3, 4, 5)
PROFILE_PATHS = {"paper": 10_000, "desk": 2_000}
TARGETS = ("sigma", "fee", "a1", "a2")
SEED_MODES = ("common", "independent")

CSV_HEADER = ("label", "mean_tau", "std_tau", "mean_R", "std_R", "mean_IL", "std_IL",
              "mean_perf", "std_perf", "n_paths", "seed")


def multiplier_label(target: str, factor: float) -> str:
    """``"sigma"``, ``"sigma/4"``, ``"3sigma"`` or ``"1.5sigma"``."""
    frac = Fraction(factor).limit_denominator(100)
    if math.isclose(float(frac), factor, rel_tol=1e-12):
        if frac == 1:
            return target
        if frac.numerator == 1:
            return f"{target}/{frac.denominator}"
        if frac.denominator == 1:
            return f"{frac.numerator}{target}"
    return f"{factor:g}{target}"


@dataclass(frozen=True)
class Scenario:
    """One sweep row: a base setup and an optional multiplier on one parameter."""

    label: str
    pool: PoolConfig
    market: MarketParams
    fee: FeeSchedule
    sim: SimConfig
    lsmc: LsmcConfig = field(default_factory=LsmcConfig)
    target: str | None = None
    factor: float = 1.0

    def __post_init__(self):
        if self.target is not None and self.target not in TARGETS:
            raise ConfigError(f"unknown sweep target {self.target!r}; expected one of {TARGETS}")
        if not (self.factor > 0 and math.isfinite(self.factor)):
            raise ConfigError("multiplier must be a positive finite number")
        self.resolved()

    def resolved(self) -> tuple[MarketParams, FeeSchedule]:
        """Market parameters and fee schedule with the multiplier applied."""
        if self.target is None or self.factor == 1:
            return self.market, self.fee
        if self.target == "fee":
            return self.market, self.fee.scaled(self.factor)
        return self.market.scaled(**{self.target: self.factor}), self.fee


@dataclass(frozen=True)
class SweepRow:
    label: str
    mean_tau: float
    std_tau: float
    mean_R: float
    std_R: float
    mean_IL: float
    std_IL: float
    mean_perf: float
    std_perf: float
    n_paths: int
    seed: int
    v0: float = math.nan
    v0_stderr: float = math.nan
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None

    def stderr(self, name: str) -> float:
        """Standard error of the mean of ``tau``, ``R``, ``IL`` or ``perf``."""
        return getattr(self, f"std_{name}") / math.sqrt(self.n_paths)

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, k) for k in CSV_HEADER)


def _failed_row(label: str, n_paths: int, seed: int, err: str) -> SweepRow:
    nan = math.nan
    return SweepRow(label, nan, nan, nan, nan, nan, nan, nan, nan, n_paths, seed, error=err)


@dataclass
class SweepReport:
    rows: list[SweepRow]
    seed_mode: str = "common"

    def __len__(self):
        return len(self.rows)

    def __getitem__(self, key):
        if isinstance(key, str):
            for row in self.rows:
                if row.label == key:
                    return row
            raise KeyError(key)
        return self.rows[key]

    @property
    def labels(self) -> list[str]:
        return [r.label for r in self.rows]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.rows], dtype=float)

    def write_csv(self, path) -> Path:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for row in self.rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in row.as_tuple()])
        return path

    def render(self) -> str:
        """Aligned text table: means with across-path standard deviations in parentheses."""
        head = f"{'':>10} {'E[tau]':>14} {'E[R_tau]':>22} {'E[IL_tau]':>22}"
        lines = [head]
        for r in self.rows:
            if not r.ok:
                lines.append(f"{r.label:>10}  failed: {r.error}")
                continue
            lines.append(
                f"{r.label:>10} {r.mean_tau:>6.2f} ({r.std_tau:4.2f}) "
                f"{r.mean_R:>11,.0f} ({r.std_R:>8,.0f}) "
                f"{r.mean_IL:>11,.0f} ({r.std_IL:>8,.0f})"
            )
        return "\n".join(lines)


def derive_seed(master: int, index: int) -> int:
    """Seed for row ``index`` in independent mode; stable across runs and platforms."""
    state = np.random.SeedSequence(int(master), spawn_key=(int(index),)).generate_state(2)
    return int(state[0]) << 32 | int(state[1])


def run_scenario(sc: Scenario, seed: int) -> tuple[PathBundle, LsmcResult]:
    market, fee = sc.resolved()
    bundle = simulate(sc.pool, market, fee, replace(sc.sim, seed=seed))
    return bundle, backward_induct(bundle, sc.lsmc)


def run_sweep(scenarios: Sequence[Scenario], seed: int | None = None,
              seed_mode: str = "common",
              progress: Callable[[SweepRow], None] | None = None) -> SweepReport:
    """Simulate, fit and summarise each scenario in order.

    ``seed`` defaults to the first scenario's ``sim.seed``. A scenario that
    raises produces a row with NaN statistics and the error message; the
    remaining rows still run.
    """
    if seed_mode not in SEED_MODES:
        raise ConfigError(f"seed_mode must be one of {SEED_MODES}")
    if not scenarios:
        return SweepReport([], seed_mode)
    master = scenarios[0].sim.seed if seed is None else int(seed)
    rows = []
    for i, sc in enumerate(scenarios):
        row_seed = master if seed_mode == "common" else derive_seed(master, i)
        try:
            bundle, res = run_scenario(sc, row_seed)
            st = exit_statistics(res, bundle)
            row = SweepRow(
                sc.label, st.mean_tau, st.std_tau, st.mean_R, st.std_R, st.mean_IL, st.std_IL,
                st.mean_perf, st.std_perf, st.n_paths, row_seed,
                v0=res.v0_estimate, v0_stderr=res.v0_stderr,
            )
            del bundle, res
        except Exception as exc:  # isolate the row, keep sweeping
            log.error("scenario %s failed: %s", sc.label, exc)
            row = _failed_row(sc.label, sc.sim.n_paths, row_seed, f"{type(exc).__name__}: {exc}")
        rows.append(row)
        if progress is not None:
            progress(row)
    return SweepReport(rows, seed_mode)


def table_scenarios(target: str, pool: PoolConfig, market: MarketParams, fee: FeeSchedule,
                    sim: SimConfig, lsmc: LsmcConfig | None = None,
                    multipliers: Sequence[float] = TABLE_MULTIPLIERS) -> list[Scenario]:
    """One scenario per multiplier of ``target`` around the base setup."""
    lsmc = LsmcConfig() if lsmc is None else lsmc
    return [
        Scenario(multiplier_label(target, f), pool, market, fee, sim, lsmc, target, float(f))
        for f in multipliers
    ]


@dataclass(frozen=True)
class CurvePoint:
    multiplier: float
    mean_perf: float
    std_perf: float
    n_paths: int

    @property
    def stderr(self) -> float:
        return self.std_perf / math.sqrt(self.n_paths)


def performance_curve(fee_multipliers: Sequence[float], pool: PoolConfig, market: MarketParams,
                      fee: FeeSchedule, sim: SimConfig, lsmc: LsmcConfig | None = None,
                      seed: int | None = None, seed_mode: str = "common") -> list[CurvePoint]:
    """Mean LP performance at exit as a function of the fee multiplier.

    A multiplier of zero is allowed and means no fees at all.
    """
    lsmc = LsmcConfig() if lsmc is None else lsmc
    if any(not (f >= 0 and math.isfinite(f)) for f in fee_multipliers):
        raise ConfigError("fee multipliers must be nonnegative and finite")
    scenarios = [
        Scenario(multiplier_label("fee", f) if f > 0 else "no fee",
                 pool, market, fee.scaled(f), sim, lsmc)
        for f in fee_multipliers
    ]
    report = run_sweep(scenarios, seed=seed, seed_mode=seed_mode)
    return [CurvePoint(float(f), r.mean_perf, r.std_perf, r.n_paths)
            for f, r in zip(fee_multipliers, report.rows)]


def exit_scatter(bundle: PathBundle, result: LsmcResult) -> np.ndarray:
    """Per-path exit points, columns ``(tau, S_tau, R_tau - IL_tau)``."""
    idx = result.exit_index
    rows = np.arange(bundle.n_paths)
    return np.column_stack([
        bundle.times[idx], bundle.s_paths[rows, idx], bundle.perf_paths[rows, idx],
    ])


def write_exit_scatter(points: np.ndarray, path) -> Path:
    path = Path(path)
    np.savetxt(path, points, delimiter=",", header="tau,S_tau,perf_tau", comments="",
               fmt="%.17g")
    return path


def exit_histogram(result: LsmcResult, horizon: float,
                   bins: int = 24) -> tuple[np.ndarray, np.ndarray]:
    """Counts of exit times over ``bins`` equal-width bins of ``[0, horizon]``."""
    counts, edges = np.histogram(result.exit_times, bins=np.linspace(0.0, horizon, bins + 1))
    return counts, edges
