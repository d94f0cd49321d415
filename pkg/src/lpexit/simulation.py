"""Monte Carlo paths of the oracle price, pool reserves, fees and impermanent loss.

The oracle follows ``S_t = S_0 + sigma * W_t``. Taker orders arrive with
state-dependent intensities evaluated at the pre-trade reserve and the current
oracle price; on the uniform grid each direction fires at most once per step,
with probability ``min(1, lambda * dt)`` (Bernoulli thinning).
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import (
    ConfigError,
    DomainError,
    FeeSchedule,
    MarketParams,
    PoolConfig,
)

log = logging.getLogger(__name__)

_CHUNK = 1024


@dataclass(frozen=True)
class SimConfig:
    """Time grid and sample size.

    ``shocks`` selects the Brownian increment law: ``"gaussian"`` draws
    ``N(0, dt)``; ``"rademacher"`` draws ``+-sqrt(dt)`` (a binomial price lattice).
    """

    n_steps: int = 1440
    n_paths: int = 5000
    seed: int = 2024
    shocks: str = "gaussian"

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise ConfigError("n_steps must be a positive integer")
        if int(self.n_paths) != self.n_paths or self.n_paths < 1:
            raise ConfigError("n_paths must be a positive integer")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must fit in an unsigned 64-bit integer")
        if self.shocks not in ("gaussian", "rademacher"):
            raise ConfigError(f"unknown shock law {self.shocks!r}")

    def dt(self, params: MarketParams) -> float:
        return params.horizon / self.n_steps


def check_config(cfg: PoolConfig, params: MarketParams, sim: SimConfig,
                 s0: float | None = None, y0: float | None = None) -> None:
    """Reject grids whose event probabilities at the initial state are not below one."""
    dt = sim.dt(params)
    s0 = params.s0 if s0 is None else s0
    z0 = cfg.depth / (cfg.y0 if y0 is None else y0) ** 2
    lam = max(params.a0, params.a1 + params.a2 * abs(s0 - z0))
    if lam * dt >= 1:
        raise ConfigError(
            f"time step too coarse: max intensity * dt = {lam * dt:.3g} >= 1 at the initial state"
        )


@dataclass
class PathBundle:
    """Simulated trajectories, one row per path and one column per grid time.

    ``perf_paths`` is the LP performance ``R - IL``. ``gain_paths`` accumulates
    the same quantity trade by trade (each trade adds its payoff ``beta`` at
    the oracle price of its step); the two differ by the zero-mean martingale
    ``sum_k (Y_k - Y_0) * (S_{k+1} - S_k)``. ``dw`` holds the Brownian
    increments, so ``s[:, k+1] - s[:, k] == sigma * dw[:, k]`` up to rounding.
    ``buy_counts``/``sell_counts`` are the cumulative executed event counts.
    """

    times: np.ndarray
    s_paths: np.ndarray
    y_paths: np.ndarray
    x_paths: np.ndarray
    r_paths: np.ndarray
    il_paths: np.ndarray
    perf_paths: np.ndarray
    gain_paths: np.ndarray
    buy_counts: np.ndarray
    sell_counts: np.ndarray
    dw: np.ndarray
    pool: PoolConfig
    params: MarketParams
    fee: FeeSchedule
    sim: SimConfig
    clipped_probabilities: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def n_paths(self) -> int:
        return self.s_paths.shape[0]

    @property
    def n_steps(self) -> int:
        return self.s_paths.shape[1] - 1

    @property
    def z_paths(self) -> np.ndarray:
        """Pool marginal price ``c / y**2``."""
        return self.pool.depth / self.y_paths**2

    def check(self) -> None:
        """Assert the structural invariants of the bundle; raises :class:`DomainError`."""
        self.pool.index_of(self.y_paths)
        if not np.array_equal(self.x_paths, self.pool.depth / self.y_paths):
            raise DomainError("x is not on the level curve")
        if np.any(np.diff(self.r_paths, axis=1) < 0):
            raise DomainError("fees decreased along a path")
        if not np.array_equal(self.perf_paths, self.r_paths - self.il_paths):
            raise DomainError("performance is not R - IL")
        py = self.y_paths[:, :-1] - self.meta["y0"]
        drift = np.concatenate([np.zeros((self.n_paths, 1)),
                                np.cumsum(py * np.diff(self.s_paths, axis=1), axis=1)], axis=1)
        scale = max(1.0, float(np.max(np.abs(self.perf_paths))))
        if np.max(np.abs(self.perf_paths - drift - self.gain_paths)) > 1e-7 * scale:
            raise DomainError("trade-by-trade gain does not reconcile with R - IL")


def _draws(seed: int, first: int, count: int, n_steps: int, shocks: str):
    """Standard shocks and uniforms for paths ``first .. first+count-1``.

    Path ``i`` always uses the stream spawned from ``(seed, i)``.
    """
    z = np.empty((count, n_steps))
    u = np.empty((count, n_steps, 2))
    for j in range(count):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(first + j,)))
        if shocks == "gaussian":
            z[j] = rng.standard_normal(n_steps)
        else:
            z[j] = np.where(rng.random(n_steps) < 0.5, -1.0, 1.0)
        u[j] = rng.random((n_steps, 2))
    return z, u


def simulate(cfg: PoolConfig, params: MarketParams, fee: FeeSchedule, sim: SimConfig,
             s0=None, y0=None) -> PathBundle:
    """Simulate ``sim.n_paths`` trajectories on ``sim.n_steps`` uniform steps.

    Each step advances the oracle, evaluates both intensities at the pre-trade
    reserve and the new oracle price, then executes a buy followed by a sell
    when their independent uniforms fall below the event probabilities. Fees
    are charged at the reserve immediately before each trade.

    ``s0`` and ``y0`` override the starting oracle price and reserve; the
    impermanent loss is always measured against the starting reserves.
    """
    check_config(cfg, params, sim, s0, y0)
    s_init = params.s0 if s0 is None else float(s0)
    k_init = cfg.index0 if y0 is None else cfg.index_of(y0)

    m, n = sim.n_paths, sim.n_steps
    dt = sim.dt(params)
    sqdt = np.sqrt(dt)
    c, xi = cfg.depth, cfg.xi
    levels = cfg.levels
    n_lev = cfg.n_levels
    z_lev = c / levels**2
    x_lev = c / levels
    fee_lev = np.asarray(fee(levels), dtype=float)
    x_ref, y_ref = x_lev[k_init], levels[k_init]

    shape = (m, n + 1)
    s_paths = np.empty(shape)
    y_paths = np.empty(shape)
    x_paths = np.empty(shape)
    r_paths = np.empty(shape)
    il_paths = np.empty(shape)
    perf_paths = np.empty(shape)
    gain_paths = np.empty(shape)
    buys = np.zeros(shape, dtype=np.int32)
    sells = np.zeros(shape, dtype=np.int32)
    dw = np.empty((m, n))
    clipped = 0

    for first in range(0, m, _CHUNK):
        count = min(_CHUNK, m - first)
        rows = slice(first, first + count)
        z, u = _draws(sim.seed, first, count, n, sim.shocks)
        dw[rows] = sqdt * z
        s = np.full(count, s_init)
        k = np.full(count, k_init, dtype=np.int64)
        r = np.zeros(count)
        g = np.zeros(count)
        nb = np.zeros(count, dtype=np.int32)
        na = np.zeros(count, dtype=np.int32)
        s_paths[rows, 0] = s
        k_hist = np.empty((count, n + 1), dtype=np.int64)
        k_hist[:, 0] = k
        r_paths[rows, 0] = 0.0
        gain_paths[rows, 0] = 0.0
        for step in range(n):
            s = s + params.sigma * dw[rows, step]
            zk = z_lev[k]
            lam_b = np.maximum(params.a0, params.a1 + params.a2 * (zk - s))
            lam_a = np.maximum(params.a0, params.a1 + params.a2 * (s - zk))
            p_b = lam_b * dt
            p_a = lam_a * dt
            clipped += int(np.count_nonzero(p_b > 1) + np.count_nonzero(p_a > 1))
            buy = (u[:, step, 0] < p_b) & (k < n_lev - 1)
            sell = (u[:, step, 1] < p_a) & (k > 0)
            # buy first, then sell from the updated reserve
            kb = np.minimum(k + 1, n_lev - 1)
            r = r + np.where(buy, fee_lev[k], 0.0)
            g = g + np.where(buy, x_lev[kb] - x_lev[k] + xi * s + fee_lev[k], 0.0)
            k = k + buy
            ka = np.maximum(k - 1, 0)
            r = r + np.where(sell, fee_lev[k], 0.0)
            g = g + np.where(sell, x_lev[ka] - x_lev[k] - xi * s + fee_lev[k], 0.0)
            k = k - sell
            nb += buy
            na += sell
            s_paths[rows, step + 1] = s
            k_hist[:, step + 1] = k
            r_paths[rows, step + 1] = r
            gain_paths[rows, step + 1] = g
            buys[rows, step + 1] = nb
            sells[rows, step + 1] = na
        y_paths[rows] = levels[k_hist]
        x_paths[rows] = x_lev[k_hist]
        il_paths[rows] = -((x_paths[rows] - x_ref) + s_paths[rows] * (y_paths[rows] - y_ref))
        perf_paths[rows] = r_paths[rows] - il_paths[rows]

    if clipped:
        log.warning("%d event probabilities exceeded one and were clipped", clipped)

    times = params.horizon * np.arange(n + 1) / n
    return PathBundle(
        times=times, s_paths=s_paths, y_paths=y_paths, x_paths=x_paths,
        r_paths=r_paths, il_paths=il_paths, perf_paths=perf_paths,
        gain_paths=gain_paths, buy_counts=buys, sell_counts=sells, dw=dw,
        pool=cfg, params=params, fee=fee, sim=sim,
        clipped_probabilities=clipped,
        meta={"s0": s_init, "y0": float(levels[k_init])},
    )


_QUANTILE_FIELDS = ("s", "z", "y", "x", "r", "il", "perf", "gain")


def path_quantiles(bundle: PathBundle, q_lo: float = 0.05, q_hi: float = 0.95,
                   fields=_QUANTILE_FIELDS) -> dict:
    """Per-time empirical quantile curves.

    Returns a mapping ``name -> (lo, hi)`` of arrays of length ``n_steps + 1``
    for each process in ``fields`` (names as in ``PathBundle``, without the
    ``_paths`` suffix).
    """
    if bundle.n_paths < 100:
        raise DomainError("need at least 100 paths for quantile bands")
    for q in (q_lo, q_hi):
        if not 0 < q < 1:
            raise DomainError("quantile levels must lie in (0, 1)")
    out = {}
    for name in fields:
        data = getattr(bundle, f"{name}_paths")
        lo, hi = np.quantile(data, [q_lo, q_hi], axis=0)
        out[name] = (lo, hi)
    return out


_CSV_HEADER = ("path", "t", "S", "Y", "X", "R", "IL", "perf")


def write_csv(bundle: PathBundle, path, stride: int = 1, max_paths: int | None = None) -> Path:
    """Write one row per path per recorded step (every ``stride``-th time)."""
    path = Path(path)
    cols = np.arange(0, bundle.n_steps + 1, stride)
    if cols[-1] != bundle.n_steps:
        cols = np.append(cols, bundle.n_steps)
    n_rows = bundle.n_paths if max_paths is None else min(max_paths, bundle.n_paths)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(_CSV_HEADER)
        for i in range(n_rows):
            for k in cols:
                w.writerow((i, repr(float(bundle.times[k])), repr(float(bundle.s_paths[i, k])),
                            repr(float(bundle.y_paths[i, k])), repr(float(bundle.x_paths[i, k])),
                            repr(float(bundle.r_paths[i, k])), repr(float(bundle.il_paths[i, k])),
                            repr(float(bundle.perf_paths[i, k]))))
    return path


def write_quantiles_csv(bundle: PathBundle, path, q_lo=0.05, q_hi=0.95) -> Path:
    path = Path(path)
    bands = path_quantiles(bundle, q_lo, q_hi)
    names = list(bands)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"{n}_{tag}" for n in names for tag in ("lo", "hi")])
        for k, t in enumerate(bundle.times):
            row = [repr(float(t))]
            for n_ in names:
                row += [repr(float(bands[n_][0][k])), repr(float(bands[n_][1][k]))]
            w.writerow(row)
    return path


def save_bundle(bundle: PathBundle, path) -> Path:
    """Compact binary dump (``.npz``) that :func:`load_bundle` restores exactly."""
    path = Path(path)
    p, m, f, sim = bundle.pool, bundle.params, bundle.fee, bundle.sim
    np.savez_compressed(
        path,
        times=bundle.times, s=bundle.s_paths, y=bundle.y_paths, x=bundle.x_paths,
        r=bundle.r_paths, il=bundle.il_paths, perf=bundle.perf_paths, gain=bundle.gain_paths,
        buys=bundle.buy_counts, sells=bundle.sell_counts, dw=bundle.dw,
        pool=np.array([p.xi, p.y0, p.x0, p.y_lower, p.y_upper]),
        market=np.array([m.sigma, m.s0, m.a0, m.a1, m.a2, m.horizon]),
        fee=np.array([f.intercept, f.slope]), fee_kind=np.array(f.kind),
        sim=np.array([sim.n_steps, sim.n_paths, sim.seed], dtype=np.uint64),
        shocks=np.array(sim.shocks), clipped=np.array(bundle.clipped_probabilities),
        start=np.array([bundle.meta.get("s0", m.s0), bundle.meta.get("y0", p.y0)]),
    )
    return path


def load_bundle(path) -> PathBundle:
    with np.load(path) as d:
        pool = PoolConfig(*map(float, d["pool"]))
        params = MarketParams(*map(float, d["market"]))
        fee = FeeSchedule(str(d["fee_kind"]), float(d["fee"][0]), float(d["fee"][1]))
        n_steps, n_paths, seed = (int(v) for v in d["sim"])
        sim = SimConfig(n_steps, n_paths, seed, shocks=str(d["shocks"]))
        return PathBundle(
            times=d["times"], s_paths=d["s"], y_paths=d["y"], x_paths=d["x"],
            r_paths=d["r"], il_paths=d["il"], perf_paths=d["perf"], gain_paths=d["gain"],
            buy_counts=d["buys"], sell_counts=d["sells"], dw=d["dw"],
            pool=pool, params=params, fee=fee, sim=sim,
            clipped_probabilities=int(d["clipped"]),
            meta={"s0": float(d["start"][0]), "y0": float(d["start"][1])},
        )
