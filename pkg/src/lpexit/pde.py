"""Finite-difference solver for the LP exit quasi-variational inequality.

The value ``v(t, y, S)`` solves, backwards from ``v(T) = 0``,

    min{ -v_t - sigma^2/2 v_SS - sum_i lambda_i (beta_i + v(y +- xi) - v), v } = 0

on the reserve lattice times an S-grid. Each time step applies an explicit
jump update, an implicit diffusion solve (Neumann in S) and the projection
``v <- max(v, 0)``. The risk-averse variant replaces the jump bracket by
``(1 - exp(-psi * bracket)) / psi`` and adds ``-sigma^2/2 * psi * v_S^2``,
both explicitly.
"""
from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .model import (
    ConfigError,
    FeeSchedule,
    MarketParams,
    PoolConfig,
    admissible_buy,
    admissible_sell,
    intensity_buy,
    intensity_sell,
)

log = logging.getLogger(__name__)

MAX_JUMP_CFL = 0.5
EXP_CLAMP = 700.0


@dataclass(frozen=True)
class GridSpec:
    """Uniform S-grid with ``n_s + 1`` nodes and ``n_t`` backward time steps.

    Only every ``save_every``-th time slice (plus ``t = 0`` and ``t = T``) is
    kept in the returned :class:`ValueGrid`.
    """

    s_min: float
    s_max: float
    n_s: int
    n_t: int
    save_every: int = 1

    def __post_init__(self):
        if not self.s_min < self.s_max:
            raise ConfigError("need s_min < s_max")
        if int(self.n_s) != self.n_s or self.n_s < 2:
            raise ConfigError("n_s must be an integer >= 2")
        if int(self.n_t) != self.n_t or self.n_t < 1:
            raise ConfigError("n_t must be a positive integer")
        if int(self.save_every) != self.save_every or self.save_every < 1:
            raise ConfigError("save_every must be a positive integer")

    @classmethod
    def around(cls, params: MarketParams, n_s: int, n_t: int, width: float = 5.0,
               save_every: int = 1) -> "GridSpec":
        """Grid on ``S0 +- width * sigma * sqrt(T)``."""
        half = width * params.sigma * math.sqrt(params.horizon)
        return cls(params.s0 - half, params.s0 + half, n_s, n_t, save_every)

    @property
    def s_grid(self) -> np.ndarray:
        return np.linspace(self.s_min, self.s_max, self.n_s + 1)

    @property
    def ds(self) -> float:
        return (self.s_max - self.s_min) / self.n_s

    def dt(self, params: MarketParams) -> float:
        return params.horizon / self.n_t

    def check_coverage(self, params: MarketParams, width: float = 4.0) -> None:
        half = width * params.sigma * math.sqrt(params.horizon)
        if self.s_min > params.s0 - half or self.s_max < params.s0 + half:
            raise ConfigError(f"S-grid must contain S0 +- {width} sigma sqrt(T)")


@dataclass(frozen=True)
class RiskAversion:
    psi: float

    def __post_init__(self):
        if not self.psi > 0:
            raise ConfigError("risk aversion psi must be positive")


@dataclass
class ValueGrid:
    """Solution on the saved time slices.

    ``values[k, j, i]`` is ``v(times[k], levels[j], s_grid[i])``;
    ``exercise[k, j, i]`` is True where the pre-projection value was ``<= 0``
    (at ``t = T`` every node is an exit node). ``residual_sup[k]`` is filled
    when the solve tracks residuals, see :func:`qvi_residual`.
    """

    values: np.ndarray
    exercise: np.ndarray
    times: np.ndarray
    levels: np.ndarray
    s_grid: np.ndarray
    pool: PoolConfig
    params: MarketParams
    fee: FeeSchedule
    grid: GridSpec
    substeps: int = 1
    psi: float | None = None
    residual_sup: np.ndarray | None = None

    def time_index(self, t: float) -> int:
        k = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[k], t, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"time {t} is not a saved slice")
        return k

    def level_index(self, y: float) -> int:
        return int(self.pool.index_of(y)) - int(self.pool.index_of(self.levels[0]))

    def value_at(self, t: float, y: float, s):
        """Value at a saved time, a lattice reserve and (interpolated) oracle prices."""
        row = self.values[self.time_index(t), self.level_index(y)]
        return np.interp(s, self.s_grid, row)


@dataclass(frozen=True)
class JumpCoefficients:
    """Gated intensities and trade payoffs on the (y, S) grid."""

    lam_buy: np.ndarray
    lam_sell: np.ndarray
    beta_buy: np.ndarray
    beta_sell: np.ndarray

    @property
    def total_rate(self) -> np.ndarray:
        return self.lam_buy + self.lam_sell


def jump_coefficients(cfg: PoolConfig, params: MarketParams, fee: FeeSchedule,
                      s_grid) -> JumpCoefficients:
    y = cfg.levels[:, None]
    s = np.asarray(s_grid, dtype=float)[None, :]
    c, xi = cfg.depth, cfg.xi
    up = admissible_buy(cfg, y)
    dn = admissible_sell(cfg, y)
    r = np.asarray(fee(y), dtype=float)
    # payoffs are zeroed where the trade is gated off (also avoids y - xi == 0)
    y_dn = np.where(dn, y - xi, y)
    b_buy = np.where(up, c / (y + xi) - c / y + xi * s + r, 0.0)
    b_sell = np.where(dn, c / y_dn - c / y - xi * s + r, 0.0)
    return JumpCoefficients(
        lam_buy=np.where(up, intensity_buy(params, cfg, y, s), 0.0),
        lam_sell=np.where(dn, intensity_sell(params, cfg, y, s), 0.0),
        beta_buy=b_buy,
        beta_sell=b_sell,
    )


def _neighbours(v):
    v_up = np.empty_like(v)
    v_dn = np.empty_like(v)
    v_up[:-1], v_up[-1] = v[1:], v[-1]
    v_dn[1:], v_dn[0] = v[:-1], v[0]
    return v_up, v_dn


def jump_operator(v, jc: JumpCoefficients, psi: float | None = None) -> np.ndarray:
    """Jump part of the generator, ``sum_i lambda_i * g(beta_i + v(y +- xi) - v)``.

    ``g`` is the identity (risk neutral) or ``(1 - exp(-psi x)) / psi``.
    """
    v_up, v_dn = _neighbours(v)
    gain_b = jc.beta_buy + v_up - v
    gain_a = jc.beta_sell + v_dn - v
    if psi is not None:
        gain_b = _utility_gain(gain_b, psi)
        gain_a = _utility_gain(gain_a, psi)
    return jc.lam_buy * gain_b + jc.lam_sell * gain_a


def _utility_gain(x, psi):
    arg = psi * x
    if np.any(np.abs(arg) > EXP_CLAMP):
        log.warning("clamping %d exponent arguments to +-%g",
                    int(np.count_nonzero(np.abs(arg) > EXP_CLAMP)), EXP_CLAMP)
        arg = np.clip(arg, -EXP_CLAMP, EXP_CLAMP)
    return -np.expm1(-arg) / psi


def jump_step(v, cfg: PoolConfig, params: MarketParams, fee: FeeSchedule, dt: float,
              s_grid=None, coeffs: JumpCoefficients | None = None) -> np.ndarray:
    """Explicit jump update ``v + dt * J(v)`` for a slice of shape ``(|Q|, n_s + 1)``."""
    if coeffs is None:
        if s_grid is None:
            raise ValueError("need s_grid or precomputed coefficients")
        coeffs = jump_coefficients(cfg, params, fee, s_grid)
    return v + dt * jump_operator(v, coeffs)


def diffusion_matrix(sigma: float, dt: float, ds: float, n_nodes: int) -> np.ndarray:
    """Banded form of ``I - dt * sigma^2/2 * D2`` with zero-flux ends."""
    k = dt * sigma**2 / (2 * ds**2)
    ab = np.empty((3, n_nodes))
    ab[0] = -k
    ab[2] = -k
    ab[1] = 1 + 2 * k
    ab[1, 0] = ab[1, -1] = 1 + k
    ab[0, 0] = 0.0
    ab[2, -1] = 0.0
    # row i couples to ab[0, i+1] (upper) and ab[2, i-1] (lower)
    off = np.zeros(n_nodes)
    off[:-1] += np.abs(ab[0, 1:])
    off[1:] += np.abs(ab[2, :-1])
    if not np.all(ab[1] > off):
        raise ArithmeticError("diffusion matrix is not strictly diagonally dominant")
    return ab


def diffusion_step(v, sigma: float, dt: float, ds: float, ab=None) -> np.ndarray:
    """Implicit heat step in S, solved level by level (one banded solve, many RHS)."""
    if sigma == 0:
        return np.array(v, dtype=float, copy=True)
    if ab is None:
        ab = diffusion_matrix(sigma, dt, ds, v.shape[-1])
    out = scipy.linalg.solve_banded((1, 1), ab, np.asarray(v).T, check_finite=False)
    return out.T


def qvi_project(v):
    """Return ``(max(v, 0), v <= 0)``."""
    return np.maximum(v, 0.0), v <= 0


def _second_difference(v, ds):
    d2 = np.empty_like(v)
    d2[..., 1:-1] = v[..., 2:] - 2 * v[..., 1:-1] + v[..., :-2]
    d2[..., 0] = v[..., 1] - v[..., 0]
    d2[..., -1] = v[..., -2] - v[..., -1]
    return d2 / ds**2


def _substeps(dt, jc):
    rate = float(jc.total_rate.max())
    n_sub = max(1, math.ceil(dt * rate / MAX_JUMP_CFL - 1e-12))
    if n_sub > 1:
        msg = (f"explicit jump step unstable (dt * max rate = {dt * rate:.3g} > {MAX_JUMP_CFL}); "
               f"subdividing each step into {n_sub}")
        warnings.warn(msg, RuntimeWarning, stacklevel=3)
        log.warning(msg)
    return n_sub


def _residual(vk, vn, dt, half_var, ds, jc, horizon):
    """Unscaled ``min{T * L v, v}`` at interior S nodes (see :func:`qvi_residual`)."""
    op = (vk - vn) / dt - half_var * _second_difference(vk, ds) - jump_operator(vk, jc)
    return np.minimum(op * horizon, vk)[:, 1:-1]


def _march(cfg, params, fee, grid: GridSpec, psi=None, track_residual=False) -> ValueGrid:
    grid.check_coverage(params)
    s = grid.s_grid
    jc = jump_coefficients(cfg, params, fee, s)
    dt = grid.dt(params)
    n_sub = _substeps(dt, jc)
    h = dt / n_sub
    ab = diffusion_matrix(params.sigma, h, grid.ds, s.size)
    half_var = 0.5 * params.sigma**2

    saved = sorted({0, grid.n_t, *range(0, grid.n_t + 1, grid.save_every)})
    slot = {k: j for j, k in enumerate(saved)}
    shape = (len(saved), cfg.n_levels, s.size)
    values = np.zeros(shape)
    exercise = np.zeros(shape, dtype=bool)
    exercise[slot[grid.n_t]] = True

    sup = np.zeros(grid.n_t) if track_residual else None
    v = np.zeros((cfg.n_levels, s.size))
    for k in range(grid.n_t - 1, -1, -1):
        v_next = v
        for _ in range(n_sub):
            w = v + h * jump_operator(v, jc, psi)
            if psi is not None:
                v_s = np.gradient(v, grid.ds, axis=1, edge_order=1)
                w -= h * half_var * psi * v_s**2
            u = diffusion_step(w, params.sigma, h, grid.ds, ab)
            v, ex = qvi_project(u)
        if track_residual:
            res = _residual(v, v_next, dt, half_var, grid.ds, jc, params.horizon)
            sup[k] = float(np.abs(res).max())
        if k in slot:
            values[slot[k]] = v
            exercise[slot[k]] = ex
    return ValueGrid(
        values=values, exercise=exercise,
        times=params.horizon * np.asarray(saved) / grid.n_t,
        levels=cfg.levels, s_grid=s, pool=cfg, params=params, fee=fee, grid=grid,
        substeps=n_sub, psi=psi, residual_sup=sup,
    )


def solve_qvi(cfg: PoolConfig, params: MarketParams, fee: FeeSchedule,
              grid: GridSpec, track_residual: bool = False) -> ValueGrid:
    """Risk-neutral value function by jump-explicit / diffusion-implicit splitting.

    With ``track_residual`` the discrete QVI residual of every time step is
    evaluated during the march, so it is available without saving all slices.
    """
    return _march(cfg, params, fee, grid, track_residual=track_residual)


def solve_qvi_risk_averse(cfg: PoolConfig, params: MarketParams, fee: FeeSchedule,
                          grid: GridSpec, ra: RiskAversion) -> ValueGrid:
    """Certainty-equivalent value ``v_psi`` of an exponential-utility LP."""
    return _march(cfg, params, fee, grid, psi=float(ra.psi))


def qvi_residual(vg: ValueGrid) -> np.ndarray:
    """Scaled sup-norm of the discrete QVI residual, one entry per time step.

    At step ``k`` the residual is ``min{T * L v, v}`` over interior S nodes, with
    ``L v = (v^k - v^{k+1}) / dt - sigma^2/2 D2 v^k - J(v^k)``, divided by
    ``max|v|`` over the grid. Uses the residuals tracked during the solve when
    present, otherwise needs every slice saved (``save_every=1``).
    """
    if vg.psi is not None:
        raise ValueError("residual is defined for the risk-neutral problem")
    scale = float(np.abs(vg.values).max()) or 1.0
    if vg.residual_sup is not None:
        return vg.residual_sup / scale
    if vg.grid.save_every != 1:
        raise ValueError("residual needs every time slice (save_every=1) or track_residual=True")
    jc = jump_coefficients(vg.pool, vg.params, vg.fee, vg.s_grid)
    dt = vg.grid.dt(vg.params)
    half_var = 0.5 * vg.params.sigma**2
    out = np.empty(len(vg.times) - 1)
    for k in range(len(vg.times) - 1):
        res = _residual(vg.values[k], vg.values[k + 1], dt, half_var, vg.grid.ds, jc,
                        vg.params.horizon)
        out[k] = float(np.abs(res).max())
    return out / scale


def residual_tolerance(vg: ValueGrid, factor: float = 5.0) -> float:
    """``factor * (dt/T + (ds / (sigma sqrt T))**2)``, the bound the scaled residual is held to."""
    p = vg.params
    dt = vg.grid.dt(p) / p.horizon
    ds = vg.grid.ds / (p.sigma * math.sqrt(p.horizon)) if p.sigma > 0 else vg.grid.ds
    return factor * (dt + ds**2)


@dataclass
class PolicySurface:
    """Hold/exit map extracted from a :class:`ValueGrid`."""

    hold: np.ndarray
    times: np.ndarray
    levels: np.ndarray
    s_grid: np.ndarray

    def intervals(self, t_index: int, y_index: int) -> list:
        """Maximal S-intervals ``(s_lo, s_hi)`` of grid nodes where holding is optimal."""
        mask = self.hold[t_index, y_index]
        if not mask.any():
            return []
        edges = np.diff(np.concatenate([[0], mask.astype(np.int8), [0]]))
        starts = np.flatnonzero(edges == 1)
        stops = np.flatnonzero(edges == -1) - 1
        return [(float(self.s_grid[a]), float(self.s_grid[b])) for a, b in zip(starts, stops)]

    def hold_width(self, t_index: int, y_index: int) -> float:
        return float(sum(b - a for a, b in self.intervals(t_index, y_index)))

    def slice_t(self, t_index: int) -> np.ndarray:
        return self.hold[t_index]

    def slice_y(self, y_index: int) -> np.ndarray:
        return self.hold[:, y_index]


def extract_policy(vg: ValueGrid) -> PolicySurface:
    return PolicySurface(hold=~vg.exercise, times=vg.times, levels=vg.levels, s_grid=vg.s_grid)


def write_value_csv(vg: ValueGrid, path, t_indices=None, y_indices=None) -> Path:
    """CSV with columns ``t,y,S,v,in_exercise_region`` (optionally restricted)."""
    path = Path(path)
    t_indices = range(len(vg.times)) if t_indices is None else t_indices
    y_indices = range(len(vg.levels)) if y_indices is None else y_indices
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(("t", "y", "S", "v", "in_exercise_region"))
        for k in t_indices:
            for j in y_indices:
                for i, s in enumerate(vg.s_grid):
                    w.writerow((repr(float(vg.times[k])), repr(float(vg.levels[j])),
                                repr(float(s)), repr(float(vg.values[k, j, i])),
                                int(vg.exercise[k, j, i])))
    return path


def write_policy_csv(policy: PolicySurface, path, t_indices=None) -> Path:
    """Hold intervals per saved time and reserve level: ``t,y,s_lo,s_hi``.

    Levels with no hold region get one row with empty bounds.
    """
    path = Path(path)
    t_idx = range(len(policy.times)) if t_indices is None else t_indices
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "y", "s_lo", "s_hi"])
        for k in t_idx:
            for j, y in enumerate(policy.levels):
                spans = policy.intervals(k, j) or [("", "")]
                for lo, hi in spans:
                    w.writerow([repr(float(policy.times[k])), repr(float(y)),
                                lo if lo == "" else repr(lo), hi if hi == "" else repr(hi)])
    return path
