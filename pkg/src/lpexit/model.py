"""Constant-product pool mechanics, order-flow intensities and LP payoffs.

Conventions
-----------
* Reserves ``(x, y)`` live on the level curve ``x = c / y`` with depth ``c``.
* The pool's marginal price of Y in units of X is ``z = c / y**2``.
* A *buy* event (counting process ``N^b``) deposits Y into the pool: ``y -> y + xi``.
  A *sell* event (``N^a``) withdraws Y from the pool: ``y -> y - xi``.
* Fees are denominated in X.

All functions accept scalars or numpy arrays and broadcast.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

_LATTICE_RTOL = 1e-9


class DomainError(ValueError):
    """Raised when a model function is evaluated outside its domain."""


class ConfigError(ValueError):
    """Raised when a configuration object violates its invariants."""


def _is_multiple(value: float, step: float) -> bool:
    k = value / step
    return abs(k - round(k)) <= _LATTICE_RTOL * max(1.0, abs(k))


@dataclass(frozen=True)
class PoolConfig:
    """Static description of the pool and its admissible reserve lattice.

    The depth ``c = x0 * y0`` is computed once at construction.
    """

    xi: float
    y0: float
    x0: float
    y_lower: float
    y_upper: float
    depth: float = field(init=False)

    def __post_init__(self):
        for name in ("xi", "y0", "x0", "y_lower", "y_upper"):
            if not np.isfinite(getattr(self, name)) or getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be a positive finite number")
        if not self.y_lower < self.y_upper:
            raise ConfigError("need y_lower < y_upper")
        if not self.y_lower <= self.y0 <= self.y_upper:
            raise ConfigError("need y_lower <= y0 <= y_upper")
        for name in ("y0", "y_lower", "y_upper"):
            if not _is_multiple(getattr(self, name), self.xi):
                raise ConfigError(f"{name} must be an integer multiple of xi")
        object.__setattr__(self, "depth", self.x0 * self.y0)

    @classmethod
    def from_price(cls, y0, z0, xi, y_lower=None, y_upper=None):
        """Pool with reserves ``y0`` whose marginal price is ``z0`` (so ``x0 = y0 * z0``).

        Bounds default to ``xi`` and ``4 * y0``.
        """
        y_lower = xi if y_lower is None else y_lower
        y_upper = 4 * y0 if y_upper is None else y_upper
        return cls(xi=xi, y0=y0, x0=y0 * z0, y_lower=y_lower, y_upper=y_upper)

    @property
    def n_levels(self) -> int:
        return int(round((self.y_upper - self.y_lower) / self.xi)) + 1

    @property
    def levels(self) -> np.ndarray:
        """The reserve lattice ``Q`` as an increasing array."""
        return self.y_lower + self.xi * np.arange(self.n_levels)

    @property
    def index0(self) -> int:
        return self.index_of(self.y0)

    def index_of(self, y):
        """Lattice index of reserve ``y``; raises :class:`DomainError` if off-lattice."""
        k = (np.asarray(y, dtype=float) - self.y_lower) / self.xi
        kr = np.rint(k)
        bad = (np.abs(k - kr) > _LATTICE_RTOL * np.maximum(1.0, np.abs(k))) | (kr < 0) | (
            kr > self.n_levels - 1
        )
        if np.any(bad):
            raise DomainError("reserve value is not on the lattice Q")
        out = kr.astype(np.int64)
        return int(out) if out.ndim == 0 else out

    def on_lattice(self, y) -> bool:
        try:
            self.index_of(y)
        except DomainError:
            return False
        return True

    def with_bounds(self, y_lower, y_upper) -> "PoolConfig":
        return PoolConfig(self.xi, self.y0, self.x0, y_lower, y_upper)


@dataclass(frozen=True)
class MarketParams:
    """Oracle price and order-flow parameters (time unit: days)."""

    sigma: float
    s0: float
    a0: float
    a1: float
    a2: float
    horizon: float = 1.0

    def __post_init__(self):
        if not self.sigma >= 0:
            raise ConfigError("sigma must be nonnegative")
        if not self.a0 > 0:
            raise ConfigError("a0 must be positive")
        if not (self.a1 >= 0 and self.a2 >= 0):
            raise ConfigError("a1 and a2 must be nonnegative")
        if not self.horizon > 0:
            raise ConfigError("horizon must be positive")
        if not np.isfinite(self.s0):
            raise ConfigError("s0 must be finite")

    def scaled(self, **factors) -> "MarketParams":
        """Copy with selected fields multiplied, e.g. ``scaled(sigma=2)``."""
        return replace(self, **{k: getattr(self, k) * v for k, v in factors.items()})


@dataclass(frozen=True)
class FeeSchedule:
    """Fee paid to the pool per trade, as a function of the pre-trade reserve.

    ``kind`` is ``"constant"`` (uses ``intercept``) or ``"linear"``
    (``intercept + slope * y``).
    """

    kind: str = "constant"
    intercept: float = 0.0
    slope: float = 0.0

    def __post_init__(self):
        if self.kind not in ("constant", "linear"):
            raise ConfigError(f"unknown fee kind {self.kind!r}")
        if not (np.isfinite(self.intercept) and np.isfinite(self.slope)):
            raise ConfigError("fee coefficients must be finite")
        if self.intercept < 0 or self.slope < 0:
            raise ConfigError("fee coefficients must be nonnegative")
        if self.kind == "constant" and self.slope != 0:
            raise ConfigError("constant fee has no slope")

    @classmethod
    def constant(cls, level: float) -> "FeeSchedule":
        return cls("constant", float(level), 0.0)

    @classmethod
    def linear(cls, intercept: float, slope: float) -> "FeeSchedule":
        return cls("linear", float(intercept), float(slope))

    def __call__(self, y):
        if self.kind == "constant":
            return np.full_like(np.asarray(y, dtype=float), self.intercept)[()]
        return self.intercept + self.slope * np.asarray(y, dtype=float)

    def scaled(self, factor: float) -> "FeeSchedule":
        return replace(self, intercept=self.intercept * factor, slope=self.slope * factor)


def _positive(y):
    y = np.asarray(y, dtype=float)
    if np.any(~(y > 0)):
        raise DomainError("reserve must be positive")
    return y


def level_curve(cfg: PoolConfig, y):
    """X reserve on the level curve, ``c / y``."""
    return (cfg.depth / _positive(y))[()]


def marginal_price(cfg: PoolConfig, y):
    """Marginal pool price of Y, ``c / y**2``."""
    y = _positive(y)
    return (cfg.depth / (y * y))[()]


def beta_buy(cfg: PoolConfig, fee: FeeSchedule, y, s):
    """Increment of ``-IL + R`` when a trade moves the reserve from ``y`` to ``y + xi`` at price ``s``."""
    cfg.index_of(y)
    y = np.asarray(y, dtype=float)
    c = cfg.depth
    return (c / (y + cfg.xi) - c / y + cfg.xi * np.asarray(s) + fee(y))[()]


def beta_sell(cfg: PoolConfig, fee: FeeSchedule, y, s):
    """Increment of ``-IL + R`` when a trade moves the reserve from ``y`` to ``y - xi`` at price ``s``."""
    cfg.index_of(y)
    y = np.asarray(y, dtype=float)
    if np.any(y - cfg.xi <= 0):
        raise DomainError("sell would empty the Y reserve")
    c = cfg.depth
    return (c / (y - cfg.xi) - c / y - cfg.xi * np.asarray(s) + fee(y))[()]


def intensity_buy(params: MarketParams, cfg: PoolConfig, y, s):
    """Arrival rate of trades depositing Y: ``max(a0, a1 + a2 * (c/y**2 - s))``."""
    z = marginal_price(cfg, y)
    return np.maximum(params.a0, params.a1 + params.a2 * (z - np.asarray(s)))[()]


def intensity_sell(params: MarketParams, cfg: PoolConfig, y, s):
    """Arrival rate of trades withdrawing Y: ``max(a0, a1 + a2 * (s - c/y**2))``."""
    z = marginal_price(cfg, y)
    return np.maximum(params.a0, params.a1 + params.a2 * (np.asarray(s) - z))[()]


def admissible_buy(cfg: PoolConfig, y):
    return (np.asarray(y) + cfg.xi <= cfg.y_upper * (1 + _LATTICE_RTOL))[()]


def admissible_sell(cfg: PoolConfig, y):
    return (np.asarray(y) - cfg.xi >= cfg.y_lower * (1 - _LATTICE_RTOL))[()]


@dataclass(frozen=True)
class PoolState:
    """Snapshot of the pool together with the LP's accounting processes."""

    x: float
    y: float
    s: float
    fees: float = 0.0
    px: float = 0.0
    py: float = 0.0

    @classmethod
    def initial(cls, cfg: PoolConfig, s: float) -> "PoolState":
        return cls(x=cfg.x0, y=cfg.y0, s=s)

    def z(self, cfg: PoolConfig) -> float:
        return marginal_price(cfg, self.y)

    def check(self, cfg: PoolConfig, rtol: float = 1e-12) -> None:
        if not cfg.on_lattice(self.y):
            raise DomainError("reserve left the lattice")
        if abs(self.x * self.y - cfg.depth) > rtol * cfg.depth:
            raise DomainError("reserves are off the level curve")
        if self.fees < 0:
            raise DomainError("accrued fees must be nonnegative")

    def buy(self, cfg: PoolConfig, fee: FeeSchedule) -> "PoolState":
        """Apply one admissible buy (``y -> y + xi``) at the current oracle price."""
        if not admissible_buy(cfg, self.y):
            raise DomainError("buy not admissible at the upper reserve bound")
        y = self.y + cfg.xi
        x = level_curve(cfg, y)
        return PoolState(x, y, self.s, self.fees + float(fee(self.y)),
                         x - cfg.x0, y - cfg.y0)

    def sell(self, cfg: PoolConfig, fee: FeeSchedule) -> "PoolState":
        """Apply one admissible sell (``y -> y - xi``) at the current oracle price."""
        if not admissible_sell(cfg, self.y):
            raise DomainError("sell not admissible at the lower reserve bound")
        y = self.y - cfg.xi
        x = level_curve(cfg, y)
        return PoolState(x, y, self.s, self.fees + float(fee(self.y)),
                         x - cfg.x0, y - cfg.y0)

    def at_price(self, s: float) -> "PoolState":
        return replace(self, s=s)


def impermanent_loss(state: PoolState, cfg: PoolConfig | None = None) -> float:
    """``IL = -(P^X + S * P^Y)``; the LP's exit performance is ``fees - IL``."""
    return -(state.px + state.s * state.py)
