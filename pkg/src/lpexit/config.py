"""Run configuration: presets and a flat ``key = value`` config format.

Keys carry a component prefix, for example::

    # raise volatility and use the fast profile
    market.sigma = 320.9
    sim.n_paths  = 2000
    run.profile  = desk

Unknown keys and values that break a component's invariants are rejected
with an error naming the key.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import asdict, dataclass, field, fields, replace

from .experiments import PROFILE_PATHS, SEED_MODES, TABLE_MULTIPLIERS, TARGETS
from .lsmc import LsmcConfig
from .model import ConfigError, FeeSchedule, MarketParams, PoolConfig
from .pde import GridSpec, RiskAversion
from .simulation import SimConfig

DEFAULT_SEED = 2024
PRESETS = ("paper-toy", "paper-calibrated")
_SECTION = "run-config"


@dataclass(frozen=True)
class SweepSpec:
    target: str = "sigma"
    multipliers: tuple = TABLE_MULTIPLIERS
    seed_mode: str = "common"

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ConfigError(f"sweep.target must be one of {TARGETS}")
        if self.seed_mode not in SEED_MODES:
            raise ConfigError(f"sweep.seed_mode must be one of {SEED_MODES}")
        if not self.multipliers or any(not (m > 0 and math.isfinite(m)) for m in self.multipliers):
            raise ConfigError("sweep.multipliers must be positive finite numbers")


@dataclass(frozen=True)
class RunConfig:
    """Everything a CLI run needs; see :func:`parse_config`."""

    pool: PoolConfig
    market: MarketParams
    fee: FeeSchedule
    sim: SimConfig
    lsmc: LsmcConfig
    grid: GridSpec
    risk: RiskAversion | None = None
    sweep: SweepSpec = field(default_factory=SweepSpec)
    output_dir: str = "out"
    profile: str = "paper"
    preset: str | None = None

    def as_dict(self) -> dict:
        d = {}
        for f in fields(self):
            val = getattr(self, f.name)
            if f.name == "pool":
                val = {k: getattr(val, k) for k in ("xi", "y0", "x0", "y_lower", "y_upper")}
            elif hasattr(val, "__dataclass_fields__"):
                val = asdict(val)
            d[f.name] = val
        return d


def toy_preset() -> RunConfig:
    """Small fictitious pool used to cross-check the PDE and the regression method.

    The oracle price starts aligned with the pool (``S0 = Z0 = 1``); the fee
    level and reserve window are declared choices (see the README).
    """
    pool = PoolConfig(xi=1.0, y0=1000.0, x0=1000.0, y_lower=850.0, y_upper=1150.0)
    market = MarketParams(sigma=100.0, s0=1.0, a0=4.0, a1=8.0, a2=0.04)
    return RunConfig(
        pool=pool, market=market, fee=FeeSchedule.constant(25.0),
        sim=SimConfig(n_steps=1440, n_paths=5000, seed=DEFAULT_SEED),
        lsmc=LsmcConfig(degree=3),
        grid=GridSpec.around(market, n_s=400, n_t=1440, save_every=720),
        preset="paper-toy",
    )


def calibrated_preset() -> RunConfig:
    """ETH-USDC style pool: S0 = 2820, daily vol 5.69%, 50 000 ETH of reserves."""
    s0, xi = 2820.0, 100.0
    pool = PoolConfig.from_price(y0=50_000.0, z0=s0, xi=xi)
    market = MarketParams(sigma=0.0569 * s0, s0=s0, a0=1.0, a1=10.0, a2=10.0)
    return RunConfig(
        pool=pool, market=market, fee=FeeSchedule.constant(0.01 * xi * s0),
        sim=SimConfig(n_steps=1440, n_paths=10_000, seed=DEFAULT_SEED),
        lsmc=LsmcConfig(degree=3),
        grid=GridSpec.around(market, n_s=400, n_t=1440, save_every=720),
        preset="paper-calibrated",
    )


def preset(name: str) -> RunConfig:
    if name == "paper-toy":
        return toy_preset()
    if name == "paper-calibrated":
        return calibrated_preset()
    raise ConfigError(f"unknown preset {name!r}; expected one of {PRESETS}")


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int(text: str) -> int:
    val = float(text)
    if val != int(val):
        raise ValueError(f"not an integer: {text!r}")
    return int(val)


def _floats(text: str) -> tuple:
    out = []
    for part in text.replace(",", " ").split():
        if "/" in part:
            num, den = part.split("/")
            out.append(float(num) / float(den))
        else:
            out.append(float(part))
    return tuple(out)


# key -> (component, field, parser)
_KEYS = {
    "pool.xi": ("pool", "xi", float),
    "pool.y0": ("pool", "y0", float),
    "pool.x0": ("pool", "x0", float),
    "pool.y_lower": ("pool", "y_lower", float),
    "pool.y_upper": ("pool", "y_upper", float),
    "market.sigma": ("market", "sigma", float),
    "market.s0": ("market", "s0", float),
    "market.a0": ("market", "a0", float),
    "market.a1": ("market", "a1", float),
    "market.a2": ("market", "a2", float),
    "market.horizon": ("market", "horizon", float),
    "fee.kind": ("fee", "kind", str),
    "fee.intercept": ("fee", "intercept", float),
    "fee.slope": ("fee", "slope", float),
    "sim.n_steps": ("sim", "n_steps", _int),
    "sim.n_paths": ("sim", "n_paths", _int),
    "sim.seed": ("sim", "seed", _int),
    "sim.shocks": ("sim", "shocks", str),
    "lsmc.degree": ("lsmc", "degree", _int),
    "lsmc.basis": ("lsmc", "basis", str),
    "lsmc.ridge": ("lsmc", "ridge", float),
    "lsmc.standardize": ("lsmc", "standardize", _bool),
    "lsmc.regress_all_paths": ("lsmc", "regress_all_paths", _bool),
    "lsmc.include_step_increment": ("lsmc", "include_step_increment", _bool),
    "lsmc.target": ("lsmc", "target", str),
    "lsmc.exit_at_start": ("lsmc", "exit_at_start", _bool),
    "grid.s_min": ("grid", "s_min", float),
    "grid.s_max": ("grid", "s_max", float),
    "grid.n_s": ("grid", "n_s", _int),
    "grid.n_t": ("grid", "n_t", _int),
    "grid.save_every": ("grid", "save_every", _int),
    "risk.psi": ("risk", "psi", float),
    "sweep.target": ("sweep", "target", str),
    "sweep.multipliers": ("sweep", "multipliers", _floats),
    "sweep.seed_mode": ("sweep", "seed_mode", str),
    "run.output_dir": ("run", "output_dir", str),
    "run.profile": ("run", "profile", str),
    "run.preset": ("run", "preset", str),
}
KNOWN_KEYS = tuple(_KEYS)


def _read(text: str) -> dict:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   strict=True, delimiters=("=",))
    cp.optionxform = str
    try:
        cp.read_string(f"[{_SECTION}]\n{text}")
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    extra = [s for s in cp.sections() if s != _SECTION]
    if extra:
        raise ConfigError(f"sections are not supported (found [{extra[0]}]); use prefixed keys")
    return dict(cp[_SECTION])


def _rebuild(base, updates: dict, what: str):
    if not updates:
        return base
    try:
        if what == "pool":
            kw = {k: getattr(base, k) for k in ("xi", "y0", "x0", "y_lower", "y_upper")}
            kw.update(updates)
            return PoolConfig(**kw)
        if what == "risk":
            return RiskAversion(**updates)
        return replace(base, **updates)
    except ConfigError as exc:
        keys = ", ".join(f"{what}.{k}" for k in updates)
        raise ConfigError(f"{keys}: {exc}") from None


def parse_config(text: str, preset_name: str | None = None, profile: str | None = None) -> RunConfig:
    """Parse a flat ``key = value`` document on top of a preset.

    The preset comes from ``preset_name``, else the document's ``run.preset``
    key, else ``paper-calibrated``. ``profile`` (or ``run.profile``) ``desk``
    lowers the default path count to 2 000; an explicit ``sim.n_paths`` wins.
    Changing ``market.s0`` does not rescale ``pool.x0``; changing any market
    key re-centres a grid whose S bounds are not given explicitly.
    """
    raw = _read(text)
    parsed: dict[str, dict] = {}
    for key, value in raw.items():
        if key not in _KEYS:
            raise ConfigError(f"unknown key {key!r}")
        comp, name, conv = _KEYS[key]
        try:
            parsed.setdefault(comp, {})[name] = conv(value)
        except ValueError as exc:
            raise ConfigError(f"{key}: {exc}") from None

    run = parsed.pop("run", {})
    name = preset_name or run.get("preset") or "paper-calibrated"
    cfg = preset(name)
    prof = profile or run.get("profile") or "paper"
    if prof not in PROFILE_PATHS:
        raise ConfigError(f"run.profile must be one of {tuple(PROFILE_PATHS)}")
    sim = cfg.sim
    if prof == "desk":
        sim = replace(sim, n_paths=PROFILE_PATHS["desk"])

    pool = _rebuild(cfg.pool, parsed.get("pool", {}), "pool")
    market = _rebuild(cfg.market, parsed.get("market", {}), "market")
    fee = _rebuild(cfg.fee, parsed.get("fee", {}), "fee")
    sim = _rebuild(sim, parsed.get("sim", {}), "sim")
    lsmc = _rebuild(cfg.lsmc, parsed.get("lsmc", {}), "lsmc")
    grid_upd = parsed.get("grid", {})
    grid = cfg.grid
    if "market" in parsed and not {"s_min", "s_max"} & set(grid_upd):
        grid = GridSpec.around(market, grid.n_s, grid.n_t, save_every=grid.save_every)
    grid = _rebuild(grid, grid_upd, "grid")
    risk = _rebuild(None, parsed["risk"], "risk") if "risk" in parsed else None
    sweep = _rebuild(cfg.sweep, parsed.get("sweep", {}), "sweep")
    return RunConfig(pool, market, fee, sim, lsmc, grid, risk, sweep,
                     output_dir=run.get("output_dir", cfg.output_dir), profile=prof, preset=name)
