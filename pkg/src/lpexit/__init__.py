"""Optimal exit of a liquidity provider from a constant-product pool.

Submodules: ``model`` (pool mechanics), ``simulation`` (Monte Carlo paths),
``lsmc`` (regression exit rule), ``pde`` (grid solver), ``experiments``
(parameter sweeps), ``config`` and ``cli``.
"""
__version__ = "0.1.0"

from .model import (  # noqa: E402
    ConfigError,
    DomainError,
    FeeSchedule,
    MarketParams,
    PoolConfig,
    PoolState,
    beta_buy,
    beta_sell,
    impermanent_loss,
    intensity_buy,
    intensity_sell,
    level_curve,
    marginal_price,
)
from .simulation import PathBundle, SimConfig, path_quantiles, simulate  # noqa: E402
from .lsmc import LsmcConfig, LsmcResult, apply_rule, backward_induct, exit_statistics  # noqa: E402
from .pde import (  # noqa: E402
    GridSpec,
    PolicySurface,
    RiskAversion,
    ValueGrid,
    extract_policy,
    qvi_residual,
    solve_qvi,
    solve_qvi_risk_averse,
)
from .experiments import (  # noqa: E402
    Scenario,
    SweepReport,
    SweepRow,
    exit_scatter,
    performance_curve,
    run_sweep,
    table_scenarios,
)
from .config import RunConfig, calibrated_preset, parse_config, toy_preset  # noqa: E402
