import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lpexit.model import (
    ConfigError,
    DomainError,
    FeeSchedule,
    MarketParams,
    PoolConfig,
    PoolState,
    admissible_buy,
    admissible_sell,
    beta_buy,
    beta_sell,
    impermanent_loss,
    intensity_buy,
    intensity_sell,
    level_curve,
    marginal_price,
)

TOY = PoolConfig(xi=1.0, y0=1000.0, x0=1000.0, y_lower=850.0, y_upper=1150.0)
TOY_MARKET = MarketParams(sigma=100.0, s0=1.0, a0=4.0, a1=8.0, a2=0.04)


def test_depth_and_lattice():
    assert TOY.depth == 1e6
    assert TOY.n_levels == 301
    assert TOY.levels[0] == 850 and TOY.levels[-1] == 1150
    assert TOY.index0 == 150
    assert TOY.index_of(np.array([850.0, 1150.0])).tolist() == [0, 300]


@pytest.mark.parametrize("y", [849.0, 1151.0, 1000.5])
def test_off_lattice_reserve_rejected(y):
    with pytest.raises(DomainError):
        TOY.index_of(y)
    assert not TOY.on_lattice(y)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(xi=0.0, y0=10, x0=10, y_lower=1, y_upper=20),
        dict(xi=1.0, y0=10, x0=10, y_lower=20, y_upper=5),
        dict(xi=1.0, y0=30, x0=10, y_lower=1, y_upper=20),
        dict(xi=2.0, y0=10, x0=10, y_lower=3, y_upper=20),
        dict(xi=1.0, y0=10, x0=-1, y_lower=1, y_upper=20),
    ],
)
def test_pool_invariants(kwargs):
    with pytest.raises(ConfigError):
        PoolConfig(**kwargs)


def test_from_price_defaults():
    cfg = PoolConfig.from_price(y0=50_000.0, z0=2820.0, xi=100.0)
    assert cfg.x0 == 50_000.0 * 2820.0
    assert (cfg.y_lower, cfg.y_upper) == (100.0, 200_000.0)
    assert marginal_price(cfg, cfg.y0) == pytest.approx(2820.0, rel=1e-15)


def test_level_curve_and_price_values():
    assert level_curve(TOY, 1000.0) == 1000.0
    assert level_curve(TOY, 800.0) == 1250.0
    assert marginal_price(TOY, 500.0) == 4.0
    with pytest.raises(DomainError):
        marginal_price(TOY, 0.0)
    with pytest.raises(DomainError):
        level_curve(TOY, np.array([1.0, -2.0]))


def test_beta_hand_values():
    fee = FeeSchedule.constant(25.0)
    # 1e6/1001 - 1000 + 1 * 1 + 25
    assert beta_buy(TOY, fee, 1000.0, 1.0) == pytest.approx(1e6 / 1001 - 1000 + 26, rel=1e-15)
    assert beta_buy(TOY, fee, 1000.0, 1.0) == pytest.approx(25.000999000999, abs=1e-11)
    # 1e6/999 - 1000 - 1 * 1 + 25
    assert beta_sell(TOY, fee, 1000.0, 1.0) == pytest.approx(25.001001001001, abs=1e-11)


def test_beta_rejects_off_lattice_and_empty_pool():
    fee = FeeSchedule.constant(1.0)
    with pytest.raises(DomainError):
        beta_buy(TOY, fee, 1000.3, 1.0)
    tiny = PoolConfig(xi=1.0, y0=1.0, x0=1.0, y_lower=1.0, y_upper=3.0)
    with pytest.raises(DomainError):
        beta_sell(tiny, fee, 1.0, 1.0)


def test_intensities_at_alignment():
    z = marginal_price(TOY, 1000.0)
    assert intensity_buy(TOY_MARKET, TOY, 1000.0, z) == 8.0
    assert intensity_sell(TOY_MARKET, TOY, 1000.0, z) == 8.0


def test_intensity_direction():
    # oracle above pool price: takers withdraw the cheap Y (sell events)
    s = 1.0 + 50.0
    assert intensity_sell(TOY_MARKET, TOY, 1000.0, s) == pytest.approx(8 + 0.04 * 50)
    assert intensity_buy(TOY_MARKET, TOY, 1000.0, s) == pytest.approx(8 - 0.04 * 50)
    assert intensity_buy(TOY_MARKET, TOY, 1000.0, 1.0 + 500.0) == 4.0


def test_admissibility_at_bounds():
    assert not admissible_buy(TOY, 1150.0) and admissible_buy(TOY, 1149.0)
    assert not admissible_sell(TOY, 850.0) and admissible_sell(TOY, 851.0)


def test_fee_schedules():
    lin = FeeSchedule.linear(2.0, 0.5)
    assert lin(10.0) == 7.0
    assert FeeSchedule.constant(3.0)(np.array([1.0, 2.0])).tolist() == [3.0, 3.0]
    assert lin.scaled(2)(10.0) == 14.0
    for bad in (dict(kind="cubic"), dict(intercept=-1.0), dict(kind="constant", slope=1.0)):
        with pytest.raises(ConfigError):
            FeeSchedule(**bad)


def test_market_params_validation_and_scaling():
    assert TOY_MARKET.scaled(sigma=2, a2=0.5).sigma == 200.0
    assert TOY_MARKET.scaled(a2=0.5).a2 == 0.02
    for bad in (dict(sigma=-1), dict(a0=0), dict(a1=-1), dict(horizon=0)):
        with pytest.raises(ConfigError):
            MarketParams(**{**dict(sigma=1, s0=1, a0=1, a1=1, a2=1), **bad})


def test_round_trip_restores_reserves_exactly():
    fee = FeeSchedule.constant(25.0)
    st0 = PoolState.initial(TOY, 1.3)
    back = st0.buy(TOY, fee).sell(TOY, fee)
    assert (back.x, back.y) == (st0.x, st0.y)
    assert back.fees == 50.0
    assert impermanent_loss(back) == impermanent_loss(st0) == 0.0
    back.check(TOY)


def test_state_at_bounds_and_il():
    fee = FeeSchedule.constant(0.0)
    top = PoolState(level_curve(TOY, 1150.0), 1150.0, 1.0, px=level_curve(TOY, 1150.0) - 1000,
                    py=150.0)
    with pytest.raises(DomainError):
        top.buy(TOY, fee)
    # IL = -(P^X + S P^Y) >= 0 for a constant-product pool (concavity)
    assert impermanent_loss(top.at_price(marginal_price(TOY, 1150.0))) > 0
    with pytest.raises(DomainError):
        PoolState(1.0, 1000.0, 1.0).check(TOY)


lattice_y = st.integers(min_value=851, max_value=1149).map(float)
prices = st.floats(min_value=-500, max_value=500, allow_nan=False)
fees = st.floats(min_value=0, max_value=1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(lattice_y, prices, fees)
def test_round_trip_beta_sum_is_two_fees(y, s, f):
    fee = FeeSchedule.constant(f)
    total = beta_buy(TOY, fee, y, s) + beta_sell(TOY, fee, y + 1.0, s)
    assert math.isclose(total, 2 * f, rel_tol=1e-9, abs_tol=1e-9 * (1 + abs(s)))


@settings(max_examples=200, deadline=None)
@given(lattice_y, prices, st.floats(0.01, 10), st.floats(0, 20), st.floats(0, 1))
def test_intensity_floor_and_mirror(y, s, a0, a1, a2):
    mk = MarketParams(sigma=1.0, s0=0.0, a0=a0, a1=a1, a2=a2)
    lb, la = intensity_buy(mk, TOY, y, s), intensity_sell(mk, TOY, y, s)
    assert lb >= a0 and la >= a0
    z = marginal_price(TOY, y)
    assert intensity_buy(mk, TOY, y, z - (s - z)) == pytest.approx(la, rel=1e-12, abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(lattice_y, prices)
def test_beta_matches_state_accounting(y, s):
    fee = FeeSchedule.constant(7.0)
    st0 = PoolState(level_curve(TOY, y), y, s, px=level_curve(TOY, y) - TOY.x0, py=y - TOY.y0)
    after = st0.buy(TOY, fee)
    gain = (after.fees - impermanent_loss(after)) - (st0.fees - impermanent_loss(st0))
    assert gain == pytest.approx(beta_buy(TOY, fee, y, s), rel=1e-9, abs=1e-6)
