"""Walk through the pool arithmetic: prices, trade payoffs and who trades when.

    python3 demos/pool_model.py
"""
from lpexit import (
    FeeSchedule,
    MarketParams,
    PoolConfig,
    PoolState,
    beta_buy,
    beta_sell,
    impermanent_loss,
    intensity_buy,
    intensity_sell,
    marginal_price,
)

pool = PoolConfig(xi=1.0, y0=1000.0, x0=1000.0, y_lower=850.0, y_upper=1150.0)
market = MarketParams(sigma=100.0, s0=1.0, a0=4.0, a1=8.0, a2=0.04)
fee = FeeSchedule.constant(25.0)

print(f"A pool holding {pool.y0:g} Y and {pool.x0:g} X keeps x*y = {pool.depth:g}.")
print(f"Its marginal price c/y^2 is {marginal_price(pool, pool.y0):g} X per Y.\n")

print("Each taker trade moves the reserve by one lot. What does the LP gain from it,")
print("fee included, when the outside price is S?")
for s in (0.5, 1.0, 1.5):
    print(f"  S = {s:>4}: buy (Y in) {beta_buy(pool, fee, 1000.0, s):8.4f}   "
          f"sell (Y out) {beta_sell(pool, fee, 1000.0, s):8.4f}")

print("\nA buy followed by a sell puts the reserves back where they were,")
print("so the LP keeps exactly two fees and no loss:")
start = PoolState.initial(pool, 1.0)
back = start.buy(pool, fee).sell(pool, fee)
print(f"  reserves {start.x:g}/{start.y:g} -> {back.x:g}/{back.y:g}, fees {back.fees:g}, "
      f"impermanent loss {impermanent_loss(back) + 0.0:g}")

print("\nWhen the outside price drifts away from the pool price, arbitrageurs trade")
print("more in the direction that realigns them:")
for s in (-100.0, 1.0, 101.0):
    print(f"  S = {s:>6}: buy rate {intensity_buy(market, pool, 1000.0, s):6.2f}   "
          f"sell rate {intensity_sell(market, pool, 1000.0, s):6.2f}")

print("\nAfter ten sells with the outside price at 1.2 the LP has given away cheap Y:")
st = start
for _ in range(10):
    st = st.sell(pool, fee)
st = st.at_price(1.2)
print(f"  y = {st.y:g}, fees {st.fees:g}, impermanent loss {impermanent_loss(st):.4f}")
