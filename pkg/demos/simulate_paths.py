"""Simulate pool trajectories and look at what the LP earns along the way.

    python3 demos/simulate_paths.py
"""
import numpy as np

from lpexit import SimConfig, path_quantiles, simulate, toy_preset

cfg = toy_preset()
bundle = simulate(cfg.pool, cfg.market, cfg.fee, SimConfig(n_steps=1440, n_paths=2000, seed=7))
bundle.check()

print(f"{bundle.n_paths} paths over one day in {bundle.n_steps} steps, seed 7.")
trades = bundle.buy_counts[:, -1] + bundle.sell_counts[:, -1]
print(f"Takers hit the pool {trades.mean():.1f} times per path on average.")
print(f"Reserve Y ends between {bundle.y_paths[:, -1].min():g} and "
      f"{bundle.y_paths[:, -1].max():g}; every step stayed on x*y = c.\n")

print("Fees grow steadily while impermanent loss is small on average but heavy-tailed:")
for t in (0.25, 0.5, 1.0):
    k = int(round(t * bundle.n_steps))
    r, il = bundle.r_paths[:, k], bundle.il_paths[:, k]
    print(f"  t = {t:4}: mean fees {r.mean():7.1f}   mean IL {il.mean():7.1f}   "
          f"95th pct IL {np.percentile(il, 95):7.1f}")

lo, hi = path_quantiles(bundle)["perf"]
print(f"\n5-95% band of fees minus IL at the horizon: [{lo[-1]:.1f}, {hi[-1]:.1f}]")

print("\nThe same seed always gives the same paths:")
again = simulate(cfg.pool, cfg.market, cfg.fee, SimConfig(n_steps=1440, n_paths=2000, seed=7))
print("  identical:", again.s_paths.tobytes() == bundle.s_paths.tobytes())
