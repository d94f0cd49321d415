"""Solve the exit problem on a grid and look at where holding pays.

    python3 demos/grid_solver.py
"""
from lpexit import RiskAversion, extract_policy, solve_qvi, solve_qvi_risk_averse, toy_preset

cfg = toy_preset()
print(f"Toy pool, grid of {cfg.grid.n_s + 1} prices x {cfg.pool.n_levels} reserves x "
      f"{cfg.grid.n_t} time steps.")
vg = solve_qvi(cfg.pool, cfg.market, cfg.fee, cfg.grid)
print(f"Value of a fresh position at aligned prices: {vg.value_at(0.0, 1000.0, 1.0):.2f}\n")

policy = extract_policy(vg)
print("Prices at which the LP should keep its liquidity:")
for t_idx, t in enumerate(vg.times):
    for y in (900.0, 1000.0, 1100.0):
        j = vg.level_index(y)
        spans = ", ".join(f"[{lo:.0f}, {hi:.0f}]" for lo, hi in policy.intervals(t_idx, j)) or "none"
        print(f"  t = {t:.1f}, y = {y:g} (pool price {cfg.pool.depth / y**2:.2f}): {spans}")

print("\nThe hold band spans roughly one daily standard deviation of the outside price")
print("on each side of the pool price; it narrows over the day and is empty at the horizon.")

ra = solve_qvi_risk_averse(cfg.pool, cfg.market, cfg.fee, cfg.grid, RiskAversion(1e-3))
print(f"A risk-averse LP (psi = 1e-3) values the same position at "
      f"{ra.value_at(0.0, 1000.0, 1.0):.2f}.")
