"""Sweep one parameter at a time and compare exit statistics row by row.

    python3 demos/parameter_sweeps.py
"""
from dataclasses import replace

from lpexit import calibrated_preset, performance_curve, run_sweep, table_scenarios

cfg = calibrated_preset()
sim = replace(cfg.sim, n_paths=2000)

print("Volatility multipliers, every row driven by the same random numbers:\n")
report = run_sweep(table_scenarios("sigma", cfg.pool, cfg.market, cfg.fee, sim,
                                   multipliers=(1 / 2, 1, 2, 3)))
print(report.render())

print("\nFee income scales with the fee level while the loss barely moves:")
report = run_sweep(table_scenarios("fee", cfg.pool, cfg.market, cfg.fee, sim,
                                   multipliers=(1, 2, 4)))
print(report.render())

print("\nMean performance at exit against the fee multiplier:")
for pt in performance_curve((0, 0.5, 1, 2), cfg.pool, cfg.market, cfg.fee, sim):
    print(f"  x{pt.multiplier:<4g} {pt.mean_perf:>12,.0f} +- {pt.stderr:,.0f}")
