"""Drive the command-line tool end to end on a small configuration.

    python3 demos/command_line.py
"""
import json
import tempfile
from pathlib import Path

from lpexit.cli import main

CONFIG = """\
run.preset = paper-toy
pool.y_lower = 950
pool.y_upper = 1050
sim.n_steps = 288
sim.n_paths = 1000
grid.n_s = 200
grid.n_t = 288
grid.save_every = 144
sweep.target = fee
sweep.multipliers = 1/2, 1, 2
"""

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    cfg = tmp / "toy.ini"
    cfg.write_text(CONFIG)
    print("Config file:\n" + CONFIG)
    for cmd in ("simulate", "lsmc", "pde", "sweep"):
        out = tmp / cmd
        print(f"$ lpexit {cmd} --config toy.ini --out {cmd}/")
        code = main([cmd, "--config", str(cfg), "--out", str(out)])
        man = json.loads((out / "manifest.json").read_text())
        print(f"exit status {code}, manifest says {man['status']}, wrote {', '.join(man['files'])}\n")
    print((tmp / "sweep" / "sweep.txt").read_text())
