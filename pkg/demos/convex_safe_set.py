"""Safeguarded learning inside the convex parabolic set.

The nonlinear plant starts near the edge of the set {x1 < 1 - x2^2}. We run the
same learner three ways: with the barrier safeguard, without it, and with the
barrier folded into the running cost. The printout shows how close each run
comes to the boundary and where it ends up.

    python3 demos/convex_safe_set.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np

from safe_mbrl.logio import write_log
from safe_mbrl.plots import render_plots
from safe_mbrl.sim import builtin_scenarios, run_scenario

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
scenarios = builtin_scenarios()

for name in ("nonlinear_convex_safe", "nonlinear_convex_unguarded", "nonlinear_convex_barrier_cost"):
    cfg = scenarios[name]
    print(f"running {name} ({cfg.mode.value}, T={cfg.horizon:g}) ...", flush=True)
    log = run_scenario(cfg)
    write_log(log, out / f"{name}.csv")
    render_plots(log, cfg, out)
    crossed = log.first_violation_time
    print(f"  min h      = {log.min_h:+.4f}")
    print(f"  first h<=0 = {'never' if crossed is None else f't={crossed:.3f}'}")
    print(f"  |x(T)|     = {np.linalg.norm(log.terminal_state):.4f}")
    print(f"  Wa(T)      = {np.round(log.w_a[-1], 3)}")

print(f"CSV logs and SVG plots are in {out}/")
