"""A nonconvex safe set with a weak safeguard.

Flipping the parabola gives {x1 < 1 + x2^2}, which is not convex. The safeguard
gain here is only 0.001, so almost all of the work is done by the learned
policy; the barrier term wakes up only when h gets small.

    python3 demos/nonconvex_safe_set.py [outdir]
"""

import sys
from pathlib import Path

import numpy as np

from safe_mbrl.plots import render_plots
from safe_mbrl.sim import builtin_scenarios, run_scenario

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_out")
cfg = builtin_scenarios()["nonlinear_nonconvex_safe"]
log = run_scenario(cfg)
render_plots(log, cfg, out)

sg = np.linalg.norm(log.u_safeguard, axis=1)
print(f"min h = {log.min_h:.4f} at t = {log.t[np.argmin(log.h)]:.2f}")
print(f"largest safeguard input = {sg.max():.3e} at t = {log.t[np.argmax(sg)]:.2f}")
print(f"|x(T)| = {np.linalg.norm(log.terminal_state):.4f} after {log.wall_time:.1f} s of compute")
