"""Static SVG figures of a finished run."""

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from safe_mbrl.sim import ScenarioConfig, SimLog  # noqa: E402

__all__ = ["render_plots", "boundary_polyline"]


def boundary_polyline(config: ScenarioConfig, num: int = 400) -> np.ndarray:
    """Sampled points of ``h(x) = 0`` as an (num, 2) array."""
    if config.set_kind == "parabola":
        x2 = np.linspace(-3.0, 3.0, num)
        return np.column_stack([1.0 + config.p * x2**2, x2])
    angle = np.linspace(0.0, 2.0 * np.pi, num)
    c = np.asarray(config.obstacle_center, float)
    return c + config.obstacle_radius * np.column_stack([np.cos(angle), np.sin(angle)])


def _phase(log, config, ax):
    if config.set_kind == "parabola":
        pts = boundary_polyline(config)
        ax.plot(pts[:, 0], pts[:, 1], "k-", lw=1.2, label="h(x) = 0")
    else:
        disk = plt.Circle(config.obstacle_center, config.obstacle_radius, color="0.6", alpha=0.6, label="obstacle")
        ax.add_patch(disk)
    ax.plot(log.x[:, 0], log.x[:, 1], lw=1.5, label=config.mode.value)
    ax.plot(*log.x[0], "o", ms=4, color="C0")
    ax.plot(0.0, 0.0, "k+", ms=8)
    pad = 0.5
    lo = np.minimum(log.x.min(axis=0), 0.0) - pad
    hi = np.maximum(log.x.max(axis=0), 0.0) + pad
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_aspect("equal", adjustable="box")
    ax.legend(loc="best", fontsize=8)


def render_plots(log: SimLog, config: ScenarioConfig, outdir, stem=None) -> list:
    """Write phase portrait, h(t) and weight trajectories; return the file paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    stem = stem or log.scenario
    paths = []

    fig, ax = plt.subplots(figsize=(5, 4))
    _phase(log, config, ax)
    ax.set_title(f"{log.scenario}: trajectory")
    paths.append(outdir / f"{stem}_phase.svg")
    fig.savefig(paths[-1], format="svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3))
    ax.plot(log.t, log.h, lw=1.2)
    ax.axhline(0.0, color="k", lw=0.8, ls=":")
    ax.set_xlabel("t")
    ax.set_ylabel("h(x(t))")
    ax.set_title(f"{log.scenario}: barrier")
    paths.append(outdir / f"{stem}_h.svg")
    fig.savefig(paths[-1], format="svg")
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(5, 3))
    if log.p:
        true = config.build_system().true_weights
        for i in range(log.p):
            ax.plot(log.t, log.theta[:, i], lw=1.2, color=f"C{i}", label=f"theta_hat{i + 1}")
            ax.axhline(true[i], color=f"C{i}", ls="--", lw=0.8)
        ax.set_title(f"{log.scenario}: drift weights")
    else:
        for i in range(log.L):
            ax.plot(log.t, log.w_a[:, i], lw=1.2, color=f"C{i}", label=f"Wa{i + 1}")
            ax.plot(log.t, log.w_c[:, i], lw=0.8, color=f"C{i}", ls="--", label=f"Wc{i + 1}")
        ax.set_title(f"{log.scenario}: value weights")
    ax.set_xlabel("t")
    ax.legend(loc="best", fontsize=7, ncol=2)
    paths.append(outdir / f"{stem}_weights.svg")
    fig.savefig(paths[-1], format="svg")
    plt.close(fig)
    return paths
