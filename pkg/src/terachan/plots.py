"""Matplotlib figure rendering for the report path (headless, files only)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

from .metrics import CdfTable, PdapGrid  # noqa: E402

FIG_SIZE = (5.0, 3.6)
DPI = 130


def _save(fig, path) -> None:
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def cdf_figure(tables: dict[str, CdfTable], xlabel: str, path, scale: float = 1.0) -> None:
    """Step-plot one or more empirical CDFs on a shared axis."""
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    for label, table in tables.items():
        ax.step(table.values * scale, table.probabilities, where="post", label=label)
    ax.set_xlabel(xlabel)
    ax.set_ylabel("cumulative probability")
    ax.set_ylim(0.0, 1.02)
    ax.grid(alpha=0.3)
    ax.legend()
    _save(fig, path)


def pdap_figure(grid: PdapGrid, title: str, path) -> None:
    cfg = grid.config
    fig, ax = plt.subplots(figsize=FIG_SIZE)
    extent = (
        cfg.angle_min, cfg.angle_min + cfg.angle_span,
        0.0, cfg.delay_span * 1e9,
    )
    im = ax.imshow(grid.values, origin="lower", aspect="auto", extent=extent,
                   cmap="viridis")
    ax.set_xlabel("AoA (deg)")
    ax.set_ylabel("delay (ns)")
    ax.set_title(title)
    fig.colorbar(im, ax=ax, label="power (dB)")
    _save(fig, path)


def training_curves_figure(rows: list[dict], path) -> None:
    iters = [r["iteration"] for r in rows]
    fig, axes = plt.subplots(2, 1, figsize=(5.0, 5.4), sharex=True)
    axes[0].plot(iters, [r["d_loss"] for r in rows], lw=0.8, label="discriminator loss")
    g_pts = [(r["iteration"], r["g_loss"]) for r in rows if r["g_loss"] != ""]
    if g_pts:
        axes[0].plot(*zip(*g_pts), lw=0.8, label="generator loss")
    axes[0].legend()
    axes[0].grid(alpha=0.3)
    axes[1].plot(iters, [r["penalty"] for r in rows], lw=0.8, color="tab:red")
    axes[1].set_ylabel("gradient penalty")
    axes[1].set_xlabel("iteration")
    axes[1].grid(alpha=0.3)
    _save(fig, path)
