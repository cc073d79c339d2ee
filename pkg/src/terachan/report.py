"""Evaluation report: delimited tables, summary JSON, and rendered figures."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import plots
from .channel import ChannelSample
from .metrics import (
    CdfTable,
    PdapConfig,
    PdapGrid,
    angular_spread,
    average_pdap,
    cdf,
    delay_spread,
    pdap_rmse,
    quantile,
    ssim_over_pairs,
)


def write_cdf_csv(table: CdfTable, path) -> None:
    with open(path, "w") as fh:
        fh.write("value,probability\n")
        for v, p in zip(table.values, table.probabilities):
            fh.write(f"{v!r},{p!r}\n")


def write_pdap_csv(grid: PdapGrid, path) -> None:
    cfg = grid.config
    with open(path, "w") as fh:
        fh.write("delay_s\\aoa_deg," + ",".join(repr(a) for a in cfg.angle_centers()) + "\n")
        for tau, row in zip(cfg.delay_centers(), grid.values):
            fh.write(f"{tau!r}," + ",".join(repr(v) for v in row) + "\n")


def _set_stats(samples: list[ChannelSample]) -> dict:
    ds = [delay_spread(s) for s in samples]
    sp = [angular_spread(s) for s in samples]
    return {
        "sample_count": len(samples),
        "mean_delay_spread_s": float(np.mean(ds)),
        "mean_angular_spread_deg": float(np.mean(sp)),
    }


def evaluate_sets(real: list[ChannelSample], generated: list[ChannelSample],
                  grid_cfg: PdapConfig, ssim_gap: float = 0.5,
                  ssim_values: list[float] | None = None) -> dict:
    """All comparison statistics between a reference set and a generated set."""
    real_stats = _set_stats(real)
    gen_stats = _set_stats(generated)
    rmse = pdap_rmse(average_pdap(real, grid_cfg), average_pdap(generated, grid_cfg))
    if ssim_values is None:
        ssim_values = ssim_over_pairs(generated, real, grid_cfg, max_gap=ssim_gap)
    summary = {
        "real": real_stats,
        "generated": gen_stats,
        "delay_spread_gap_rel": abs(gen_stats["mean_delay_spread_s"] - real_stats["mean_delay_spread_s"])
        / real_stats["mean_delay_spread_s"],
        "angular_spread_gap_rel": abs(gen_stats["mean_angular_spread_deg"] - real_stats["mean_angular_spread_deg"])
        / real_stats["mean_angular_spread_deg"],
        "pdap_rmse_db": rmse,
        "ssim": {},
    }
    if ssim_values:
        table = cdf(ssim_values)
        summary["ssim"] = {
            "pair_count": len(ssim_values),
            "min": float(min(ssim_values)),
            "p25": quantile(table, 0.25),
            "median": quantile(table, 0.5),
            "p75": quantile(table, 0.75),
            "max": float(max(ssim_values)),
        }
    return summary


def write_report(real: list[ChannelSample], generated: list[ChannelSample],
                 grid_cfg: PdapConfig, out_dir, ssim_gap: float = 0.5) -> dict:
    """Write CSV tables, summary.json and figures; returns the summary dict."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    cdf_delay_real = cdf([delay_spread(s) for s in real])
    cdf_delay_gen = cdf([delay_spread(s) for s in generated])
    cdf_angle_real = cdf([angular_spread(s) for s in real])
    cdf_angle_gen = cdf([angular_spread(s) for s in generated])
    write_cdf_csv(cdf_delay_real, out / "cdf_delay_real.csv")
    write_cdf_csv(cdf_delay_gen, out / "cdf_delay_gen.csv")
    write_cdf_csv(cdf_angle_real, out / "cdf_angle_real.csv")
    write_cdf_csv(cdf_angle_gen, out / "cdf_angle_gen.csv")

    pdap_real = average_pdap(real, grid_cfg)
    pdap_gen = average_pdap(generated, grid_cfg)
    write_pdap_csv(pdap_real, out / "pdap_real.csv")
    write_pdap_csv(pdap_gen, out / "pdap_gen.csv")

    ssim_values = ssim_over_pairs(generated, real, grid_cfg, max_gap=ssim_gap)
    summary = evaluate_sets(real, generated, grid_cfg, ssim_gap, ssim_values=ssim_values)
    if ssim_values:
        ssim_table = cdf(ssim_values)
        write_cdf_csv(ssim_table, out / "ssim_cdf.csv")
        plots.cdf_figure({"generated vs real": ssim_table}, "SSIM", out / "ssim_cdf.png")

    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")

    plots.cdf_figure(
        {"real": cdf_delay_real, "generated": cdf_delay_gen},
        "RMS delay spread (ns)", out / "cdf_delay.png", scale=1e9,
    )
    plots.cdf_figure(
        {"real": cdf_angle_real, "generated": cdf_angle_gen},
        "RMS angular spread (deg)", out / "cdf_angle.png",
    )
    plots.pdap_figure(pdap_real, "average PDAP, real", out / "pdap_real.png")
    plots.pdap_figure(pdap_gen, "average PDAP, generated", out / "pdap_gen.png")
    return summary
