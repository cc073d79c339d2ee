"""Channel statistics: RMS spreads, power delay angular profiles, RMSE, SSIM.

Spreads are computed directly on the discrete MPCs (each path is one delay /
angle mass with power = squared gain); the binned profile view lives in the
PDAP functions. Angles are treated as plain reals in [-180, 180) since the
LoS reference pins the distribution at zero degrees.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .channel import ChannelSample

SSIM_WINDOW = 8
SSIM_K1 = 0.01
SSIM_K2 = 0.03


class MetricError(ValueError):
    pass


class GridMismatchError(MetricError):
    """Two grids with different configurations were compared."""


@dataclass(frozen=True)
class PdapConfig:
    """Binning of the delay-angle power grid. Values in dB, floored."""

    delay_bin: float = 2.5e-9
    delay_span: float = 400e-9
    angle_bin: float = 2.0
    angle_min: float = -180.0
    angle_span: float = 360.0
    floor_db: float = -200.0

    def __post_init__(self):
        if self.delay_bin <= 0 or self.angle_bin <= 0:
            raise MetricError("bin widths must be positive")
        if self.delay_span <= 0 or self.angle_span <= 0:
            raise MetricError("grid spans must be positive")

    @property
    def n_delay(self) -> int:
        return int(round(self.delay_span / self.delay_bin))

    @property
    def n_angle(self) -> int:
        return int(round(self.angle_span / self.angle_bin))

    def delay_centers(self) -> np.ndarray:
        return (np.arange(self.n_delay) + 0.5) * self.delay_bin

    def angle_centers(self) -> np.ndarray:
        return self.angle_min + (np.arange(self.n_angle) + 0.5) * self.angle_bin


@dataclass
class PdapGrid:
    config: PdapConfig
    values: np.ndarray          # dB, shape (n_delay, n_angle), all >= floor_db
    clipped: int = 0            # MPCs clamped onto an edge bin

    def __post_init__(self):
        expected = (self.config.n_delay, self.config.n_angle)
        if self.values.shape != expected:
            raise MetricError(f"grid shape {self.values.shape} != configured {expected}")


def _weighted_rms_spread(positions: np.ndarray, powers: np.ndarray) -> float:
    total = powers.sum()
    if total <= 0:
        raise MetricError("all-zero power; spread undefined")
    weights = powers / total
    mean_pos = float((positions * weights).sum())
    return math.sqrt(float(((positions - mean_pos) ** 2 * weights).sum()))


def delay_spread(sample: ChannelSample) -> float:
    """Power-weighted RMS spread of the MPC delays, in seconds."""
    return _weighted_rms_spread(sample.delays(), sample.powers())


def angular_spread(sample: ChannelSample) -> float:
    """Power-weighted RMS spread of the arrival angles, in degrees."""
    return _weighted_rms_spread(sample.aoas(), sample.powers())


def _linear_grid(sample: ChannelSample, cfg: PdapConfig) -> tuple[np.ndarray, int]:
    grid = np.zeros((cfg.n_delay, cfg.n_angle))
    clipped = 0
    for m in sample.mpcs:
        i = math.floor(m.delay / cfg.delay_bin)
        j = math.floor((m.aoa - cfg.angle_min) / cfg.angle_bin)
        if not 0 <= i < cfg.n_delay or not 0 <= j < cfg.n_angle:
            clipped += 1
            i = min(max(i, 0), cfg.n_delay - 1)
            j = min(max(j, 0), cfg.n_angle - 1)
        grid[i, j] += m.power
    return grid, clipped


def _to_db(linear: np.ndarray, floor_db: float) -> np.ndarray:
    out = np.full(linear.shape, floor_db)
    hot = linear > 0
    with np.errstate(divide="ignore"):
        out[hot] = 10.0 * np.log10(linear[hot])
    return np.maximum(out, floor_db)


def pdap(sample: ChannelSample, cfg: PdapConfig) -> PdapGrid:
    """Accumulate MPC powers onto the delay-angle grid, in dB."""
    linear, clipped = _linear_grid(sample, cfg)
    return PdapGrid(config=cfg, values=_to_db(linear, cfg.floor_db), clipped=clipped)


def average_pdap(samples: list[ChannelSample], cfg: PdapConfig) -> PdapGrid:
    """Cell-wise mean of the linear per-sample grids, then dB."""
    if not samples:
        raise MetricError("average_pdap needs at least one sample")
    acc = np.zeros((cfg.n_delay, cfg.n_angle))
    clipped = 0
    for s in samples:
        linear, c = _linear_grid(s, cfg)
        acc += linear
        clipped += c
    return PdapGrid(config=cfg, values=_to_db(acc / len(samples), cfg.floor_db), clipped=clipped)


def _check_same_grid(a: PdapGrid, b: PdapGrid) -> None:
    if a.config != b.config:
        raise GridMismatchError(f"grid configs differ: {a.config} vs {b.config}")


def pdap_rmse(a: PdapGrid, b: PdapGrid) -> float:
    """Root-mean-square cell difference in the dB domain."""
    _check_same_grid(a, b)
    return math.sqrt(float(np.mean((a.values - b.values) ** 2)))


def ssim(a: PdapGrid, b: PdapGrid, window: int = SSIM_WINDOW) -> float:
    """Mean local SSIM over uniform stride-1 windows of the dB grids.

    The dynamic range spans the grid floor to the brighter of the two
    observed maxima. Grids smaller than the window fall back to one global
    window. Identical grids score exactly 1.
    """
    _check_same_grid(a, b)
    x, y = a.values, b.values
    data_range = float(max(x.max(), y.max()) - a.config.floor_db)
    if data_range == 0.0:
        return 1.0
    c1 = (SSIM_K1 * data_range) ** 2
    c2 = (SSIM_K2 * data_range) ** 2

    if min(x.shape) < window:
        windows_x = x.reshape(1, 1, *x.shape)
        windows_y = y.reshape(1, 1, *y.shape)
    else:
        windows_x = sliding_window_view(x, (window, window))
        windows_y = sliding_window_view(y, (window, window))

    mu_x = windows_x.mean(axis=(-1, -2))
    mu_y = windows_y.mean(axis=(-1, -2))
    var_x = (windows_x ** 2).mean(axis=(-1, -2)) - mu_x ** 2
    var_y = (windows_y ** 2).mean(axis=(-1, -2)) - mu_y ** 2
    cov = (windows_x * windows_y).mean(axis=(-1, -2)) - mu_x * mu_y

    score = ((2 * mu_x * mu_y + c1) * (2 * cov + c2)) / (
        (mu_x ** 2 + mu_y ** 2 + c1) * (var_x + var_y + c2)
    )
    return float(score.mean())


@dataclass(frozen=True)
class CdfTable:
    """Empirical CDF, plot-ready: sorted values with cumulative probabilities."""

    values: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        if self.values.size == 0 or self.values.size != self.probabilities.size:
            raise MetricError("values and probabilities must align and be non-empty")
        if np.any(np.diff(self.probabilities) < 0) or self.probabilities[-1] != 1.0:
            raise MetricError("probabilities must be non-decreasing and end at 1")


def cdf(values) -> CdfTable:
    values = np.asarray(list(values), dtype=np.float64)
    if values.size == 0:
        raise MetricError("cdf of an empty collection")
    order = np.sort(values)
    probs = np.arange(1, order.size + 1) / order.size
    return CdfTable(values=order, probabilities=probs)


def quantile(table: CdfTable, q: float) -> float:
    idx = int(np.searchsorted(table.probabilities, q))
    idx = min(idx, table.values.size - 1)
    return float(table.values[idx])


def pair_by_distance(generated: list[ChannelSample], reference: list[ChannelSample],
                     max_gap: float = 0.5) -> list[tuple[int, int]]:
    """Match each generated sample to the nearest-distance reference sample.

    Pairs whose distance gap exceeds ``max_gap`` meters are dropped; a
    reference sample may serve several generated samples.
    """
    ref_dist = np.array([s.distance for s in reference])
    order = np.argsort(ref_dist, kind="stable")
    sorted_dist = ref_dist[order]
    pairs = []
    for gi, g in enumerate(generated):
        pos = int(np.searchsorted(sorted_dist, g.distance))
        best = None
        for cand in (pos - 1, pos):
            if 0 <= cand < sorted_dist.size:
                gap = abs(sorted_dist[cand] - g.distance)
                if best is None or gap < best[0]:
                    best = (gap, int(order[cand]))
        if best is not None and best[0] <= max_gap:
            pairs.append((gi, best[1]))
    return pairs


def ssim_over_pairs(generated: list[ChannelSample], reference: list[ChannelSample],
                    cfg: PdapConfig, max_gap: float = 0.5) -> list[float]:
    return [
        ssim(pdap(generated[gi], cfg), pdap(reference[ri], cfg))
        for gi, ri in pair_by_distance(generated, reference, max_gap)
    ]
