"""Statistics against naive-loop oracles, hand anchors, and metric properties."""

import math

import numpy as np
import pytest

from conftest import make_sample
from terachan.channel import ChannelSample, Mpc
from terachan.metrics import (
    CdfTable,
    GridMismatchError,
    MetricError,
    PdapConfig,
    PdapGrid,
    angular_spread,
    average_pdap,
    cdf,
    delay_spread,
    pair_by_distance,
    pdap,
    pdap_rmse,
    quantile,
    ssim,
    ssim_over_pairs,
)

GRID = PdapConfig()
SMALL_GRID = PdapConfig(delay_bin=10e-9, delay_span=200e-9, angle_bin=20.0)


def clustered_sample(delays, aoas, gains, distance=5.0):
    """Sample with 15 MPCs at specified positions (cycled if fewer given)."""
    mpcs = []
    for i in range(15):
        mpcs.append(Mpc(gain=gains[i % len(gains)], phase=0.1, delay=delays[i % len(delays)],
                        aoa=aoas[i % len(aoas)]))
    mpcs.sort(key=lambda m: m.delay)
    return ChannelSample(mpcs=tuple(mpcs), distance=distance)


# spreads ---------------------------------------------------------------------


def spread_naive(positions, powers):
    total = 0.0
    for p in powers:
        total += p
    mean = 0.0
    for x, p in zip(positions, powers):
        mean += x * p
    mean /= total
    acc = 0.0
    for x, p in zip(positions, powers):
        acc += (x - mean) ** 2 * p
    return math.sqrt(acc / total)


def test_single_mass_has_exactly_zero_spread():
    from terachan.metrics import _weighted_rms_spread
    assert _weighted_rms_spread(np.array([50e-9]), np.array([1e-10])) == 0.0
    assert _weighted_rms_spread(np.array([30.0]), np.array([2.0])) == 0.0


def test_all_mpcs_at_one_delay_gives_zero_spread():
    s = clustered_sample([50e-9], [-30.0, 30.0], [1e-5])
    assert delay_spread(s) == pytest.approx(0.0, abs=1e-20)


def test_two_point_symmetric_masses():
    # 15 equal-gain MPCs alternating between 0 ns and 10 ns is not symmetric
    # (8 vs 7), so place the two masses explicitly via powers
    positions = np.array([0.0, 10e-9])
    powers = np.array([1.0, 1.0])
    assert spread_naive(positions, powers) == pytest.approx(5e-9, rel=1e-12)
    from terachan.metrics import _weighted_rms_spread
    assert _weighted_rms_spread(positions, powers) == pytest.approx(5e-9, rel=1e-12)


def test_angular_spread_pm30_equal_power():
    from terachan.metrics import _weighted_rms_spread
    assert _weighted_rms_spread(np.array([-30.0, 30.0]), np.array([2.0, 2.0])) == 30.0


def test_spreads_match_naive_loops(rng):
    for _ in range(200):
        s = make_sample(rng)
        want_d = spread_naive(s.delays(), s.powers())
        want_a = spread_naive(s.aoas(), s.powers())
        assert abs(delay_spread(s) - want_d) <= 1e-12 * max(want_d, 1e-30)
        assert abs(angular_spread(s) - want_a) <= 1e-12 * max(want_a, 1e-30)


def test_spreads_invariant_under_gain_scaling(rng):
    s = make_sample(rng)
    scaled = ChannelSample(
        mpcs=tuple(Mpc(gain=m.gain * 37.5, phase=m.phase, delay=m.delay, aoa=m.aoa)
                   for m in s.mpcs),
        distance=s.distance,
    )
    assert delay_spread(scaled) == pytest.approx(delay_spread(s), rel=1e-12)
    assert angular_spread(scaled) == pytest.approx(angular_spread(s), rel=1e-12)


def test_delay_spread_shift_equivariant(rng):
    s = make_sample(rng)
    shift = 25e-9
    shifted = ChannelSample(
        mpcs=tuple(Mpc(gain=m.gain, phase=m.phase, delay=m.delay + shift, aoa=m.aoa)
                   for m in s.mpcs),
        distance=s.distance,
    )
    assert delay_spread(shifted) == pytest.approx(delay_spread(s), rel=1e-9)


def test_zero_power_rejected():
    from terachan.metrics import _weighted_rms_spread
    with pytest.raises(MetricError):
        _weighted_rms_spread(np.array([1.0]), np.array([0.0]))


# pdap -------------------------------------------------------------------------


def pdap_naive(sample, cfg):
    grid = np.zeros((cfg.n_delay, cfg.n_angle))
    for m in sample.mpcs:
        i = int(math.floor(m.delay / cfg.delay_bin))
        j = int(math.floor((m.aoa - cfg.angle_min) / cfg.angle_bin))
        i = min(max(i, 0), cfg.n_delay - 1)
        j = min(max(j, 0), cfg.n_angle - 1)
        grid[i][j] += m.gain * m.gain
    out = np.full(grid.shape, cfg.floor_db)
    for i in range(cfg.n_delay):
        for j in range(cfg.n_angle):
            if grid[i][j] > 0:
                out[i][j] = max(10.0 * math.log10(grid[i][j]), cfg.floor_db)
    return out


def test_single_bin_sample_lights_one_cell():
    s = clustered_sample([50e-9], [0.5], [1e-5])
    grid = pdap(s, GRID)
    hot = grid.values > GRID.floor_db
    assert hot.sum() == 1
    total_power = 15 * (1e-5) ** 2
    assert grid.values[hot][0] == pytest.approx(10 * math.log10(total_power), rel=1e-12)
    assert grid.clipped == 0


def test_pdap_conserves_linear_power(rng):
    for _ in range(20):
        s = make_sample(rng)
        grid = pdap(s, GRID)
        if grid.clipped:
            continue
        linear = np.where(grid.values > GRID.floor_db, 10 ** (grid.values / 10.0), 0.0)
        assert linear.sum() == pytest.approx(float(s.powers().sum()), rel=1e-12)


def test_pdap_matches_naive_loops(rng):
    for _ in range(25):
        s = make_sample(rng)
        got = pdap(s, SMALL_GRID).values
        want = pdap_naive(s, SMALL_GRID)
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_pdap_clips_out_of_grid_mpcs():
    cfg = PdapConfig(delay_bin=1e-9, delay_span=10e-9)
    s = clustered_sample([50e-9], [0.0], [1e-5])     # all delays beyond the 10 ns span
    grid = pdap(s, cfg)
    assert grid.clipped == 15
    assert (grid.values > cfg.floor_db).sum() == 1   # edge bin


def test_average_pdap_anchors(rng):
    s1, s2 = make_sample(rng), make_sample(rng)
    one = average_pdap([s1], GRID)
    np.testing.assert_array_equal(one.values, pdap(s1, GRID).values)
    same = average_pdap([s1, s1], GRID)
    np.testing.assert_array_equal(same.values, pdap(s1, GRID).values)

    both = average_pdap([s1, s2], GRID)
    lin1 = np.where(pdap(s1, GRID).values > GRID.floor_db, 10 ** (pdap(s1, GRID).values / 10), 0)
    lin2 = np.where(pdap(s2, GRID).values > GRID.floor_db, 10 ** (pdap(s2, GRID).values / 10), 0)
    hand = (lin1 + lin2) / 2
    hand_db = np.where(hand > 0, 10 * np.log10(np.maximum(hand, 1e-300)), GRID.floor_db)
    hand_db = np.maximum(hand_db, GRID.floor_db)
    np.testing.assert_allclose(both.values, hand_db, atol=1e-9)


# rmse ---------------------------------------------------------------------------


def _grid_from(values, cfg=SMALL_GRID):
    return PdapGrid(config=cfg, values=np.asarray(values, dtype=np.float64))


def _random_grid(rng, cfg=SMALL_GRID):
    vals = rng.uniform(cfg.floor_db, -80.0, size=(cfg.n_delay, cfg.n_angle))
    return _grid_from(vals, cfg)


def test_rmse_identical_grids_zero(rng):
    g = _random_grid(rng)
    assert pdap_rmse(g, g) == 0.0


def test_rmse_constant_offset(rng):
    g = _random_grid(rng)
    # keep the offset grid valid w.r.t. the floor
    shifted = _grid_from(g.values + 2.0)
    assert pdap_rmse(g, shifted) == pytest.approx(2.0, rel=1e-12)


def test_rmse_matches_naive_double_loop(rng):
    a, b = _random_grid(rng), _random_grid(rng)
    acc = 0.0
    for i in range(SMALL_GRID.n_delay):
        for j in range(SMALL_GRID.n_angle):
            acc += (a.values[i][j] - b.values[i][j]) ** 2
    want = math.sqrt(acc / (SMALL_GRID.n_delay * SMALL_GRID.n_angle))
    assert pdap_rmse(a, b) == pytest.approx(want, rel=1e-12)


def test_rmse_requires_matching_grids(rng):
    a = _random_grid(rng)
    other_cfg = PdapConfig(delay_bin=5e-9, delay_span=200e-9, angle_bin=20.0)
    b = _random_grid(rng, other_cfg)
    with pytest.raises(GridMismatchError):
        pdap_rmse(a, b)


def test_rmse_is_a_metric_on_random_triples(rng):
    for _ in range(20):
        a, b, c = (_random_grid(rng) for _ in range(3))
        assert pdap_rmse(a, b) == pdap_rmse(b, a)
        assert pdap_rmse(a, c) <= pdap_rmse(a, b) + pdap_rmse(b, c) + 1e-12
        assert pdap_rmse(a, b) > 0.0


# ssim ----------------------------------------------------------------------------


def ssim_naive(x, y, floor_db, window=8):
    """Independent windowed double loop with population statistics."""
    data_range = max(x.max(), y.max()) - floor_db
    if data_range == 0:
        return 1.0
    c1 = (0.01 * data_range) ** 2
    c2 = (0.03 * data_range) ** 2
    h, w = x.shape
    if min(h, w) < window:
        windows = [(0, h, 0, w)]
    else:
        windows = [(i, i + window, j, j + window)
                   for i in range(h - window + 1) for j in range(w - window + 1)]
    scores = []
    for (i0, i1, j0, j1) in windows:
        wx = x[i0:i1, j0:j1].reshape(-1)
        wy = y[i0:i1, j0:j1].reshape(-1)
        mx, my = wx.mean(), wy.mean()
        vx = (wx * wx).mean() - mx * mx
        vy = (wy * wy).mean() - my * my
        cov = (wx * wy).mean() - mx * my
        scores.append(((2 * mx * my + c1) * (2 * cov + c2))
                      / ((mx * mx + my * my + c1) * (vx + vy + c2)))
    return float(np.mean(scores))


def test_ssim_self_similarity_is_exactly_one(rng):
    g = _random_grid(rng)
    assert ssim(g, g) == 1.0


def test_ssim_symmetric(rng):
    a, b = _random_grid(rng), _random_grid(rng)
    assert ssim(a, b) == ssim(b, a)


def test_ssim_constant_grids_offset_by_half_range(rng):
    cfg = SMALL_GRID
    lo = np.full((cfg.n_delay, cfg.n_angle), -150.0)
    r = -150.0 + 0.0 - cfg.floor_db  # max is the brighter grid
    hi = lo + (cfg.floor_db * -1 - 150.0) / 2  # offset by R/2 relative to observed range
    a, b = _grid_from(lo), _grid_from(np.maximum(hi, cfg.floor_db))
    want = ssim_naive(a.values, b.values, cfg.floor_db)
    assert ssim(a, b) == pytest.approx(want, abs=1e-12)


def test_ssim_matches_naive_loops(rng):
    cfg = PdapConfig(delay_bin=20e-9, delay_span=280e-9, angle_bin=30.0)  # 14 x 12 grid
    for _ in range(10):
        a = _random_grid(rng, cfg)
        b = _random_grid(rng, cfg)
        want = ssim_naive(a.values, b.values, cfg.floor_db)
        assert ssim(a, b) == pytest.approx(want, abs=1e-9)


def test_ssim_small_grid_falls_back_to_global_window(rng):
    cfg = PdapConfig(delay_bin=50e-9, delay_span=250e-9, angle_bin=90.0)  # 5 x 4 grid
    a = _random_grid(rng, cfg)
    b = _random_grid(rng, cfg)
    want = ssim_naive(a.values, b.values, cfg.floor_db)
    assert ssim(a, b) == pytest.approx(want, abs=1e-12)


# cdf -----------------------------------------------------------------------------


def test_cdf_single_value():
    t = cdf([5.0])
    assert t.values.tolist() == [5.0] and t.probabilities.tolist() == [1.0]


def test_cdf_four_values():
    t = cdf([3.0, 1.0, 4.0, 2.0])
    assert t.values.tolist() == [1.0, 2.0, 3.0, 4.0]
    assert t.probabilities.tolist() == [0.25, 0.5, 0.75, 1.0]


def test_cdf_matches_sort_and_rank_oracle(rng):
    vals = rng.normal(size=137)
    t = cdf(vals)
    order = sorted(vals)
    for i, v in enumerate(order):
        assert t.values[i] == v
        assert t.probabilities[i] == pytest.approx((i + 1) / len(order), rel=1e-15)


def test_cdf_empty_rejected():
    with pytest.raises(MetricError):
        cdf([])


def test_cdf_table_validation():
    with pytest.raises(MetricError):
        CdfTable(values=np.array([1.0]), probabilities=np.array([0.5]))


def test_quantile_lookup():
    t = cdf([10.0, 20.0, 30.0, 40.0])
    assert quantile(t, 0.5) == 20.0
    assert quantile(t, 1.0) == 40.0


# pairing ----------------------------------------------------------------------


def test_pair_by_distance_picks_nearest(rng):
    real = [make_sample(rng, distance=d) for d in (2.0, 10.0, 20.0)]
    gen = [make_sample(rng, distance=d) for d in (2.2, 9.6, 26.0)]
    pairs = pair_by_distance(gen, real, max_gap=0.5)
    assert pairs == [(0, 0), (1, 1)]     # 26.0 has no reference within 0.5 m


def test_ssim_over_identical_sets_is_all_ones(rng):
    samples = [make_sample(rng) for _ in range(6)]
    values = ssim_over_pairs(samples, samples, SMALL_GRID)
    assert len(values) == 6
    assert all(v == 1.0 for v in values)
