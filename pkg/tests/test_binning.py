import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from shiftflow.binning import (
    COUNTER_MAX,
    AxisAccumulator,
    BinConfig,
    BinIntervalError,
    OccupancyVector,
    adapt_bin_duration,
    occupancy_density,
    pack_bits,
    unpack_bits,
)
from shiftflow.events import Event


def test_three_events_count_three():
    acc = AxisAccumulator(10, 1000)
    for _ in range(3):
        acc.accumulate(Event(10, 5, 0, 1))
    assert acc.counts[5] == 3


def test_counter_saturates():
    acc = AxisAccumulator(10, 1000)
    for _ in range(300):
        acc.accumulate(Event(10, 5, 0, 1))
    assert acc.counts[5] == COUNTER_MAX == 255


def test_y_and_polarity_collapse():
    acc = AxisAccumulator(10, 1000)
    acc.accumulate(Event(1, 5, 0, 1))
    acc.accumulate(Event(2, 5, 100, -1))
    assert acc.counts[5] == 2


def test_y_axis_uses_y_coordinate():
    acc = AxisAccumulator(200, 1000)
    acc.accumulate(Event(1, 5, 100, 1), axis="y")
    assert acc.counts[100] == 1 and acc.counts[5] == 0


def test_bulk_saturates():
    acc = AxisAccumulator(4, 1000)
    acc.accumulate_coords(np.full(1000, 2))
    acc.accumulate_coords(np.full(10, 2))
    assert acc.counts[2] == 255


def _vector(counts, theta):
    acc = AxisAccumulator(len(counts), 1000)
    for x, c in enumerate(counts):
        acc.accumulate_coords(np.full(c, x, dtype=np.int64))
    return acc.close_bin(theta)


def test_threshold_inclusive():
    assert _vector([5, 80, 120], 80).to_array().tolist() == [0, 1, 1]


def test_all_zero_counts():
    assert _vector([0, 0, 0, 0], 1).bits == 0


def test_theta_one():
    assert _vector([0, 1, 255], 1).to_array().tolist() == [0, 1, 1]


def test_close_bin_resets_and_advances():
    acc = AxisAccumulator(4, 100, bin_start=200, bin_index=2)
    acc.accumulate(Event(250, 1, 0, 1))
    vec = acc.close_bin(1)
    assert vec.bin_index == 2 and vec.active() == [1]
    assert acc.bin_start == 300 and acc.bin_index == 3
    assert not acc.counts.any()


def test_half_open_bins():
    acc = AxisAccumulator(4, 100, bin_start=0)
    acc.accumulate(Event(99, 0, 0, 1))
    with pytest.raises(BinIntervalError):
        acc.accumulate(Event(100, 0, 0, 1))
    acc.close_bin(1)
    acc.accumulate(Event(100, 0, 0, 1))


def test_density_examples():
    n = 240
    assert occupancy_density(OccupancyVector((1 << 24) - 1, n)) == pytest.approx(0.10)
    assert occupancy_density(OccupancyVector(0, n)) == 0.0
    assert occupancy_density(OccupancyVector((1 << n) - 1, n)) == 1.0


def test_vector_bit_layout():
    vec = OccupancyVector.from_array([0, 1, 0, 1])
    assert vec.bits == 0b1010 and vec[1] == 1 and vec[0] == 0 and vec.active() == [1, 3]
    with pytest.raises(IndexError):
        vec[4]


@given(st.lists(st.integers(0, 1), min_size=1, max_size=300))
def test_pack_unpack_round_trip(bits):
    arr = np.array(bits, dtype=np.uint8)
    assert unpack_bits(pack_bits(arr), len(bits)).tolist() == bits


@given(st.lists(st.integers(0, 255), min_size=1, max_size=64), st.integers(1, 255), st.integers(1, 255))
def test_threshold_and_density_monotone(counts, t1, t2):
    lo, hi = sorted((t1, t2))
    v_lo, v_hi = _vector(counts, lo), _vector(counts, hi)
    assert v_hi.bits & ~v_lo.bits == 0
    assert occupancy_density(v_hi) <= occupancy_density(v_lo)


# -- configuration -----------------------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        BinConfig(delta_t=0, theta_e=1)
    with pytest.raises(ValueError):
        BinConfig(delta_t=100, theta_e=1, rho_lo=0.5, rho_hi=0.4)
    with pytest.raises(ValueError):
        BinConfig(delta_t=100, theta_e=1, delta_t_min=200, delta_t_max=400)


def test_config_from_file(tmp_path):
    p = tmp_path / "bins.ini"
    p.write_text("[binning]\ndelta_t = 40000\ntheta_e = 80\nadapt = yes\nrho_lo = 0.1\n")
    cfg = BinConfig.from_file(p)
    assert cfg.delta_t == 40000 and cfg.theta_e == 80 and cfg.adapt


# -- adaptation --------------------------------------------------------------


def test_adapt_doubles_below_band():
    cfg = BinConfig(delta_t=10000, theta_e=20, delta_t_min=5000, delta_t_max=50000, hold_bins=16)
    assert adapt_bin_duration(cfg, 0.05, 16) == (20000, 40, True)


def test_adapt_halves_above_band():
    cfg = BinConfig(delta_t=10000, theta_e=20, delta_t_min=5000, delta_t_max=50000)
    assert adapt_bin_duration(cfg, 0.5, 100) == (5000, 10, True)


def test_adapt_in_band_no_op():
    cfg = BinConfig(delta_t=10000, theta_e=20)
    assert adapt_bin_duration(cfg, 0.25, 100) == (10000, 20, False)


def test_adapt_respects_hold():
    cfg = BinConfig(delta_t=10000, theta_e=20, hold_bins=16)
    assert adapt_bin_duration(cfg, 0.05, 15) == (10000, 20, False)


def test_adapt_clamps():
    cfg = BinConfig(delta_t=50000, theta_e=20, delta_t_min=5000, delta_t_max=50000)
    assert adapt_bin_duration(cfg, 0.01, 100)[2] is False


def test_adapt_theta_fixed_when_not_rescaling():
    cfg = BinConfig(delta_t=10000, theta_e=20, rescale_theta=False)
    assert adapt_bin_duration(cfg, 0.01, 100) == (20000, 20, True)


def _constant_rate_density(dt, theta, rate_per_us, n):
    # Constant-rate stream spread round-robin over the pixels, binned and thresholded.
    acc = AxisAccumulator(n, dt)
    k = int(rate_per_us * dt)
    acc.accumulate_coords(np.arange(k, dtype=np.int64) % n)
    return occupancy_density(acc.close_bin(theta))


@given(
    st.sampled_from([625, 1250, 2500, 5000, 10000, 20000, 40000, 80000]),
    st.floats(0.0001, 2.0),
    st.integers(16, 320),
    st.booleans(),
)
def test_adaptation_converges(dt0, rate, n, rescale):
    lo, hi = 625, 80000
    cfg = BinConfig(
        delta_t=dt0, theta_e=1, delta_t_min=lo, delta_t_max=hi, hold_bins=1, rescale_theta=rescale
    )
    bound = math.ceil(math.log2(hi / lo))
    changes = 0
    while True:
        rho = _constant_rate_density(cfg.delta_t, cfg.theta_e, rate, n)
        if cfg.rho_lo <= rho <= cfg.rho_hi:
            break
        dt, th, changed = adapt_bin_duration(cfg, rho, cfg.hold_bins)
        if not changed:
            assert cfg.delta_t in (lo, hi)  # only a clamp can stop the controller
            break
        changes += 1
        assert changes <= bound
        cfg = BinConfig(
            delta_t=dt, theta_e=th, delta_t_min=lo, delta_t_max=hi, hold_bins=1, rescale_theta=rescale
        )


def test_fixed_threshold_reaches_band():
    lo, hi = 625, 80000
    cfg = BinConfig(delta_t=625, theta_e=1, delta_t_min=lo, delta_t_max=hi, hold_bins=1, rescale_theta=False)
    for _ in range(10):
        rho = _constant_rate_density(cfg.delta_t, cfg.theta_e, 0.02, 240)
        if 0.10 <= rho <= 0.40:
            break
        dt, th, _ = adapt_bin_duration(cfg, rho, 1)
        cfg = BinConfig(delta_t=dt, theta_e=th, delta_t_min=lo, delta_t_max=hi, hold_bins=1, rescale_theta=False)
    assert 0.10 <= rho <= 0.40 and cfg.delta_t == 1250
