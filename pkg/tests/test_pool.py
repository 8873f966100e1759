from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcrpool.pool import (
    PERIODS,
    AlignmentError,
    PowerCapabilityProfile,
    canonical_period,
    capability_profile,
    distribution_bands,
    next_window,
    period_minima,
    write_bands_csv,
    write_capability_csv,
    write_minima_csv,
)
from fcrpool.sim import EVTrace

START = datetime(2020, 7, 6)
FEB = datetime(2021, 2, 1)  # Monday; February 2021 is exactly four weeks


def _trace(p_charge, p_discharge, start=START):
    n = len(p_charge)
    on = np.ones(n, dtype=bool)
    return EVTrace(start, np.full(n, 10.0), on, on, np.asarray(p_charge, float), np.asarray(p_discharge, float), 11.0, 11.0)


def _profile(power, start=START, rated=None):
    power = np.asarray(power, float)
    return PowerCapabilityProfile(start, power, rated or float(power.max() or 1.0), rated or 1.0, 1)


def test_min_rule_and_zero():
    prof = capability_profile([_trace([8.0] * 4, [11.0] * 4)])
    assert np.all(prof.pool_power == 8.0)
    assert prof.rated_power == 11.0
    away = capability_profile([_trace([0.0] * 4, [0.0] * 4) for _ in range(5)])
    assert np.all(away.pool_power == 0.0)


def test_additivity_and_order():
    rng = np.random.default_rng(0)
    one = _trace(rng.uniform(0, 11, 96), rng.uniform(0, 11, 96))
    ten = capability_profile([one] * 10)
    np.testing.assert_allclose(ten.pool_power, 10 * one.bidirectional)
    assert ten.rated_power == 110.0
    many = [_trace(rng.uniform(0, 11, 96), rng.uniform(0, 11, 96)) for _ in range(30)]
    a = capability_profile(many).pool_power
    b = capability_profile(many[::-1]).pool_power
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_length_mismatch():
    with pytest.raises(ValueError):
        capability_profile([_trace([1.0] * 4, [1.0] * 4), _trace([1.0] * 5, [1.0] * 5)])


@pytest.mark.parametrize("period", PERIODS)
def test_constant_profile(period):
    prof = _profile(np.full(4 * 672, 5000.0), start=FEB)
    m = period_minima(prof, period)
    assert np.all(m.p_min == 5000.0)
    assert len(m) == {"1m": 1, "1w": 4, "1d": 28, "4h": 168, "1h": 672, "15min": 2688}[period]


def test_dip_is_local():
    power = np.full(672, 5000.0)
    power[300] = 1000.0
    prof = _profile(power)
    assert period_minima(prof, "1w").p_min.tolist() == [1000.0]
    four = period_minima(prof, "4h").p_min
    assert (four == 1000.0).sum() == 1 and four[300 // 16] == 1000.0
    assert np.all(np.delete(four, 300 // 16) == 5000.0)


def test_misaligned_horizon():
    with pytest.raises(AlignmentError):
        period_minima(_profile(np.ones(672), start=START + timedelta(hours=1)), "4h")
    with pytest.raises(AlignmentError):
        period_minima(_profile(np.ones(100)), "1d")


def test_partial_months_dropped():
    prof = _profile(np.ones(6 * 672), start=datetime(2021, 1, 25))  # Jan 25 to Mar 8
    m = period_minima(prof, "1m")
    assert m.window_starts == (datetime(2021, 2, 1),)


def test_fifteen_minute_minima_is_profile():
    rng = np.random.default_rng(2)
    prof = _profile(rng.uniform(0, 100, 672))
    assert np.array_equal(period_minima(prof, "15min").p_min, prof.pool_power)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_nested_minima_monotone(seed):
    rng = np.random.default_rng(seed)
    prof = _profile(rng.uniform(0, 5000, 4 * 672), start=FEB)
    for parent, child in zip(PERIODS, PERIODS[1:]):
        pm, cm = period_minima(prof, parent), period_minima(prof, child)
        for ts, p in zip(cm.window_starts, cm.p_min):
            i = max(j for j, s in enumerate(pm.window_starts) if s <= ts)
            assert ts < next_window(pm.window_starts[i], parent)
            assert p >= pm.p_min[i]


def test_two_shift_night_windows(two_shift_run):
    _, _, cap = two_shift_run
    m = period_minima(cap, "4h")
    night = np.array([ts.hour == 0 for ts in m.window_starts])
    ratio = m.p_min[night] / cap.rated_power
    assert 0.7 <= ratio.mean() <= 0.8


def test_bands_identical_days_collapse():
    day = np.random.default_rng(1).uniform(0, 10, 96)
    b = distribution_bands(_profile(np.tile(day, 5)))
    for arr in b.as_columns().values():
        np.testing.assert_allclose(arr, day)
    assert b.n_days == 5


def test_bands_endpoints_are_extremes():
    rng = np.random.default_rng(3)
    power = rng.uniform(0, 10, 7 * 96)
    b = distribution_bands(_profile(power))
    grid = power.reshape(7, 96)
    assert np.array_equal(b.lo100, grid.min(axis=0)) and np.array_equal(b.hi100, grid.max(axis=0))
    assert np.all(b.lo100 <= b.lo75) and np.all(b.lo75 <= b.lo50) and np.all(b.lo50 <= b.median)
    assert np.all(b.median <= b.hi50) and np.all(b.hi50 <= b.hi75) and np.all(b.hi75 <= b.hi100)


def test_bands_need_two_days():
    with pytest.raises(ValueError):
        distribution_bands(_profile(np.ones(96)))


def test_two_shift_median_midnight_above_shift(two_shift_run):
    _, _, cap = two_shift_run
    b = distribution_bands(cap)
    assert b.median[0] >= b.median[40]  # 10:00, inside the morning shift


def test_canonical_period_aliases():
    assert canonical_period("weekly") == "1w"
    assert canonical_period("4 h") == "4h"
    with pytest.raises(ValueError):
        canonical_period("2h")


def test_csv_exports(tmp_path):
    prof = _profile(np.arange(2 * 96, dtype=float), rated=200.0)
    write_capability_csv(prof, tmp_path / "c.csv")
    write_minima_csv(period_minima(prof, "1d"), tmp_path / "m.csv")
    write_bands_csv(distribution_bands(prof), tmp_path / "b.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[1] == "2020-07-06T00:00,0.0000,0.000000"
    assert (tmp_path / "m.csv").read_text().splitlines()[2] == "2020-07-07T00:00,1d,96.0000"
    bands = (tmp_path / "b.csv").read_text().splitlines()
    assert bands[0].startswith("time_of_day,median_kw") and len(bands) == 97
