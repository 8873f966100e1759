import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcrpool.market import (
    GERMAN_DESIGNS,
    MarketDesign,
    PriceSeries,
    PriceSeriesError,
    biddable_power,
    compare_designs,
    load_prices,
    normalize_weekly,
    revenue,
    write_prices,
)
from fcrpool.pool import AlignmentError, PeriodMinSeries, PowerCapabilityProfile, period_minima

START = datetime(2020, 7, 6)
D4H = MarketDesign("4h", "4h")
DWEEK = MarketDesign("weekly", "1w")


def test_bid_examples():
    assert biddable_power(3.75, D4H) == 3.0
    assert biddable_power(5.5, D4H) == 4.0
    assert biddable_power(1.2, D4H) == 0.0


@settings(max_examples=300)
@given(st.floats(0, 100), st.floats(0, 10))
def test_bid_properties(p, dp):
    b = biddable_power(p, D4H)
    assert b <= p / 1.25
    assert biddable_power(p + dp, D4H) >= b
    assert biddable_power(b * 1.25, D4H) == b
    assert biddable_power(p, MarketDesign("x", "4h", buffer_factor=1.0)) >= b


def _csv(tmp_path, rows):
    p = tmp_path / "prices.csv"
    p.write_text("window_start_iso8601,price_eur_per_mw\n" + "".join(f"{t.isoformat()},{v}\n" for t, v in rows))
    return p


def test_load_prices_valid_week(tmp_path):
    rows = [(START + timedelta(hours=4 * i), 30) for i in range(42)]
    s = load_prices(_csv(tmp_path, rows), "4h")
    assert len(s) == 42 and np.all(s.prices == 30.0)


def test_load_prices_gap_named(tmp_path):
    rows = [(START + timedelta(hours=4 * i), 30) for i in range(42) if i != 10]
    with pytest.raises(PriceSeriesError, match="2020-07-07 16:00"):
        load_prices(_csv(tmp_path, rows), "4h")


def test_load_prices_negative_and_overlap(tmp_path):
    with pytest.raises(PriceSeriesError, match="invalid price"):
        load_prices(_csv(tmp_path, [(START, 30), (START + timedelta(hours=4), -1)]), "4h")
    with pytest.raises(PriceSeriesError, match="overlap"):
        load_prices(_csv(tmp_path, [(START, 30), (START + timedelta(hours=2), 30)]), "4h")


def test_price_write_read_round_trip(tmp_path):
    s = PriceSeries.constant("1d", START, 14, 1280 / 7)
    write_prices(s, tmp_path / "p.csv")
    back = load_prices(tmp_path / "p.csv", "1d")
    assert back.window_starts == s.window_starts and np.array_equal(back.prices, s.prices)


def test_normalize_monthly_daily_weekly():
    monthly = normalize_weekly(PriceSeries.constant("1m", datetime(2021, 2, 1), 1, 8000.0))
    assert monthly.price_per_week.tolist() == [2000.0] * 4
    daily = normalize_weekly(PriceSeries.constant("1d", START, 7, 200.0))
    assert daily.price_per_week.tolist() == [1400.0] and not daily.partial.any()
    weekly = PriceSeries("1w", (START, START + timedelta(weeks=1)), np.array([1880.0, 1700.0]))
    assert normalize_weekly(weekly).price_per_week.tolist() == [1880.0, 1700.0]
    partial = normalize_weekly(PriceSeries.constant("4h", START, 50, 30.0))
    assert partial.price_per_week.tolist() == [1260.0, 240.0]
    assert partial.partial.tolist() == [False, True]


def _minima(period, p_min_kw, start=START):
    s = PriceSeries.constant(period, start, len(p_min_kw), 0.0)
    return PeriodMinSeries(s.service_period, s.window_starts, np.asarray(p_min_kw, float))


def test_revenue_examples():
    r = revenue(_minima("4h", [5500.0] * 42), PriceSeries.constant("4h", START, 42, 30.0), D4H, 1000)
    assert r.total == 5040.0 and r.weekly == 5040.0 and r.complete_weeks == 1
    assert r.per_ev_weekly == pytest.approx(5.04)
    zero = revenue(_minima("4h", [0.0] * 42), PriceSeries.constant("4h", START, 42, 30.0), D4H, 1000)
    assert zero.total == 0.0
    w = revenue(_minima("1w", [2500.0]), PriceSeries.constant("1w", START, 1, 1880.0), DWEEK, 1000)
    assert w.weekly == 3760.0


def test_net_with_opex():
    r = revenue(_minima("1w", [2500.0]), PriceSeries.constant("1w", START, 1, 1880.0), DWEEK, 1000, 728.0)
    assert r.net_weekly == pytest.approx(3760.0 - 1000 * 14.0)
    assert r.net_per_ev_weekly == pytest.approx(3.76 - 14.0)


def test_partial_weeks_excluded_from_weekly():
    r = revenue(_minima("1d", [3750.0] * 10), PriceSeries.constant("1d", START, 10, 100.0), MarketDesign("d", "1d"), 10)
    assert r.total == 3000.0
    assert r.complete_weeks == 1 and r.weekly == 2100.0


def test_monthly_weekly_average():
    r = revenue(
        _minima("1m", [3750.0], datetime(2021, 2, 1)),
        PriceSeries.constant("1m", datetime(2021, 2, 1), 1, 8000.0),
        MarketDesign("m", "1m"),
        10,
    )
    assert r.total == 24000.0 and r.weekly == 6000.0


def test_misaligned_prices():
    with pytest.raises(AlignmentError, match="no price"):
        revenue(_minima("4h", [5000.0] * 42), PriceSeries.constant("4h", START, 41, 30.0), D4H, 1)
    with pytest.raises(AlignmentError):
        revenue(_minima("4h", [5000.0] * 42), PriceSeries.constant("1d", START, 7, 30.0), D4H, 1)


def _oracle(p_min_kw, prices, design):
    total = []
    for p, price in zip(p_min_kw, prices):
        mw = p / 1000.0
        k = 0
        while (k + 1) * design.increment * design.buffer_factor <= mw:
            k += 1
        bid = k * design.increment if k * design.increment >= design.min_bid else 0.0
        total.append(bid * price)
    return math.fsum(total)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 20_000), min_size=42, max_size=42), st.lists(st.floats(0, 200), min_size=42, max_size=42))
def test_revenue_matches_oracle(p_min, prices):
    series = PriceSeries("4h", PriceSeries.constant("4h", START, 42, 0).window_starts, np.array(prices))
    r = revenue(_minima("4h", p_min), series, D4H, 1)
    assert r.total == _oracle(p_min, prices, D4H)


def _profile(power, start=START):
    return PowerCapabilityProfile(start, np.asarray(power, float), 11000.0, 11000.0, 1000)


def test_compare_designs_monotone_under_equal_budget():
    rng = np.random.default_rng(4)
    prof = _profile(rng.uniform(2000, 9000, 672))
    designs = [
        (MarketDesign("weekly", "1w"), PriceSeries.constant("1w", START, 1, 1260.0)),
        (MarketDesign("daily", "1d"), PriceSeries.constant("1d", START, 7, 180.0)),
        (MarketDesign("4h", "4h"), PriceSeries.constant("4h", START, 42, 30.0)),
        (MarketDesign("1h", "1h"), PriceSeries.constant("1h", START, 168, 7.5)),
    ]
    cmp = compare_designs(prof, designs)
    weekly = [r.weekly for r in cmp.reports]
    assert weekly == sorted(weekly)
    d = cmp.deltas()
    assert np.all(np.diag(d) == 0)
    assert d[0, 2] == weekly[2] - weekly[0]


def test_compare_csv(tmp_path):
    prof = _profile(np.full(672, 5500.0))
    cmp = compare_designs(prof, [(D4H, PriceSeries.constant("4h", START, 42, 30.0))])
    cmp.write_csv(tmp_path / "c.csv")
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[1].startswith("4h,4h,5040.0000,5.040000")
    assert lines[1].endswith(",0.0000")


def test_report_outputs(tmp_path):
    r = revenue(_minima("4h", [5500.0] * 42), PriceSeries.constant("4h", START, 42, 30.0), D4H, 1000)
    r.write_csv(tmp_path / "r.csv")
    r.write_json(tmp_path / "r.json")
    assert (tmp_path / "r.csv").read_text().splitlines()[1] == "2020-07-06T00:00,5.500000,4,30.0000,120.0000"
    assert '"weekly_eur": 5040.0' in (tmp_path / "r.json").read_text()


def test_design_validation():
    with pytest.raises(ValueError):
        MarketDesign("x", "2h")
    with pytest.raises(ValueError):
        MarketDesign("x", "4h", buffer_factor=0.9)
    with pytest.raises(ValueError):
        MarketDesign("x", "4h", remuneration="auction")
    assert GERMAN_DESIGNS["weekly"].remuneration == "pay_as_bid"


def test_minima_from_profile_feed_revenue():
    prof = _profile(np.full(672, 3750.0))
    r = revenue(period_minima(prof, "1d"), PriceSeries.constant("1d", START, 7, 200.0), MarketDesign("d", "1d"), 1000)
    assert r.p_bid.tolist() == [3.0] * 7 and r.weekly == 4200.0
