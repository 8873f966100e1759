"""FCR market designs, price series and the revenue calculation.

Revenue for a design follows the bid procedure of the German FCR market: take
the pool's minimum power in every service-period window, divide by the 1.25
buffer factor, round down to the bid increment (dropping bids under the
minimum), multiply by the window price and sum; weekly figures average over
complete calendar weeks only.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from fcrpool.pool import (
    PERIOD_LENGTH,
    AlignmentError,
    PeriodMinSeries,
    PowerCapabilityProfile,
    canonical_period,
    next_window,
    period_minima,
)

WEEK = timedelta(weeks=1)
PRICE_COLUMNS = ("window_start_iso8601", "price_eur_per_mw")


class PriceSeriesError(ValueError):
    pass


@dataclass(frozen=True)
class MarketDesign:
    name: str
    service_period: str
    min_bid: float = 1.0  # MW
    increment: float = 1.0  # MW
    buffer_factor: float = 1.25
    dt_supply_h: float = 0.25
    remuneration: str = "market_clearing"  # or "pay_as_bid"; informational only
    tender_schedule: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "service_period", canonical_period(self.service_period))
        if self.min_bid <= 0 or self.increment <= 0:
            raise ValueError("min_bid and increment must be positive")
        if self.buffer_factor < 1:
            raise ValueError("buffer_factor must be at least 1")
        if self.remuneration not in ("market_clearing", "pay_as_bid"):
            raise ValueError(f"unknown remuneration {self.remuneration!r}")


# Historical German designs, for reference.
GERMAN_DESIGNS = {
    "monthly": MarketDesign("monthly", "1m", remuneration="pay_as_bid"),
    "weekly": MarketDesign("weekly", "1w", remuneration="pay_as_bid", tender_schedule="Tuesdays 15:00"),
    "daily": MarketDesign("daily", "1d", tender_schedule="D-2 15:00"),
    "4h": MarketDesign("4h", "4h", tender_schedule="D-1 08:00"),
}


def biddable_power(p_min: float, design: MarketDesign) -> float:
    """Largest admissible bid (MW) for a window whose minimum pool power is ``p_min`` MW."""
    if p_min < 0:
        raise ValueError("p_min must be non-negative")
    q = math.floor((p_min / design.buffer_factor) / design.increment) * design.increment
    return q if q >= design.min_bid else 0.0


# Prices -------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PriceSeries:
    service_period: str
    window_starts: tuple[datetime, ...]
    prices: np.ndarray  # EUR/MW per window

    def __post_init__(self) -> None:
        period = canonical_period(self.service_period)
        object.__setattr__(self, "service_period", period)
        prices = np.asarray(self.prices, dtype=float)
        if len(prices) != len(self.window_starts):
            raise PriceSeriesError("one price per window required")
        if np.any(prices < 0) or np.any(~np.isfinite(prices)):
            bad = int(np.flatnonzero((prices < 0) | ~np.isfinite(prices))[0])
            raise PriceSeriesError(f"invalid price {prices[bad]} at {self.window_starts[bad]}")
        for a, b in zip(self.window_starts, self.window_starts[1:]):
            expected = next_window(a, period)
            if b > expected:
                raise PriceSeriesError(f"gap in price series: {expected} to {b} missing")
            if b < expected:
                raise PriceSeriesError(f"overlapping price windows at {a} and {b}")
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return len(self.prices)

    def lookup(self) -> dict[datetime, float]:
        return dict(zip(self.window_starts, self.prices.tolist()))

    @classmethod
    def constant(cls, service_period: str, start: datetime, n_windows: int, price: float) -> PriceSeries:
        period = canonical_period(service_period)
        starts = [start]
        for _ in range(n_windows - 1):
            starts.append(next_window(starts[-1], period))
        return cls(period, tuple(starts), np.full(n_windows, float(price)))


def load_prices(path: str | Path, service_period: str) -> PriceSeries:
    """Read a ``window_start_iso8601,price_eur_per_mw`` CSV and validate it."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise PriceSeriesError(f"cannot read price file {path}: {exc}") from exc
    starts, prices = [], []
    with fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not set(PRICE_COLUMNS) <= set(reader.fieldnames):
            raise PriceSeriesError(f"{path}: expected columns {','.join(PRICE_COLUMNS)}")
        for row in reader:
            try:
                starts.append(datetime.fromisoformat(row[PRICE_COLUMNS[0]].strip()))
                prices.append(float(row[PRICE_COLUMNS[1]]))
            except ValueError as exc:
                raise PriceSeriesError(f"{path}:{reader.line_num}: {exc}") from exc
    try:
        return PriceSeries(service_period, tuple(starts), np.array(prices))
    except PriceSeriesError as exc:
        raise PriceSeriesError(f"{path}: {exc}") from exc


def write_prices(series: PriceSeries, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PRICE_COLUMNS)
        for ts, p in zip(series.window_starts, series.prices):
            w.writerow((ts.isoformat(timespec="minutes"), repr(float(p))))


def _monday(ts: datetime) -> datetime:
    day = ts.replace(hour=0, minute=0, second=0, microsecond=0)
    return day - timedelta(days=day.weekday())


def _windows_per_week(period: str) -> int:
    return WEEK // PERIOD_LENGTH[period]


@dataclass(frozen=True, eq=False)
class WeeklyPrices:
    week_starts: tuple[datetime, ...]
    price_per_week: np.ndarray  # EUR/MW/week
    partial: np.ndarray  # week not fully covered by the source windows


def normalize_weekly(series: PriceSeries) -> WeeklyPrices:
    """Express prices per MW and week.

    Monthly prices are divided by four and given to every week whose Monday
    falls in that month; daily and shorter prices are summed within each
    calendar week (Monday to Sunday); weekly prices pass through.
    """
    period = series.service_period
    if period == "1w":
        n = len(series)
        return WeeklyPrices(series.window_starts, series.prices.copy(), np.zeros(n, dtype=bool))
    if period == "1m":
        weeks, values = [], []
        for start, price in zip(series.window_starts, series.prices):
            end = next_window(start, "1m")
            monday = _monday(start)
            if monday < start:
                monday += WEEK
            while monday < end:
                weeks.append(monday)
                values.append(price / 4.0)
                monday += WEEK
        return WeeklyPrices(tuple(weeks), np.array(values), np.zeros(len(weeks), dtype=bool))

    sums: dict[datetime, float] = {}
    counts: dict[datetime, int] = {}
    for start, price in zip(series.window_starts, series.prices.tolist()):
        key = _monday(start)
        sums[key] = sums.get(key, 0.0) + price
        counts[key] = counts.get(key, 0) + 1
    full = _windows_per_week(period)
    keys = sorted(sums)
    return WeeklyPrices(
        tuple(keys),
        np.array([sums[k] for k in keys]),
        np.array([counts[k] < full for k in keys], dtype=bool),
    )


# Revenue ------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RevenueReport:
    design: MarketDesign
    window_starts: tuple[datetime, ...]
    p_min: np.ndarray  # MW
    p_bid: np.ndarray  # MW
    price: np.ndarray  # EUR/MW
    revenue: np.ndarray  # EUR per window
    total: float  # EUR over all windows
    complete_weeks: int
    weekly: float  # EUR/week over complete weeks
    fleet_size: int
    opex_per_ev_year: float | None = None

    @property
    def per_ev_weekly(self) -> float:
        return self.weekly / self.fleet_size

    @property
    def net_weekly(self) -> float | None:
        if self.opex_per_ev_year is None:
            return None
        return self.weekly - self.fleet_size * self.opex_per_ev_year / 52.0

    @property
    def net_per_ev_weekly(self) -> float | None:
        if self.opex_per_ev_year is None:
            return None
        return self.per_ev_weekly - self.opex_per_ev_year / 52.0

    def summary(self) -> dict:
        return {
            "design": self.design.name,
            "service_period": self.design.service_period,
            "windows": len(self.window_starts),
            "total_eur": self.total,
            "complete_weeks": self.complete_weeks,
            "weekly_eur": self.weekly,
            "per_ev_weekly_eur": self.per_ev_weekly,
            "net_weekly_eur": self.net_weekly,
            "net_per_ev_weekly_eur": self.net_per_ev_weekly,
            "mean_p_min_mw": float(self.p_min.mean()) if len(self.p_min) else 0.0,
            "mean_p_bid_mw": float(self.p_bid.mean()) if len(self.p_bid) else 0.0,
            "fleet_size": self.fleet_size,
        }

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("window_start", "p_min_mw", "p_bid_mw", "price_eur_per_mw", "revenue_eur"))
            for row in zip(self.window_starts, self.p_min, self.p_bid, self.price, self.revenue):
                ts, pmin, bid, price, rev = row
                w.writerow((ts.isoformat(timespec="minutes"), f"{pmin:.6f}", f"{bid:g}", f"{price:.4f}", f"{rev:.4f}"))

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.summary(), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def revenue(
    minima: PeriodMinSeries,
    prices: PriceSeries,
    design: MarketDesign,
    fleet_size: int,
    opex_per_ev_year: float | None = None,
) -> RevenueReport:
    """Bid and revenue for every window of ``minima`` (kW) at the matching ``prices``.

    ``prices`` may cover more than the simulated horizon; every minima window
    must have a price with the same start.
    """
    period = design.service_period
    if minima.service_period != period or prices.service_period != period:
        raise AlignmentError(
            f"service periods differ: design {period}, minima {minima.service_period},"
            f" prices {prices.service_period}"
        )
    if fleet_size < 1:
        raise ValueError("fleet_size must be at least 1")
    table = prices.lookup()
    missing = [ts for ts in minima.window_starts if ts not in table]
    if missing:
        raise AlignmentError(f"no price for {len(missing)} window(s), first {missing[0]}")

    p_min = minima.p_min / 1000.0
    p_bid = np.array([biddable_power(p, design) for p in p_min.tolist()])
    price = np.array([table[ts] for ts in minima.window_starts])
    per_window = p_bid * price
    total = math.fsum(per_window.tolist())

    if PERIOD_LENGTH[period] is None:
        # months do not nest in weeks: average over the covered days
        days = sum((next_window(ts, period) - ts).days for ts in minima.window_starts)
        weeks = days / 7.0
        weekly = total / weeks if weeks else 0.0
        complete = int(days // 7)
    else:
        by_week: dict[datetime, list[float]] = {}
        for ts, r in zip(minima.window_starts, per_window.tolist()):
            by_week.setdefault(_monday(ts), []).append(r)
        full = _windows_per_week(period)
        kept = [math.fsum(v) for v in by_week.values() if len(v) == full]
        complete = len(kept)
        weekly = math.fsum(kept) / complete if complete else 0.0
    return RevenueReport(
        design, minima.window_starts, p_min, p_bid, price, per_window, total, complete, weekly,
        fleet_size, opex_per_ev_year,
    )


@dataclass(frozen=True)
class DesignComparison:
    reports: tuple[RevenueReport, ...]

    @property
    def names(self) -> list[str]:
        return [r.design.name for r in self.reports]

    def deltas(self) -> np.ndarray:
        """``deltas[i, j]`` is the weekly revenue of design ``j`` minus that of design ``i``."""
        weekly = np.array([r.weekly for r in self.reports])
        return weekly[None, :] - weekly[:, None]

    def rows(self) -> list[dict]:
        return [r.summary() for r in self.reports]

    def write_csv(self, path: str | Path) -> None:
        deltas = self.deltas()
        names = self.names
        with Path(path).open("w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(
                ("design", "service_period", "weekly_eur", "per_ev_weekly_eur", "mean_p_min_mw",
                 "mean_p_bid_mw", *(f"delta_to_{n}_eur" for n in names))
            )
            for i, r in enumerate(self.reports):
                s = r.summary()
                w.writerow(
                    (s["design"], s["service_period"], f"{s['weekly_eur']:.4f}", f"{s['per_ev_weekly_eur']:.6f}",
                     f"{s['mean_p_min_mw']:.6f}", f"{s['mean_p_bid_mw']:.6f}",
                     *(f"{d:.4f}" for d in deltas[i]))
                )


def compare_designs(
    profile: PowerCapabilityProfile,
    priced_designs: Sequence[tuple[MarketDesign, PriceSeries]],
    fleet_size: int | None = None,
    opex_per_ev_year: float | None = None,
) -> DesignComparison:
    """Evaluate several designs on the same capability profile."""
    size = fleet_size if fleet_size is not None else profile.n_vehicles
    reports = []
    for design, prices in priced_designs:
        minima = period_minima(profile, design.service_period)
        reports.append(revenue(minima, prices, design, size, opex_per_ev_year))
    return DesignComparison(tuple(reports))
