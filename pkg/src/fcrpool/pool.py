"""Pool power-capability profiles and their minima over FCR service periods."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from fcrpool.profiles import SLOT_MINUTES, SLOTS_PER_DAY
from fcrpool.sim import EVTrace

SLOT = timedelta(minutes=SLOT_MINUTES)

# canonical service period names, longest first
PERIODS: tuple[str, ...] = ("1m", "1w", "1d", "4h", "1h", "15min")
PERIOD_LENGTH: dict[str, timedelta | None] = {
    "1m": None,  # calendar month
    "1w": timedelta(weeks=1),
    "1d": timedelta(days=1),
    "4h": timedelta(hours=4),
    "1h": timedelta(hours=1),
    "15min": timedelta(minutes=15),
}
_ALIASES = {
    "month": "1m", "monthly": "1m", "1month": "1m",
    "week": "1w", "weekly": "1w", "1week": "1w",
    "day": "1d", "daily": "1d", "24h": "1d",
    "4hours": "4h", "4-h": "4h",
    "hour": "1h", "hourly": "1h",
    "15m": "15min", "quarter-hour": "15min",
}


class AlignmentError(ValueError):
    """Horizon or windows do not line up with a service period."""


def canonical_period(name: str) -> str:
    key = name.strip().lower().replace(" ", "")
    key = _ALIASES.get(key, key)
    if key not in PERIOD_LENGTH:
        raise ValueError(f"unknown service period {name!r}; expected one of {PERIODS}")
    return key


def next_window(start: datetime, period: str) -> datetime:
    length = PERIOD_LENGTH[canonical_period(period)]
    if length is not None:
        return start + length
    year, month = (start.year + 1, 1) if start.month == 12 else (start.year, start.month + 1)
    return start.replace(year=year, month=month, day=1)


def is_period_aligned(ts: datetime, period: str) -> bool:
    period = canonical_period(period)
    if period == "15min":
        return ts.minute % SLOT_MINUTES == 0 and ts.second == 0 and ts.microsecond == 0
    if ts.minute or ts.second or ts.microsecond:
        return False
    if period == "1h":
        return True
    if period == "4h":
        return ts.hour % 4 == 0
    if ts.hour:
        return False
    if period == "1d":
        return True
    if period == "1w":
        return ts.weekday() == 0
    return ts.day == 1


@dataclass(frozen=True, eq=False)
class PowerCapabilityProfile:
    start: datetime
    pool_power: np.ndarray  # kW, minimum of charge and discharge power summed over the pool
    rated_power: float  # kW, sum of min(car, station) power
    nameplate_power: float  # kW, sum of car charger power
    n_vehicles: int

    def __len__(self) -> int:
        return len(self.pool_power)

    @property
    def end(self) -> datetime:
        return self.start + len(self) * SLOT

    def relative(self, basis: str = "rated") -> np.ndarray:
        denom = self.rated_power if basis == "rated" else self.nameplate_power
        return self.pool_power / denom

    def timestamps(self) -> list[datetime]:
        return [self.start + k * SLOT for k in range(len(self))]

    def scaled(self, factor: float) -> PowerCapabilityProfile:
        return PowerCapabilityProfile(
            self.start, self.pool_power * factor, self.rated_power * factor,
            self.nameplate_power * factor, round(self.n_vehicles * factor),
        )


def capability_profile(traces: Sequence[EVTrace]) -> PowerCapabilityProfile:
    """Sum each vehicle's symmetric power (min of charge and discharge) over the pool.

    Summation follows fleet order so results are reproducible bit for bit.
    """
    if not traces:
        raise ValueError("no traces")
    n = len(traces[0])
    start = traces[0].start
    for t in traces:
        if len(t) != n or t.start != start:
            raise ValueError("traces must share start and length")
    pool = np.zeros(n)
    for t in traces:
        pool += t.bidirectional
    rated = sum(t.rated_power for t in traces)
    nameplate = sum(t.p_car for t in traces)
    return PowerCapabilityProfile(start, pool, rated, nameplate, len(traces))


@dataclass(frozen=True, eq=False)
class PeriodMinSeries:
    service_period: str
    window_starts: tuple[datetime, ...]
    p_min: np.ndarray  # kW per window

    def __len__(self) -> int:
        return len(self.p_min)


def _windows(profile: PowerCapabilityProfile, period: str) -> list[tuple[datetime, int, int]]:
    """(window start, first slot, end slot) of every window evaluated for ``period``."""
    n = len(profile)
    if period == "1m":
        # only calendar months completely inside the horizon
        out = []
        ts = profile.start if is_period_aligned(profile.start, "1m") else next_window(
            profile.start.replace(day=1, hour=0, minute=0), "1m"
        )
        while True:
            nxt = next_window(ts, "1m")
            if nxt > profile.end:
                return out
            lo = (ts - profile.start) // SLOT
            out.append((ts, lo, (nxt - profile.start) // SLOT))
            ts = nxt
    length = PERIOD_LENGTH[period] // SLOT
    if not is_period_aligned(profile.start, period) or n % length:
        raise AlignmentError(
            f"horizon {profile.start}..{profile.end} does not tile into {period} windows"
        )
    return [(profile.start + i * SLOT, i, i + length) for i in range(0, n, length)]


def period_minima(profile: PowerCapabilityProfile, service_period: str) -> PeriodMinSeries:
    """Minimum pool power in each service-period window.

    Weeks start on Monday and 4-hour windows at 00/04/08/12/16/20 h; the horizon
    must tile exactly. Monthly windows are calendar months and partial months
    at either end of the horizon are left out.
    """
    period = canonical_period(service_period)
    wins = _windows(profile, period)
    p_min = np.array([profile.pool_power[lo:hi].min() for _, lo, hi in wins])
    return PeriodMinSeries(period, tuple(w[0] for w in wins), p_min)


@dataclass(frozen=True, eq=False)
class DayBands:
    """Order statistics of the pool power across days, one entry per time-of-day slot."""

    median: np.ndarray
    lo50: np.ndarray
    hi50: np.ndarray
    lo75: np.ndarray
    hi75: np.ndarray
    lo100: np.ndarray
    hi100: np.ndarray
    n_days: int

    def as_columns(self) -> dict[str, np.ndarray]:
        return {
            "median_kw": self.median,
            "p25_kw": self.lo50, "p75_kw": self.hi50,
            "p12_5_kw": self.lo75, "p87_5_kw": self.hi75,
            "min_kw": self.lo100, "max_kw": self.hi100,
        }


def distribution_bands(profile: PowerCapabilityProfile) -> DayBands:
    """Median and central 50/75/100 % ranges of every time-of-day slot over all days."""
    if not is_period_aligned(profile.start, "1d"):
        raise AlignmentError("profile must start at midnight")
    days = len(profile) // SLOTS_PER_DAY
    if days < 2:
        raise ValueError("need at least two full days")
    grid = profile.pool_power[: days * SLOTS_PER_DAY].reshape(days, SLOTS_PER_DAY)
    q = np.quantile(grid, [0.5, 0.25, 0.75, 0.125, 0.875], axis=0)
    return DayBands(q[0], q[1], q[2], q[3], q[4], grid.min(axis=0), grid.max(axis=0), days)


# CSV export ---------------------------------------------------------------------


def _writer(path: str | Path):
    fh = Path(path).open("w", newline="", encoding="utf-8")
    return fh, csv.writer(fh, lineterminator="\n")


def write_capability_csv(profile: PowerCapabilityProfile, path: str | Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(("timestamp", "pool_power_kw", "share_of_rated"))
        rel = profile.relative()
        for ts, p, r in zip(profile.timestamps(), profile.pool_power, rel):
            w.writerow((ts.isoformat(timespec="minutes"), f"{p:.4f}", f"{r:.6f}"))


def write_minima_csv(minima: PeriodMinSeries, path: str | Path) -> None:
    fh, w = _writer(path)
    with fh:
        w.writerow(("window_start", "service_period", "p_min_kw"))
        for ts, p in zip(minima.window_starts, minima.p_min):
            w.writerow((ts.isoformat(timespec="minutes"), minima.service_period, f"{p:.4f}"))


def write_bands_csv(bands: DayBands, path: str | Path) -> None:
    cols = bands.as_columns()
    fh, w = _writer(path)
    with fh:
        w.writerow(("time_of_day", *cols))
        for s in range(SLOTS_PER_DAY):
            hh, mm = divmod(s * SLOT_MINUTES, 60)
            w.writerow((f"{hh:02d}:{mm:02d}", *(f"{c[s]:.4f}" for c in cols.values())))
