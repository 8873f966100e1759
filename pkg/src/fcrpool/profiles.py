"""Day/time conditioned trip-start probabilities and empirical trip pools.

A profile holds, for every weekday and 15-minute slot, the probability that a
plugged vehicle departs, plus the observed trips keyed by departure weekday and
hour. Sampling resamples whole historical trips so that distance, duration and
consumption stay jointly consistent.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from pathlib import Path
from statistics import NormalDist
from typing import Mapping, Sequence

import numpy as np

from fcrpool.ingest import TripLog, VehicleSpec, draw_consumption

SLOT_MINUTES = 15
SLOTS_PER_HOUR = 60 // SLOT_MINUTES
SLOTS_PER_DAY = 24 * SLOTS_PER_HOUR
DAYS_PER_WEEK = 7
SCHEMA_NAME = "fcrpool.mobility_profile"
SCHEMA_VERSION = 1


@dataclass(frozen=True)
class TripDraw:
    distance: float  # km
    duration: float  # minutes
    consumption_rate: float  # kWh/100 km
    end_at_company: bool

    @property
    def duration_slots(self) -> int:
        return max(1, math.ceil(self.duration / SLOT_MINUTES - 1e-9))

    def energy(self) -> float:
        return self.distance * self.consumption_rate / 100.0


@dataclass(frozen=True, eq=False)
class MobilityProfile:
    start_prob: np.ndarray  # (7, 96), weekday 0 = Monday
    trip_pool: Mapping[tuple[int, int], tuple[TripDraw, ...]]
    plug_prob_at_return: float
    # days the vehicle was plugged at each weekday/slot when fitted (None for templates)
    plugged_days: np.ndarray | None = None
    _resolved: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self) -> None:
        sp = np.asarray(self.start_prob, dtype=float)
        if sp.shape != (DAYS_PER_WEEK, SLOTS_PER_DAY):
            raise ValueError(f"start_prob must have shape (7, 96), got {sp.shape}")
        if np.any(sp < 0) or np.any(sp > 1):
            raise ValueError("start probabilities must lie in [0, 1]")
        if not 0.0 <= self.plug_prob_at_return <= 1.0:
            raise ValueError("plug_prob_at_return must lie in [0, 1]")
        sp.setflags(write=False)
        object.__setattr__(self, "start_prob", sp)
        pool = {k: tuple(v) for k, v in self.trip_pool.items() if v}
        object.__setattr__(self, "trip_pool", pool)
        if sp.any() and not pool:
            raise ValueError("profile has start probabilities but no trips to sample")

    def candidates(self, weekday: int, hour: int) -> tuple[TripDraw, ...]:
        """Trips to resample from, merging sparse bins: (day, hour) -> (any day, hour) -> all."""
        key = (weekday, hour)
        found = self._resolved.get(key)
        if found is None:
            found = self.trip_pool.get(key, ())
            if not found:
                found = tuple(t for d in range(DAYS_PER_WEEK) for t in self.trip_pool.get((d, hour), ()))
            if not found:
                found = tuple(t for k in sorted(self.trip_pool) for t in self.trip_pool[k])
            self._resolved[key] = found
        return found

    def mean_trips_per_day(self) -> float:
        return float(self.start_prob.sum()) / DAYS_PER_WEEK

    # serialization ---------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA_NAME,
            "version": SCHEMA_VERSION,
            "slot_minutes": SLOT_MINUTES,
            "plug_prob_at_return": self.plug_prob_at_return,
            "start_prob": self.start_prob.tolist(),
            "plugged_days": None if self.plugged_days is None else np.asarray(self.plugged_days).tolist(),
            "trip_pool": [
                {
                    "weekday": d,
                    "hour": h,
                    "trips": [
                        [t.distance, t.duration, t.consumption_rate, t.end_at_company]
                        for t in self.trip_pool[(d, h)]
                    ],
                }
                for d, h in sorted(self.trip_pool)
            ],
        }

    @classmethod
    def from_dict(cls, doc: Mapping) -> MobilityProfile:
        if doc.get("schema") != SCHEMA_NAME:
            raise ValueError(f"not a mobility profile document: {doc.get('schema')!r}")
        if doc.get("version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported profile schema version {doc.get('version')!r}")
        if doc.get("slot_minutes") != SLOT_MINUTES:
            raise ValueError("profile slot length must be 15 minutes")
        pool = {
            (int(b["weekday"]), int(b["hour"])): tuple(
                TripDraw(float(d), float(u), float(c), bool(f)) for d, u, c, f in b["trips"]
            )
            for b in doc["trip_pool"]
        }
        plugged = doc.get("plugged_days")
        return cls(
            start_prob=np.array(doc["start_prob"], dtype=float),
            trip_pool=pool,
            plug_prob_at_return=float(doc["plug_prob_at_return"]),
            plugged_days=None if plugged is None else np.array(plugged, dtype=int),
        )

    def save(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> MobilityProfile:
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _slot_of(ts: datetime) -> int:
    return ts.hour * SLOTS_PER_HOUR + ts.minute // SLOT_MINUTES


def fit_profile(log: TripLog, vehicle_id: str, spec: VehicleSpec) -> MobilityProfile:
    """Estimate a vehicle's trip-start probabilities and trip pool from its log.

    For every weekday and slot the start probability is the number of days on
    which a trip left from the plugged state in that slot, divided by the number
    of days the vehicle was plugged at the start of that slot. Several
    departures in one slot on one day count once.

    The vehicle is treated as plugged between trips that ended at the company
    and as parked elsewhere after trips that did not. Before its first trip it
    counts as plugged.
    """
    trips = sorted(log.for_vehicle(vehicle_id), key=lambda r: r.start)
    if not trips:
        raise KeyError(f"vehicle {vehicle_id!r} not in trip log")

    first_day = trips[0].start.date()
    last_day = max(t.end for t in trips).date()
    n_days = (last_day - first_day).days + 1
    origin = datetime.combine(first_day, datetime.min.time())

    # minutes since origin, for the slot-start grid and the trips
    grid = np.arange(n_days * SLOTS_PER_DAY, dtype=np.int64) * SLOT_MINUTES
    starts = np.array([(t.start - origin) // timedelta(minutes=1) for t in trips], dtype=np.int64)
    # round trip ends up so a vehicle counts as driving until its last partial minute
    ends = np.array([math.ceil((t.end - origin) / timedelta(minutes=1)) for t in trips], dtype=np.int64)
    at_company = np.array([t.end_at_company for t in trips], dtype=bool)

    # last trip that left strictly before each slot start
    prev = np.searchsorted(starts, grid, side="left") - 1
    has_prev = prev >= 0
    prev_c = np.clip(prev, 0, None)
    driving = has_prev & (ends[prev_c] > grid)
    plugged = ~has_prev | (~driving & at_company[prev_c])

    departed = np.zeros(grid.size, dtype=bool)
    start_slots = starts // SLOT_MINUTES
    departed[start_slots] = True
    departed &= plugged

    weekdays = np.array([(first_day + timedelta(days=d)).weekday() for d in range(n_days)])
    plugged_days = np.zeros((DAYS_PER_WEEK, SLOTS_PER_DAY), dtype=int)
    starts_count = np.zeros((DAYS_PER_WEEK, SLOTS_PER_DAY), dtype=int)
    np.add.at(plugged_days, weekdays, plugged.reshape(n_days, SLOTS_PER_DAY).astype(int))
    np.add.at(starts_count, weekdays, departed.reshape(n_days, SLOTS_PER_DAY).astype(int))
    with np.errstate(invalid="ignore", divide="ignore"):
        start_prob = np.where(plugged_days > 0, starts_count / np.maximum(plugged_days, 1), 0.0)

    pool: dict[tuple[int, int], list[TripDraw]] = {}
    for t in trips:
        pool.setdefault((t.start.weekday(), t.start.hour), []).append(_draw_from_record(t, spec))
    plug_prob = float(at_company.mean())
    return MobilityProfile(start_prob, pool, plug_prob, plugged_days)


def _draw_from_record(trip, spec: VehicleSpec) -> TripDraw:
    if trip.consumption is not None and trip.distance > 0:
        rate = trip.consumption / trip.distance * 100.0
    else:
        rate = spec.mean_consumption
    minutes = trip.duration / timedelta(minutes=1)
    return TripDraw(trip.distance, max(float(SLOT_MINUTES), minutes), rate, trip.end_at_company)


def sample_trip(
    profile: MobilityProfile, weekday: int, slot: int, spec: VehicleSpec, rng: np.random.Generator
) -> TripDraw:
    """Resample one observed trip for a departure at ``weekday``/``slot``.

    Electrified combustion vehicles get a fresh consumption rate drawn around
    their class mean instead of the recorded one.
    """
    candidates = profile.candidates(weekday, slot // SLOTS_PER_HOUR)
    draw = candidates[int(rng.integers(len(candidates)))]
    if spec.electrified:
        draw = TripDraw(draw.distance, draw.duration, draw_consumption(spec, rng), draw.end_at_company)
    return draw


# Synthetic templates ----------------------------------------------------------


@dataclass(frozen=True)
class Shift:
    """A recurring departure window.

    ``prob`` is the chance that a vehicle plugged at the window start leaves
    during the window; it is spread evenly over ``spread_slots`` slots.
    """

    start: str  # "HH:MM"
    prob: float
    duration_min: float
    distance_km: float
    spread_slots: int = 2
    days: tuple[int, ...] = tuple(range(DAYS_PER_WEEK))

    @property
    def start_slot(self) -> int:
        hh, mm = (int(x) for x in self.start.split(":"))
        if not (0 <= hh < 24 and 0 <= mm < 60) or mm % SLOT_MINUTES:
            raise ValueError(f"shift start {self.start!r} is not a 15-minute boundary")
        return hh * SLOTS_PER_HOUR + mm // SLOT_MINUTES

    def busy_minutes(self) -> tuple[int, int]:
        begin = self.start_slot * SLOT_MINUTES
        return begin, begin + int(self.duration_min) + (self.spread_slots - 1) * SLOT_MINUTES


@dataclass(frozen=True)
class TemplateParams:
    shifts: tuple[Shift, ...]
    plug_prob_at_return: float
    distance_cv: float = 0.25
    duration_cv: float = 0.10
    consumption_rate: float = 18.9
    pool_size: int = 24


TEMPLATES: dict[str, TemplateParams] = {
    # two daily shifts, seven days a week (home care service); about a fifth
    # of returns leave the car parked away from the depot overnight
    "two_shift": TemplateParams(
        shifts=(
            Shift("06:30", 0.6, 330.0, 40.0),
            Shift("14:00", 0.4, 420.0, 40.0),
        ),
        plug_prob_at_return=0.8,
    ),
    # short errands on working days only
    "office": TemplateParams(
        shifts=(
            Shift("08:00", 0.5, 75.0, 25.0, spread_slots=4, days=(0, 1, 2, 3, 4)),
            Shift("13:00", 0.5, 75.0, 25.0, spread_slots=4, days=(0, 1, 2, 3, 4)),
        ),
        plug_prob_at_return=0.97,
    ),
    # one long day shift on working days, parked at the weekend
    "weekend_idle": TemplateParams(
        shifts=(Shift("07:00", 0.8, 480.0, 50.0, spread_slots=3, days=(0, 1, 2, 3, 4)),),
        plug_prob_at_return=0.85,
    ),
}


def template_params(template: str, **overrides) -> TemplateParams:
    try:
        base = TEMPLATES[template]
    except KeyError:
        raise ValueError(f"unknown template {template!r}; expected one of {sorted(TEMPLATES)}") from None
    if "shifts" in overrides:
        overrides["shifts"] = tuple(s if isinstance(s, Shift) else _shift_from_mapping(s) for s in overrides["shifts"])
    return TemplateParams(**{**base.__dict__, **overrides})


def _shift_from_mapping(doc: Mapping) -> Shift:
    doc = dict(doc)
    if "days" in doc:
        doc["days"] = tuple(int(d) for d in doc["days"])
    return Shift(**doc)


def synthetic_profile(template: str, params: TemplateParams | None = None) -> MobilityProfile:
    """Deterministic profile built from shift windows instead of a trip log."""
    params = params if params is not None else template_params(template)
    if template not in TEMPLATES:
        raise ValueError(f"unknown template {template!r}")
    _check_overlaps(params.shifts)

    start_prob = np.zeros((DAYS_PER_WEEK, SLOTS_PER_DAY))
    pool: dict[tuple[int, int], list[TripDraw]] = {}
    for shift in params.shifts:
        if not 0.0 <= shift.prob <= 1.0:
            raise ValueError(f"shift probability {shift.prob} outside [0, 1]")
        first = shift.start_slot
        k = shift.spread_slots
        per_slot = 1.0 - (1.0 - shift.prob) ** (1.0 / k)
        draws = _quantile_trips(shift, params)
        for day in shift.days:
            for s in range(first, first + k):
                d, slot = (day + s // SLOTS_PER_DAY) % DAYS_PER_WEEK, s % SLOTS_PER_DAY
                start_prob[d, slot] = per_slot
                pool.setdefault((d, slot // SLOTS_PER_HOUR), []).extend(draws)
    return MobilityProfile(start_prob, pool, params.plug_prob_at_return)


def _check_overlaps(shifts: Sequence[Shift]) -> None:
    windows = []
    for s in shifts:
        begin, end = s.busy_minutes()
        for day in s.days:
            windows.append((day * 1440 + begin, day * 1440 + end, s.start))
    windows.sort()
    week = DAYS_PER_WEEK * 1440
    for (b0, e0, n0), (b1, _, n1) in zip(windows, windows[1:] + windows[:1]):
        gap = b1 - b0 if b1 > b0 else b1 + week - b0
        if len(windows) > 1 and e0 - b0 > gap:
            raise ValueError(f"shift windows overlap: {n0} and {n1}")


def _quantile_trips(shift: Shift, params: TemplateParams) -> list[TripDraw]:
    n = params.pool_size
    nd = NormalDist()
    z = [nd.inv_cdf((i + 0.5) / n) for i in range(n)]
    n_away = round(n * (1.0 - params.plug_prob_at_return))
    trips = []
    for i, zi in enumerate(z):
        trips.append(
            TripDraw(
                distance=max(1.0, shift.distance_km * (1.0 + params.distance_cv * zi)),
                duration=max(float(SLOT_MINUTES), shift.duration_min * (1.0 + params.duration_cv * zi)),
                consumption_rate=params.consumption_rate,
                # the longest trips are the ones that end away from the depot
                end_at_company=i < n - n_away,
            )
        )
    return trips


def week_slot(ts: datetime) -> int:
    return ts.weekday() * SLOTS_PER_DAY + _slot_of(ts)


def is_week_aligned(ts: datetime | date) -> bool:
    if isinstance(ts, datetime):
        return ts.weekday() == 0 and ts.time() == datetime.min.time()
    return ts.weekday() == 0
