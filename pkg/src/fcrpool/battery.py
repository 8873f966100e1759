"""Charging physics and virtual sectioning of the EV battery.

The battery is split, independently of the current state of energy, into a
mobility range (a permanent spontaneous-trip buffer plus energy reserved ahead
of expected departures) and a marketable range above it. Only vehicles whose
SOE lies above the mobility range and below the constant-voltage band can offer
power, and that power is limited by energy over the supply period, the car's
charger and the charging station.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, replace
from datetime import date, datetime, timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from fcrpool.ingest import TripLog, TripRecord, VehicleSpec
from fcrpool.profiles import DAYS_PER_WEEK, SLOT_MINUTES, SLOTS_PER_DAY, TripDraw

log = logging.getLogger(__name__)

SPONTANEOUS_BUFFER_SHARE = 0.30
DT_SUPPLY_H = 0.25
SLOT_H = SLOT_MINUTES / 60.0

CEILING_BATTERY = "battery"
CEILING_CHARGE_LIMIT = "charge_limit"
_CEILINGS = (CEILING_BATTERY, CEILING_CHARGE_LIMIT)


@dataclass(frozen=True)
class ChargingCurve:
    """Constant-power charging that turns into a constant-voltage tail.

    Below ``cv_threshold`` (SOE fraction) the battery takes
    ``cp_power_ac * efficiency``. Above it the DC power falls to zero at full
    charge, linearly in SOE unless ``cv_points`` gives a measured
    ``(soe_fraction, ac_kw)`` table for the tail.
    """

    cp_power_ac: float = 11.0
    efficiency: float = 0.93
    cv_threshold: float = 0.90
    cv_points: tuple[tuple[float, float], ...] | None = None

    def __post_init__(self) -> None:
        if self.cp_power_ac <= 0:
            raise ValueError("cp_power_ac must be positive")
        if not 0 < self.efficiency <= 1:
            raise ValueError("efficiency must lie in (0, 1]")
        if not 0 < self.cv_threshold < 1:
            raise ValueError("cv_threshold must lie in (0, 1)")
        if self.cv_points is not None:
            pts = tuple((float(s), float(p)) for s, p in self.cv_points)
            soe = [s for s, _ in pts]
            kw = [p for _, p in pts]
            if soe[0] != self.cv_threshold or kw[0] != self.cp_power_ac:
                raise ValueError("CV table must start at (cv_threshold, cp_power_ac)")
            if soe[-1] != 1.0 or kw[-1] > 0.01 * self.cp_power_ac:
                raise ValueError("CV table must end near zero power at SOE 1.0")
            if any(b <= a for a, b in zip(soe, soe[1:])) or any(b >= a for a, b in zip(kw, kw[1:])):
                raise ValueError("CV table must be strictly increasing in SOE and decreasing in power")
            object.__setattr__(self, "cv_points", pts)

    @property
    def cp_power_dc(self) -> float:
        return self.cp_power_ac * self.efficiency

    def dc_power(self, soe_fraction: float) -> float:
        """Battery-side charging power in kW at the given SOE fraction."""
        if soe_fraction < self.cv_threshold:
            return self.cp_power_dc
        if soe_fraction >= 1.0:
            return 0.0
        if self.cv_points is None:
            return self.cp_power_dc * (1.0 - soe_fraction) / (1.0 - self.cv_threshold)
        soe, kw = zip(*self.cv_points)
        return float(np.interp(soe_fraction, soe, kw)) * self.efficiency

    def with_power(self, cp_power_ac: float) -> ChargingCurve:
        """Same curve shape at a different constant-power level."""
        points = None
        if self.cv_points is not None:
            scale = cp_power_ac / self.cp_power_ac
            points = tuple((s, p * scale) for s, p in self.cv_points)
        return replace(self, cp_power_ac=cp_power_ac, cv_points=points)

    def advance(self, soe: float, e_bat: float, dt_h: float) -> float:
        """SOE after charging for ``dt_h`` hours with no target limit."""
        p0 = self.cp_power_dc
        threshold = self.cv_threshold * e_bat
        if soe < threshold:
            to_threshold = (threshold - soe) / p0
            if to_threshold >= dt_h:
                return soe + p0 * dt_h
            soe, dt_h = threshold, dt_h - to_threshold
        if soe >= e_bat:
            return e_bat
        if self.cv_points is None:
            # ds/dt = p0 (E - s) / (E - threshold)  =>  exponential approach to E
            return e_bat - (e_bat - soe) * math.exp(-p0 * dt_h / (e_bat - threshold))
        n = 32
        h = dt_h / n
        f = lambda s: self.dc_power(s / e_bat)  # noqa: E731
        for _ in range(n):
            k1 = f(soe)
            k2 = f(min(e_bat, soe + 0.5 * h * k1))
            k3 = f(min(e_bat, soe + 0.5 * h * k2))
            k4 = f(min(e_bat, soe + h * k3))
            soe = min(e_bat, soe + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0)
        return soe

    @classmethod
    def from_json(cls, path: str | Path) -> ChargingCurve:
        """Load ``{"efficiency": .., "points": [[soe_fraction, ac_kw], ...]}``.

        The constant-power level is the largest AC power in the table and the
        CV threshold is the highest SOE at which that power is still drawn.
        """
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        points = sorted((float(s), float(p)) for s, p in doc["points"])
        cp = max(p for _, p in points)
        threshold = max(s for s, p in points if p == cp)
        tail = tuple((s, p) for s, p in points if s >= threshold)
        return cls(
            cp_power_ac=cp,
            efficiency=float(doc.get("efficiency", 0.93)),
            cv_threshold=threshold,
            cv_points=tail,
        )


@dataclass(frozen=True)
class EVState:
    soe: float  # kWh
    plugged: bool = True
    away_until: datetime | None = None
    active_trip: TripDraw | None = None
    grid_energy: float = 0.0  # kWh drawn on the AC side so far

    def __post_init__(self) -> None:
        if self.soe < 0:
            raise ValueError(f"negative SOE {self.soe}")
        if self.plugged and self.away_until is not None:
            raise ValueError("a plugged vehicle cannot be away")


def charge_step(
    state: EVState, spec: VehicleSpec, curve: ChargingCurve, target_soe: float, dt: float = SLOT_H
) -> EVState:
    """Charge for ``dt`` hours toward ``target_soe`` (never beyond it, never discharging)."""
    if not state.plugged or state.soe >= target_soe:
        return state
    new_soe = min(target_soe, spec.battery_energy, curve.advance(state.soe, spec.battery_energy, dt))
    gained = new_soe - state.soe
    return replace(state, soe=new_soe, grid_energy=state.grid_energy + gained / curve.efficiency)


@dataclass(frozen=True, eq=False)
class BatteryPartition:
    e_bat: float
    trip_energy: np.ndarray  # (7, 96) kWh reserved ahead of departures
    soe_max: float  # individual charge limit
    cv_limit: float  # start of the constant-voltage band
    buffer_share: float = SPONTANEOUS_BUFFER_SHARE
    infeasible_trips: int = 0

    def __post_init__(self) -> None:
        te = np.asarray(self.trip_energy, dtype=float)
        if te.shape != (DAYS_PER_WEEK, SLOTS_PER_DAY):
            raise ValueError("trip_energy must have shape (7, 96)")
        if np.any(te < 0):
            raise ValueError("trip energy must be non-negative")
        if not self.spontaneous_buffer <= self.soe_max <= self.cv_limit <= self.e_bat:
            raise ValueError(
                f"need buffer {self.spontaneous_buffer:.3f} <= soe_max {self.soe_max:.3f}"
                f" <= cv limit {self.cv_limit:.3f} <= E_bat {self.e_bat:.3f}"
            )
        te.setflags(write=False)
        object.__setattr__(self, "trip_energy", te)
        table = np.minimum(self.spontaneous_buffer + te, self.soe_max)
        table.setflags(write=False)
        object.__setattr__(self, "_mobility", table)

    @property
    def spontaneous_buffer(self) -> float:
        return self.buffer_share * self.e_bat

    @property
    def mobility_table(self) -> np.ndarray:
        """Mobility energy for every weekday and slot, shape (7, 96)."""
        return self._mobility

    @classmethod
    def flat(cls, e_bat: float, soe_max: float, cv_threshold: float = 0.90) -> BatteryPartition:
        """Partition with the spontaneous buffer only (no scheduled trips)."""
        return cls(e_bat, np.zeros((DAYS_PER_WEEK, SLOTS_PER_DAY)), soe_max, cv_threshold * e_bat)


def mobility_energy(partition: BatteryPartition, weekday: int, slot: int) -> float:
    """Energy (kWh) that must stay in the battery at ``weekday``/``slot``."""
    return float(partition.mobility_table[weekday, slot])


def _trip_energy(trip: TripRecord, spec: VehicleSpec) -> float:
    if trip.consumption is not None:
        return trip.consumption
    return trip.distance * spec.mean_consumption / 100.0


def build_partition(
    history: TripLog | Sequence[TripRecord],
    spec: VehicleSpec,
    curve: ChargingCurve,
    quantile: float = 0.95,
    lookahead_slots: int = 4,
    margin: float = 0.10,
    vehicle_id: str | None = None,
) -> BatteryPartition:
    """Size the mobility reservation and charge limit from a vehicle's trip history.

    For each weekday and slot the reserved trip energy is the ``quantile`` (taken
    across the observed days of that weekday, rounding up to an observed value)
    of the energy of all trips departing within ``lookahead_slots`` slots from the
    slot start. The charge limit sits ``margin`` of the capacity above the
    largest mobility energy, capped at the CV threshold, and is raised if any
    single historical trip needs more.
    """
    trips = _history_trips(history, vehicle_id)
    if not trips:
        raise ValueError("history is empty")
    if not 0 < quantile <= 1:
        raise ValueError("quantile must lie in (0, 1]")
    if lookahead_slots < 1:
        raise ValueError("lookahead must cover at least one slot")

    e_bat = spec.battery_energy
    cv_limit = curve.cv_threshold * e_bat
    buffer = SPONTANEOUS_BUFFER_SHARE * e_bat

    first_day: date = trips[0].start.date()
    last_day: date = max(t.end for t in trips).date()
    n_days = (last_day - first_day).days + 1
    origin = datetime.combine(first_day, datetime.min.time())
    per_day = np.zeros(n_days * SLOTS_PER_DAY)
    for t in trips:
        dep = (t.start - origin) // timedelta(minutes=SLOT_MINUTES)
        lo = max(0, dep - lookahead_slots + 1)
        per_day[lo : dep + 1] += _trip_energy(t, spec)
    per_day = per_day.reshape(n_days, SLOTS_PER_DAY)

    weekdays = np.array([(first_day + timedelta(days=d)).weekday() for d in range(n_days)])
    trip_energy = np.zeros((DAYS_PER_WEEK, SLOTS_PER_DAY))
    for wd in range(DAYS_PER_WEEK):
        rows = per_day[weekdays == wd]
        if len(rows):
            trip_energy[wd] = np.quantile(rows, quantile, axis=0, method="higher")

    soe_max = min(cv_limit, buffer + float(trip_energy.max()) + margin * e_bat)
    energies = [_trip_energy(t, spec) for t in trips]
    worst = max(energies)
    if worst > soe_max:
        soe_max = min(cv_limit, worst)
    infeasible = sum(1 for e in energies if e > cv_limit)
    if infeasible:
        log.warning("%d trip(s) need more than the CV limit of %.2f kWh; trip energy capped", infeasible, cv_limit)
    trip_energy = np.minimum(trip_energy, soe_max - buffer)
    return BatteryPartition(e_bat, trip_energy, soe_max, cv_limit, infeasible_trips=infeasible)


def _history_trips(history, vehicle_id: str | None) -> list[TripRecord]:
    records: Iterable[TripRecord] = history.records if isinstance(history, TripLog) else history
    records = list(records)
    if vehicle_id is not None:
        records = [r for r in records if r.vehicle_id == vehicle_id]
    elif len({r.vehicle_id for r in records}) > 1:
        raise ValueError("history holds several vehicles; pass vehicle_id")
    return sorted(records, key=lambda r: r.start)


# Marketable energy and power ---------------------------------------------------


@dataclass(frozen=True)
class MarketEnergy:
    e_charge: float  # kWh the vehicle may absorb for the market
    e_discharge: float  # kWh the vehicle may deliver
    e_market: float  # size of the marketable range
    e_charge_raw: float  # E_bat - SOE before any charge-limit rule
    available: bool


@dataclass(frozen=True)
class AvailablePower:
    p_charge: float
    p_discharge: float

    @property
    def bidirectional(self) -> float:
        return min(self.p_charge, self.p_discharge)


_UNAVAILABLE = MarketEnergy(0.0, 0.0, 0.0, 0.0, False)


def marketable_energy(
    state: EVState,
    partition: BatteryPartition,
    weekday: int,
    slot: int,
    ceiling: str = CEILING_BATTERY,
) -> MarketEnergy:
    """Charge/discharge energy a vehicle can offer at ``weekday``/``slot``.

    Nothing is marketable unless the SOE is above the mobility energy. Then the
    marketable range is ``E_bat - E_mobility``, discharge energy is
    ``SOE - E_mobility`` and charge energy is ``E_bat - SOE``; with
    ``ceiling="charge_limit"`` the charge energy is instead bounded by the
    individual charge limit. Vehicles that are unplugged or sit in the
    constant-voltage band are not available.
    """
    if ceiling not in _CEILINGS:
        raise ValueError(f"ceiling must be one of {_CEILINGS}")
    e_mob = mobility_energy(partition, weekday, slot)
    soe = state.soe
    if soe <= e_mob:
        return _UNAVAILABLE
    raw_charge = partition.e_bat - soe
    e_charge = raw_charge if ceiling == CEILING_BATTERY else max(0.0, partition.soe_max - soe)
    return MarketEnergy(
        e_charge=e_charge,
        e_discharge=soe - e_mob,
        e_market=partition.e_bat - e_mob,
        e_charge_raw=raw_charge,
        available=state.plugged and soe <= partition.cv_limit,
    )


def available_power(
    energies: MarketEnergy, p_car: float, p_station: float, dt_supply: float = DT_SUPPLY_H
) -> AvailablePower:
    """Power sustainable for ``dt_supply`` hours, limited by energy, car and station."""
    if not energies.available:
        return AvailablePower(0.0, 0.0)
    return AvailablePower(
        min(energies.e_charge / dt_supply, p_car, p_station),
        min(energies.e_discharge / dt_supply, p_car, p_station),
    )


def capability_arrays(
    soe: np.ndarray,
    e_mob: np.ndarray,
    plugged: np.ndarray,
    partition: BatteryPartition,
    p_car: float,
    p_station: float,
    dt_supply: float = DT_SUPPLY_H,
    ceiling: str = CEILING_BATTERY,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorised :func:`marketable_energy` + :func:`available_power` over a trace."""
    above = soe > e_mob
    available = above & plugged & (soe <= partition.cv_limit)
    if ceiling == CEILING_BATTERY:
        e_charge = partition.e_bat - soe
    else:
        e_charge = np.maximum(0.0, partition.soe_max - soe)
    e_discharge = soe - e_mob
    p_charge = np.where(available, np.minimum(np.minimum(e_charge / dt_supply, p_car), p_station), 0.0)
    p_discharge = np.where(available, np.minimum(np.minimum(e_discharge / dt_supply, p_car), p_station), 0.0)
    return p_charge, p_discharge, available
