"""15-minute Monte-Carlo mobility and charging simulation.

Each simulated vehicle is a three-state machine (plugged at the depot, driving,
parked away). A plugged or parked vehicle departs with the profile's start
probability for the current slot and draws a whole historical trip; on return
it plugs in with the profile's return probability, otherwise it stays parked
away until a later trip ends at the depot. Plugged vehicles charge toward their
charge limit once the SOE falls below the mobility reservation.

Every vehicle owns a random stream derived from ``(seed, vehicle index)``, so a
fleet run gives the same traces whatever the number of worker processes.
"""

from __future__ import annotations

import csv
import hashlib
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from fcrpool.battery import (
    CEILING_BATTERY,
    DT_SUPPLY_H,
    SLOT_H,
    BatteryPartition,
    ChargingCurve,
    build_partition,
    capability_arrays,
)
from fcrpool.ingest import TripLog, TripRecord, VehicleSpec
from fcrpool.profiles import SLOT_MINUTES, SLOTS_PER_DAY, MobilityProfile, is_week_aligned, sample_trip

log = logging.getLogger(__name__)

DEFAULT_SEED = 20200701
SLOT = timedelta(minutes=SLOT_MINUTES)
SLOTS_PER_WEEK = 7 * SLOTS_PER_DAY
MAX_RESAMPLES = 10

_PLUGGED, _DRIVING, _AWAY = 0, 1, 2


@dataclass(frozen=True)
class SimConfig:
    start: datetime  # Monday 00:00
    end: datetime
    seed: int = DEFAULT_SEED
    warmup_weeks: int = 1
    dt_supply_h: float = DT_SUPPLY_H
    ceiling: str = CEILING_BATTERY

    def __post_init__(self) -> None:
        if not is_week_aligned(self.start):
            raise ValueError(f"simulation must start on a Monday at 00:00, got {self.start}")
        if self.end <= self.start or (self.end - self.start) % SLOT:
            raise ValueError("horizon must be a positive whole number of 15-minute slots")
        if self.warmup_weeks < 0:
            raise ValueError("warmup_weeks must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")

    @classmethod
    def for_weeks(cls, start: datetime, weeks: int, **kwargs) -> SimConfig:
        return cls(start, start + timedelta(weeks=weeks), **kwargs)

    @property
    def n_slots(self) -> int:
        return (self.end - self.start) // SLOT

    @property
    def sim_start(self) -> datetime:
        return self.start - timedelta(weeks=self.warmup_weeks)

    def rng(self, *key: int) -> np.random.Generator:
        return np.random.default_rng(np.random.SeedSequence(self.seed, spawn_key=key))


@dataclass(frozen=True, eq=False)
class EVTrace:
    start: datetime
    soe: np.ndarray
    plugged: np.ndarray
    available: np.ndarray
    p_charge: np.ndarray
    p_discharge: np.ndarray
    p_car: float
    p_station: float
    trips: tuple[TripRecord, ...] = ()

    def __len__(self) -> int:
        return len(self.soe)

    @property
    def rated_power(self) -> float:
        return min(self.p_car, self.p_station)

    @property
    def bidirectional(self) -> np.ndarray:
        return np.minimum(self.p_charge, self.p_discharge)

    def timestamps(self) -> list[datetime]:
        return [self.start + k * SLOT for k in range(len(self))]


@dataclass(frozen=True, eq=False)
class FleetMember:
    spec: VehicleSpec
    profile: MobilityProfile
    partition: BatteryPartition
    p_station: float
    curve: ChargingCurve | None = None
    vehicle_id: str = ""

    def charging_curve(self) -> ChargingCurve:
        if self.curve is not None:
            return self.curve
        return ChargingCurve(cp_power_ac=min(self.spec.max_charge_power, self.p_station))


@dataclass
class _Run:
    soe: np.ndarray
    plugged: np.ndarray
    trips: list = field(default_factory=list)


def _run(
    profile: MobilityProfile,
    spec: VehicleSpec,
    partition: BatteryPartition | None,
    curve: ChargingCurve | None,
    rng: np.random.Generator,
    t0: datetime,
    n: int,
    record_trips: bool,
    vehicle_id: str,
) -> _Run:
    """Step one vehicle through ``n`` slots from ``t0`` (a Monday 00:00).

    Without a partition only mobility is simulated (no energy bookkeeping).
    """
    start_prob = profile.start_prob.ravel().tolist()
    plug_prob = profile.plug_prob_at_return
    uniforms = rng.random(n).tolist()
    with_energy = partition is not None
    if with_energy:
        e_bat = partition.e_bat
        soe_max = partition.soe_max
        e_mob = partition.mobility_table.ravel().tolist()
        soe = soe_max
    else:
        soe = 0.0

    soe_out = np.empty(n)
    plugged_out = np.zeros(n, dtype=bool)
    trips: list[TripRecord] = []
    mode = _PLUGGED
    trip_end = -1
    trip_energy = 0.0
    plug_on_return = True
    charging = False

    for k in range(n):
        w = k % SLOTS_PER_WEEK
        if mode == _DRIVING and k >= trip_end:
            soe = max(0.0, soe - trip_energy)
            mode = _PLUGGED if plug_on_return else _AWAY
            charging = False

        if mode != _DRIVING and uniforms[k] < start_prob[w]:
            weekday, slot = divmod(w, SLOTS_PER_DAY)
            draw = sample_trip(profile, weekday, slot, spec, rng)
            distance = draw.distance
            energy = distance * draw.consumption_rate / 100.0
            if with_energy and energy > soe:
                for _ in range(MAX_RESAMPLES):
                    draw = sample_trip(profile, weekday, slot, spec, rng)
                    distance = draw.distance
                    energy = distance * draw.consumption_rate / 100.0
                    if energy <= soe:
                        break
                else:
                    # arrive empty rather than strand the vehicle
                    energy = soe
                    distance = soe * 100.0 / draw.consumption_rate
            plug_on_return = rng.random() < plug_prob
            if record_trips:
                begin = t0 + k * SLOT
                trips.append(
                    TripRecord(
                        vehicle_id,
                        begin,
                        begin + timedelta(minutes=draw.duration),
                        distance,
                        energy,
                        plug_on_return,
                    )
                )
            mode = _DRIVING
            trip_end = k + draw.duration_slots
            trip_energy = energy
            soe_out[k] = soe
            continue

        soe_out[k] = soe
        if mode == _PLUGGED:
            plugged_out[k] = True
            if with_energy:
                if not charging and soe < e_mob[w]:
                    charging = True
                if charging:
                    soe = curve.advance(soe, e_bat, SLOT_H)
                    if soe >= soe_max:
                        soe = soe_max
                        charging = False
    return _Run(soe_out, plugged_out, trips)


def simulate_ev(
    spec: VehicleSpec,
    profile: MobilityProfile,
    partition: BatteryPartition,
    curve: ChargingCurve,
    p_station: float,
    config: SimConfig,
    stream: int = 0,
    record_trips: bool = False,
    vehicle_id: str = "",
) -> EVTrace:
    """Simulate one vehicle over ``config``'s horizon.

    The vehicle starts plugged with a full charge-limit SOE at the beginning of
    the warm-up, which is discarded. ``stream`` selects the vehicle's random
    stream; fleet runs use the vehicle's index.
    """
    if abs(partition.e_bat - spec.battery_energy) > 1e-9:
        raise ValueError("partition and vehicle spec disagree on battery energy")
    warm = config.warmup_weeks * SLOTS_PER_WEEK
    n = warm + config.n_slots
    run = _run(
        profile, spec, partition, curve, config.rng(0, stream), config.sim_start, n, record_trips, vehicle_id
    )
    soe = run.soe[warm:]
    plugged = run.plugged[warm:]
    e_mob = np.resize(partition.mobility_table.ravel(), n)[warm:]
    p_charge, p_discharge, available = capability_arrays(
        soe, e_mob, plugged, partition, spec.max_charge_power, p_station, config.dt_supply_h, config.ceiling
    )
    trips = tuple(t for t in run.trips if t.start >= config.start)
    return EVTrace(config.start, soe, plugged, available, p_charge, p_discharge, spec.max_charge_power, p_station, trips)


def _simulate_member(args) -> EVTrace:
    index, member, config, record_trips = args
    return simulate_ev(
        member.spec,
        member.profile,
        member.partition,
        member.charging_curve(),
        member.p_station,
        config,
        stream=index,
        record_trips=record_trips,
        vehicle_id=member.vehicle_id or str(index),
    )


def simulate_fleet(
    fleet: Sequence[FleetMember], config: SimConfig, workers: int = 1, record_trips: bool = False
) -> list[EVTrace]:
    """Simulate every member; results are in fleet order and independent of ``workers``."""
    if not fleet:
        raise ValueError("fleet is empty")
    jobs = [(i, m, config, record_trips) for i, m in enumerate(fleet)]
    if workers <= 1:
        return [_simulate_member(j) for j in jobs]
    chunk = max(1, len(jobs) // (workers * 4))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_simulate_member, jobs, chunksize=chunk))


def sample_history(
    profile: MobilityProfile,
    spec: VehicleSpec,
    rng: np.random.Generator,
    start: datetime,
    days: int,
    vehicle_id: str = "synthetic",
) -> TripLog:
    """Trip log produced by the mobility process alone (no energy limits)."""
    if not is_week_aligned(start):
        raise ValueError("history must start on a Monday at 00:00")
    run = _run(profile, spec, None, None, rng, start, days * SLOTS_PER_DAY, True, vehicle_id)
    return TripLog.from_records(run.trips)


def synthetic_fleet(
    profile: MobilityProfile,
    spec: VehicleSpec,
    size: int,
    p_station: float,
    config: SimConfig,
    history_weeks: int = 26,
    curve: ChargingCurve | None = None,
    quantile: float = 0.95,
    lookahead_slots: int = 4,
    margin: float = 0.10,
) -> list[FleetMember]:
    """``size`` vehicles sharing one template profile and one partition.

    The partition is sized from ``history_weeks`` of trips sampled from the
    profile with a stream reserved for this purpose.
    """
    if size < 1:
        raise ValueError("fleet size must be at least 1")
    curve = curve or ChargingCurve(cp_power_ac=min(spec.max_charge_power, p_station))
    history = sample_history(profile, spec, config.rng(1, 0), config.sim_start, history_weeks * 7)
    if not len(history):
        partition = BatteryPartition.flat(spec.battery_energy, _flat_limit(spec, curve, margin), curve.cv_threshold)
    else:
        partition = build_partition(history, spec, curve, quantile, lookahead_slots, margin)
    return [FleetMember(spec, profile, partition, p_station, curve, f"ev{i:04d}") for i in range(size)]


def _flat_limit(spec: VehicleSpec, curve: ChargingCurve, margin: float) -> float:
    e = spec.battery_energy
    return min(curve.cv_threshold * e, (0.30 + margin) * e)


# Export ---------------------------------------------------------------------

TRACE_COLUMNS = ("ev", "timestamp", "soe_kwh", "plugged", "available", "p_charge_kw", "p_discharge_kw")


def write_traces_csv(traces: Sequence[EVTrace], path: str | Path, ids: Sequence[str] | None = None) -> None:
    ids = list(ids) if ids is not None else [str(i) for i in range(len(traces))]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for ev, tr in zip(ids, traces):
            stamps = [t.isoformat(timespec="minutes") for t in tr.timestamps()]
            for k, ts in enumerate(stamps):
                writer.writerow(
                    (
                        ev,
                        ts,
                        f"{tr.soe[k]:.4f}",
                        int(tr.plugged[k]),
                        int(tr.available[k]),
                        f"{tr.p_charge[k]:.4f}",
                        f"{tr.p_discharge[k]:.4f}",
                    )
                )


def save_traces(traces: Sequence[EVTrace], path: str | Path) -> None:
    """Compact binary cache of a fleet run (no trip records)."""
    np.savez_compressed(
        path,
        start=np.array(traces[0].start.isoformat()),
        soe=np.stack([t.soe for t in traces]),
        plugged=np.stack([t.plugged for t in traces]),
        available=np.stack([t.available for t in traces]),
        p_charge=np.stack([t.p_charge for t in traces]),
        p_discharge=np.stack([t.p_discharge for t in traces]),
        p_car=np.array([t.p_car for t in traces]),
        p_station=np.array([t.p_station for t in traces]),
    )


def load_traces(path: str | Path) -> list[EVTrace]:
    with np.load(path) as z:
        start = datetime.fromisoformat(str(z["start"]))
        return [
            EVTrace(start, z["soe"][i], z["plugged"][i], z["available"][i], z["p_charge"][i],
                    z["p_discharge"][i], float(z["p_car"][i]), float(z["p_station"][i]))
            for i in range(len(z["p_car"]))
        ]


def config_digest(payload: bytes) -> str:
    return hashlib.sha256(payload).hexdigest()[:16]
