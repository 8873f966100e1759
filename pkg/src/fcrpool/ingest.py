"""Trip-log ingestion, vehicle filtering, electrification of combustion vehicles and sector clusters."""

from __future__ import annotations

import csv
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterator, Mapping

import numpy as np

log = logging.getLogger(__name__)

# Battery kWh and real consumption kWh/100 km ("Assumed" rows of the ADAC-based class table).
VEHICLE_CLASSES: dict[str, tuple[float, float]] = {
    "small": (19.1, 18.9),
    "medium": (31.4, 20.1),
    "large": (80.7, 27.0),
    "transporter": (27.9, 25.2),
}

CONSUMPTION_FLOOR = 5.0  # kWh/100 km
COMPANY_RADIUS_KM = 0.1
CHARGE_FOLLOW_WINDOW = timedelta(minutes=15)
MIN_LOGGING_SPAN = timedelta(days=7)

DEFAULT_COLUMNS: dict[str, str] = {
    "vehicle_id": "vehicle_id",
    "start": "start",
    "end": "end",
    "distance": "distance_km",
    "end_at_company": "end_at_company",
}
_MANDATORY = ("vehicle_id", "start", "end", "distance")
_COMPANY_SOURCES = ("end_at_company", "distance_to_company", "next_charge_start")
_KNOWN_FIELDS = set(_MANDATORY) | set(_COMPANY_SOURCES) | {"consumption"}


class IngestError(ValueError):
    """Raised when an input file cannot be used at all."""


@dataclass(frozen=True)
class TripRecord:
    vehicle_id: str
    start: datetime
    end: datetime
    distance: float  # km
    consumption: float | None  # kWh
    end_at_company: bool

    def __post_init__(self) -> None:
        if self.end <= self.start:
            raise ValueError(f"trip end {self.end} is not after start {self.start}")
        if self.distance < 0:
            raise ValueError(f"negative distance {self.distance}")
        if self.consumption is not None and self.consumption < 0:
            raise ValueError(f"negative consumption {self.consumption}")

    @property
    def duration(self) -> timedelta:
        return self.end - self.start


@dataclass(frozen=True)
class RejectedRow:
    line: int
    reason: str


@dataclass(frozen=True)
class TripLog:
    records: tuple[TripRecord, ...] = ()
    rejected: tuple[RejectedRow, ...] = ()

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TripRecord]:
        return iter(self.records)

    @property
    def error_count(self) -> int:
        return len(self.rejected)

    def vehicle_ids(self) -> list[str]:
        return sorted({r.vehicle_id for r in self.records})

    def for_vehicle(self, vehicle_id: str) -> tuple[TripRecord, ...]:
        return tuple(r for r in self.records if r.vehicle_id == vehicle_id)

    @classmethod
    def from_records(cls, records, rejected=()) -> TripLog:
        ordered = sorted(records, key=lambda r: (r.vehicle_id, r.start))
        return cls(tuple(ordered), tuple(rejected))


@dataclass(frozen=True)
class VehicleSpec:
    battery_energy: float  # kWh
    mean_consumption: float  # kWh/100 km
    max_charge_power: float = 11.0  # kW, AC
    consumption_stddev: float = 1.0  # kWh/100 km
    vehicle_class: str = "small"
    sector: str = ""
    electrified: bool = False  # combustion vehicle converted with class assumptions

    def __post_init__(self) -> None:
        if self.battery_energy <= 0:
            raise ValueError("battery_energy must be positive")
        if self.max_charge_power <= 0:
            raise ValueError("max_charge_power must be positive")
        if self.mean_consumption <= 0:
            raise ValueError("mean_consumption must be positive")
        if self.consumption_stddev < 0:
            raise ValueError("consumption_stddev must be non-negative")


def _parse_bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "true", "yes", "y", "t"):
        return True
    if value in ("0", "false", "no", "n", "f"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_time(text: str) -> datetime:
    return datetime.fromisoformat(text.strip()).replace(second=0, microsecond=0)


def parse_trip_log(path: str | Path, columns: Mapping[str, str] | None = None) -> TripLog:
    """Read a trip CSV into a :class:`TripLog`.

    ``columns`` maps logical field names to CSV header names. ``vehicle_id``,
    ``start``, ``end`` and ``distance`` are mandatory, ``consumption`` is optional,
    and the company flag comes from exactly one of ``end_at_company`` (boolean),
    ``distance_to_company`` (km, at company within 0.1 km) or ``next_charge_start``
    (timestamp, at company if charging begins within 15 minutes of the trip end).

    Rows that fail validation are skipped and reported in ``TripLog.rejected``
    with their 1-based file line number.
    """
    mapping = dict(DEFAULT_COLUMNS if columns is None else columns)
    unknown = set(mapping) - _KNOWN_FIELDS
    if unknown:
        raise IngestError(f"unknown column mapping keys: {sorted(unknown)}")
    sources = [k for k in _COMPANY_SOURCES if k in mapping]
    if len(sources) != 1:
        raise IngestError(
            f"column mapping needs exactly one of {list(_COMPANY_SOURCES)}, got {sources}"
        )
    company_source = sources[0]

    path = Path(path)
    try:
        handle = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read trip log {path}: {exc}") from exc

    records: list[TripRecord] = []
    rejected: list[RejectedRow] = []
    with handle:
        reader = csv.DictReader(handle)
        header = reader.fieldnames or []
        missing = [mapping[k] for k in (*_MANDATORY, company_source) if mapping[k] not in header]
        if "consumption" in mapping and mapping["consumption"] not in header:
            missing.append(mapping["consumption"])
        if missing:
            raise IngestError(f"{path}: missing column(s) {missing}")

        for row in reader:
            line = reader.line_num
            try:
                records.append(_record_from_row(row, mapping, company_source))
            except (ValueError, TypeError) as exc:
                rejected.append(RejectedRow(line, str(exc)))
    if rejected:
        log.warning("%s: rejected %d row(s)", path, len(rejected))
    return TripLog.from_records(records, rejected)


def _record_from_row(row: dict, mapping: Mapping[str, str], company_source: str) -> TripRecord:
    start = _parse_time(row[mapping["start"]])
    end = _parse_time(row[mapping["end"]])
    distance = float(row[mapping["distance"]])
    consumption = None
    if "consumption" in mapping:
        raw = (row[mapping["consumption"]] or "").strip()
        consumption = float(raw) if raw else None

    raw_flag = (row[mapping[company_source]] or "").strip()
    if company_source == "end_at_company":
        at_company = _parse_bool(raw_flag)
    elif company_source == "distance_to_company":
        at_company = float(raw_flag) <= COMPANY_RADIUS_KM
    else:
        at_company = bool(raw_flag) and (
            timedelta(0) <= _parse_time(raw_flag) - end <= CHARGE_FOLLOW_WINDOW
        )
    vehicle_id = row[mapping["vehicle_id"]].strip()
    if not vehicle_id:
        raise ValueError("empty vehicle id")
    return TripRecord(vehicle_id, start, end, distance, consumption, at_company)


def write_trip_log(log_: TripLog, path: str | Path) -> None:
    """Write ``log_`` in the default column layout (readable by :func:`parse_trip_log`)."""
    columns = dict(DEFAULT_COLUMNS, consumption="consumption_kwh")
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            [columns[k] for k in ("vehicle_id", "start", "end", "distance", "consumption", "end_at_company")]
        )
        for r in log_.records:
            writer.writerow(
                [
                    r.vehicle_id,
                    r.start.isoformat(timespec="minutes"),
                    r.end.isoformat(timespec="minutes"),
                    repr(r.distance),
                    "" if r.consumption is None else repr(r.consumption),
                    int(r.end_at_company),
                ]
            )


def serialized_columns() -> dict[str, str]:
    """Column mapping matching the layout written by :func:`write_trip_log`."""
    return dict(DEFAULT_COLUMNS, consumption="consumption_kwh")


def filter_vehicles(log_: TripLog, min_trips: int = 1, min_span: timedelta = MIN_LOGGING_SPAN) -> TripLog:
    """Keep vehicles with at least ``min_trips`` trips logged over at least ``min_span``."""
    by_vehicle: dict[str, list[TripRecord]] = defaultdict(list)
    for r in log_.records:
        by_vehicle[r.vehicle_id].append(r)
    keep = set()
    for vid, trips in by_vehicle.items():
        span = max(t.end for t in trips) - min(t.start for t in trips)
        if len(trips) >= min_trips and span >= min_span:
            keep.add(vid)
    return TripLog(tuple(r for r in log_.records if r.vehicle_id in keep), log_.rejected)


def electrify_vehicle(
    vehicle_class: str,
    *,
    sector: str = "",
    max_charge_power: float = 11.0,
    consumption_stddev: float = 1.0,
) -> VehicleSpec:
    """EV parameters assumed for a combustion vehicle of the given size class."""
    try:
        battery, consumption = VEHICLE_CLASSES[vehicle_class]
    except KeyError:
        raise ValueError(
            f"unknown vehicle class {vehicle_class!r}; expected one of {sorted(VEHICLE_CLASSES)}"
        ) from None
    return VehicleSpec(
        battery_energy=battery,
        mean_consumption=consumption,
        max_charge_power=max_charge_power,
        consumption_stddev=consumption_stddev,
        vehicle_class=vehicle_class,
        sector=sector,
        electrified=True,
    )


def draw_consumption(spec: VehicleSpec, rng: np.random.Generator, size: int | None = None):
    """Per-trip consumption in kWh/100 km, normal around the class mean, truncated at 5 kWh/100 km."""
    if spec.consumption_stddev == 0:
        return spec.mean_consumption if size is None else np.full(size, spec.mean_consumption)
    n = 1 if size is None else size
    out = np.empty(n)
    filled = 0
    while filled < n:
        draws = rng.normal(spec.mean_consumption, spec.consumption_stddev, n - filled)
        draws = draws[draws >= CONSUMPTION_FLOOR]
        out[filled : filled + draws.size] = draws
        filled += draws.size
    return float(out[0]) if size is None else out


# Sector clusters -----------------------------------------------------------

ClusterTable = dict  # vehicle_id -> NACE sector label


def load_cluster_table(path: str | Path) -> ClusterTable:
    """Read ``vehicle_id,sector`` rows; a vehicle listed under two sectors is an error."""
    path = Path(path)
    try:
        fh = path.open(newline="", encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read cluster table {path}: {exc}") from exc
    table: ClusterTable = {}
    with fh:
        reader = csv.DictReader(fh)
        if not reader.fieldnames or not {"vehicle_id", "sector"} <= set(reader.fieldnames):
            raise IngestError(f"{path}: expected columns vehicle_id,sector")
        for row in reader:
            vid, sector = row["vehicle_id"].strip(), row["sector"].strip()
            if table.get(vid, sector) != sector:
                raise IngestError(f"{path}:{reader.line_num}: vehicle {vid} has two sectors")
            table[vid] = sector
    return table


def check_clusters(log_: TripLog, table: ClusterTable) -> None:
    missing = [v for v in log_.vehicle_ids() if v not in table]
    if missing:
        raise IngestError(f"vehicles without sector: {missing[:10]}{'...' if len(missing) > 10 else ''}")


def cluster_counts(log_: TripLog, table: ClusterTable) -> dict[str, int]:
    counts = Counter(table[v] for v in log_.vehicle_ids() if v in table)
    return dict(sorted(counts.items(), key=lambda kv: (-kv[1], kv[0])))


@dataclass
class VehicleClassTable:
    """Optional per-vehicle size classes for combustion logbook data."""

    classes: dict[str, str] = field(default_factory=dict)

    @classmethod
    def load(cls, path: str | Path) -> VehicleClassTable:
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            return cls({row["vehicle_id"].strip(): row["vehicle_class"].strip() for row in reader})
