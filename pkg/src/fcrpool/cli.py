"""Command-line pipeline: ingest, fit, simulate, capability, revenue, compare.

Every subcommand reads one JSON run configuration. Relative paths inside it are
resolved against the configuration file's directory. Schema (defaults shown)::

    {
      "seed": 20200701,
      "horizon": {"start": "2020-07-06T00:00", "weeks": 4},   # or "end"
      "warmup_weeks": 1,
      "dt_supply_h": 0.25,
      "ceiling": "battery",                     # or "charge_limit"
      "fleet": {
        "synthetic": {"template": "two_shift", "size": 1000, "overrides": {}},
        # or
        "logs": {"trips": "trips.csv", "columns": {...}, "clusters": "clusters.csv",
                 "vehicle_classes": "classes.csv", "sector": null, "size": null,
                 "min_trips": 1, "min_span_days": 7},
        "vehicle": {"class": "small"},          # or battery_energy_kwh + consumption_kwh_per_100km
        "max_charge_power_kw": 11.0,
        "station_power_kw": 11.0
      },
      "battery": {"quantile": 0.95, "lookahead_slots": 4, "margin": 0.10,
                  "history_weeks": 26, "charging_curve": null},
      "market": {"designs": [{"name": "4h", "service_period": "4h", "prices": "prices_4h.csv"}],
                 "opex_per_ev_year": null},
      "trace_vehicles": null,                   # export only the first N vehicles to traces.csv
      "workers": 1,
      "output_dir": "out"
    }

The output directory can be overridden with ``--out`` or the ``FCRPOOL_OUTPUT_DIR``
environment variable.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Sequence

import numpy as np

from fcrpool.battery import ChargingCurve, build_partition
from fcrpool.ingest import (
    IngestError,
    TripLog,
    VehicleClassTable,
    VehicleSpec,
    check_clusters,
    cluster_counts,
    electrify_vehicle,
    filter_vehicles,
    load_cluster_table,
    parse_trip_log,
)
from fcrpool.market import (
    DesignComparison,
    MarketDesign,
    PriceSeries,
    RevenueReport,
    compare_designs,
    load_prices,
    write_prices,
)
from fcrpool.pool import (
    PowerCapabilityProfile,
    capability_profile,
    distribution_bands,
    period_minima,
    write_bands_csv,
    write_capability_csv,
    write_minima_csv,
)
from fcrpool.profiles import MobilityProfile, fit_profile, synthetic_profile, template_params
from fcrpool.sim import (
    DEFAULT_SEED,
    EVTrace,
    FleetMember,
    SimConfig,
    load_traces,
    save_traces,
    simulate_fleet,
    synthetic_fleet,
    write_traces_csv,
)

log = logging.getLogger("fcrpool")

OUTPUT_ENV = "FCRPOOL_OUTPUT_DIR"
MANIFEST = "manifest.json"


class ConfigError(ValueError):
    """Invalid run configuration; raised before any simulation starts."""


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        super().__init__(f"{stage}: {exc}")
        self.stage = stage


# Configuration ------------------------------------------------------------------


@dataclass(frozen=True)
class DesignConfig:
    design: MarketDesign
    prices: Path


@dataclass
class RunConfig:
    base_dir: Path
    seed: int
    start: datetime
    end: datetime
    warmup_weeks: int
    dt_supply_h: float
    ceiling: str
    fleet: dict
    battery: dict
    designs: list[DesignConfig]
    opex_per_ev_year: float | None
    trace_vehicles: int | None
    workers: int
    output_dir: Path
    raw: dict = field(repr=False, default_factory=dict)

    @property
    def sim_config(self) -> SimConfig:
        return SimConfig(self.start, self.end, self.seed, self.warmup_weeks, self.dt_supply_h, self.ceiling)

    @property
    def synthetic(self) -> dict | None:
        return self.fleet.get("synthetic")

    @property
    def logs(self) -> dict | None:
        return self.fleet.get("logs")

    def path(self, value: str | os.PathLike) -> Path:
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def digest(self) -> str:
        """Hash of everything that determines the results (not workers or output location)."""
        doc = {k: v for k, v in self.raw.items() if k not in ("workers", "output_dir")}
        doc["seed"] = self.seed
        for key, p in self._input_files():
            doc.setdefault("_inputs", {})[key] = _sha256(p)
        payload = json.dumps(doc, sort_keys=True, default=str).encode()
        return hashlib.sha256(payload).hexdigest()

    def _input_files(self) -> list[tuple[str, Path]]:
        files = []
        logs = self.logs or {}
        for key in ("trips", "clusters", "vehicle_classes"):
            if logs.get(key):
                files.append((f"logs.{key}", self.path(logs[key])))
        if self.battery.get("charging_curve"):
            files.append(("battery.charging_curve", self.path(self.battery["charging_curve"])))
        files.extend((f"prices.{d.design.name}", d.prices) for d in self.designs)
        return files


_TOP_KEYS = {
    "seed", "horizon", "warmup_weeks", "dt_supply_h", "ceiling", "fleet", "battery", "market",
    "trace_vehicles", "workers", "output_dir",
}
_BATTERY_DEFAULTS = {"quantile": 0.95, "lookahead_slots": 4, "margin": 0.10, "history_weeks": 26, "charging_curve": None}


def _parse_time(text: str, what: str) -> datetime:
    try:
        return datetime.fromisoformat(str(text))
    except ValueError:
        raise ConfigError(f"{what}: not an ISO-8601 timestamp: {text!r}") from None


def load_config(
    path: str | Path,
    seed: int | None = None,
    output_dir: str | Path | None = None,
    workers: int | None = None,
) -> RunConfig:
    """Read and validate a run configuration; command-line overrides win over the file."""
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"configuration file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be an object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    base = path.resolve().parent

    horizon = raw.get("horizon") or {}
    if "start" not in horizon:
        raise ConfigError("horizon.start is required")
    start = _parse_time(horizon["start"], "horizon.start")
    if "end" in horizon:
        end = _parse_time(horizon["end"], "horizon.end")
    elif "weeks" in horizon:
        end = start + timedelta(weeks=int(horizon["weeks"]))
    else:
        raise ConfigError("horizon needs either end or weeks")

    seed_value = seed if seed is not None else raw.get("seed", DEFAULT_SEED)
    # command line and environment paths are relative to the working directory
    if output_dir or os.environ.get(OUTPUT_ENV):
        out = Path(output_dir or os.environ[OUTPUT_ENV])
    else:
        out = base / raw.get("output_dir", "out")
    cfg = RunConfig(
        base_dir=base,
        seed=int(seed_value),
        start=start,
        end=end,
        warmup_weeks=int(raw.get("warmup_weeks", 1)),
        dt_supply_h=float(raw.get("dt_supply_h", 0.25)),
        ceiling=str(raw.get("ceiling", "battery")),
        fleet=dict(raw.get("fleet") or {}),
        battery={**_BATTERY_DEFAULTS, **(raw.get("battery") or {})},
        designs=[],
        opex_per_ev_year=(raw.get("market") or {}).get("opex_per_ev_year"),
        trace_vehicles=raw.get("trace_vehicles"),
        workers=int(workers if workers is not None else raw.get("workers", 1)),
        output_dir=out,
        raw=raw,
    )
    try:
        cfg.sim_config  # validates horizon alignment and seed
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if cfg.ceiling not in ("battery", "charge_limit"):
        raise ConfigError(f"ceiling must be 'battery' or 'charge_limit', got {cfg.ceiling!r}")
    if cfg.workers < 1:
        raise ConfigError("workers must be at least 1")
    _validate_fleet(cfg)
    _validate_market(cfg, raw.get("market") or {})
    if cfg.battery.get("charging_curve"):
        _require_file(cfg.path(cfg.battery["charging_curve"]), "battery.charging_curve")
    return cfg


def _require_file(p: Path, what: str) -> None:
    if not p.is_file():
        raise ConfigError(f"{what}: file not found: {p}")


def _validate_fleet(cfg: RunConfig) -> None:
    syn, logs = cfg.synthetic, cfg.logs
    if bool(syn) == bool(logs):
        raise ConfigError("fleet needs exactly one of 'synthetic' or 'logs'")
    if syn:
        try:
            template_params(syn.get("template", "two_shift"), **(syn.get("overrides") or {}))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"fleet.synthetic: {exc}") from None
        if int(syn.get("size", 1)) < 1:
            raise ConfigError("fleet size must be at least 1")
    else:
        if "trips" not in logs:
            raise ConfigError("fleet.logs.trips is required")
        for key in ("trips", "clusters", "vehicle_classes"):
            if logs.get(key):
                _require_file(cfg.path(logs[key]), f"fleet.logs.{key}")
        if logs.get("size") is not None and int(logs["size"]) < 1:
            raise ConfigError("fleet size must be at least 1")
    for key in ("max_charge_power_kw", "station_power_kw"):
        if float(cfg.fleet.get(key, 11.0)) <= 0:
            raise ConfigError(f"fleet.{key} must be positive")
    try:
        _vehicle_spec(cfg.fleet.get("vehicle") or {}, cfg.fleet, "", None)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"fleet.vehicle: {exc}") from None


def _validate_market(cfg: RunConfig, market: dict) -> None:
    designs = market.get("designs") or []
    if not designs:
        raise ConfigError("market.designs must list at least one design")
    names = set()
    horizon = PowerCapabilityProfile(cfg.start, np.zeros(cfg.sim_config.n_slots), 1.0, 1.0, 1)
    for doc in designs:
        doc = dict(doc)
        prices = doc.pop("prices", None)
        try:
            design = MarketDesign(**doc)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"market design {doc.get('name', '?')}: {exc}") from None
        if design.name in names:
            raise ConfigError(f"duplicate design name {design.name!r}")
        names.add(design.name)
        if not prices:
            raise ConfigError(f"design {design.name!r} ({design.service_period}) has no price file")
        price_path = cfg.path(prices)
        _require_file(price_path, f"prices of design {design.name!r}")
        try:
            series = load_prices(price_path, design.service_period)
            windows = period_minima(horizon, design.service_period).window_starts
        except ValueError as exc:
            raise ConfigError(f"design {design.name!r}: {exc}") from None
        table = series.lookup()
        missing = [w for w in windows if w not in table]
        if missing:
            raise ConfigError(
                f"design {design.name!r}: {price_path} has no price for {len(missing)} window(s), first {missing[0]}"
            )
        cfg.designs.append(DesignConfig(design, price_path))


def _vehicle_spec(vehicle: dict, fleet: dict, sector: str, vehicle_class: str | None) -> VehicleSpec:
    p_car = float(fleet.get("max_charge_power_kw", 11.0))
    std = float(vehicle.get("consumption_stddev", 1.0))
    if "battery_energy_kwh" in vehicle:
        return VehicleSpec(
            battery_energy=float(vehicle["battery_energy_kwh"]),
            mean_consumption=float(vehicle["consumption_kwh_per_100km"]),
            max_charge_power=p_car,
            consumption_stddev=std,
            vehicle_class=vehicle_class or vehicle.get("class", "custom"),
            sector=sector,
        )
    return electrify_vehicle(
        vehicle_class or vehicle.get("class", "small"),
        sector=sector,
        max_charge_power=p_car,
        consumption_stddev=std,
    )


# Pipeline stages ----------------------------------------------------------------


class Pipeline:
    """Lazily computed stages sharing one configuration."""

    def __init__(self, cfg: RunConfig, out=sys.stdout):
        self.cfg = cfg
        self.out = out
        self.written: dict[str, Path] = {}
        self._log: TripLog | None = None
        self._clusters: dict | None = None
        self._profiles: dict[str, MobilityProfile] | None = None
        self._fleet: list[FleetMember] | None = None
        self._traces: list[EVTrace] | None = None
        self._capability: PowerCapabilityProfile | None = None
        self._comparison: DesignComparison | None = None

    def echo(self, text: str = "") -> None:
        print(text, file=self.out)

    def artifact(self, name: str) -> Path:
        self.cfg.output_dir.mkdir(parents=True, exist_ok=True)
        p = self.cfg.output_dir / name
        self.written[name] = p
        return p

    # ingest / fit

    def trip_log(self) -> TripLog:
        if self._log is None:
            logs = self.cfg.logs
            trips = parse_trip_log(self.cfg.path(logs["trips"]), logs.get("columns"))
            trips = filter_vehicles(
                trips, int(logs.get("min_trips", 1)), timedelta(days=float(logs.get("min_span_days", 7)))
            )
            if logs.get("clusters"):
                self._clusters = load_cluster_table(self.cfg.path(logs["clusters"]))
                check_clusters(trips, self._clusters)
                if logs.get("sector"):
                    keep = {v for v in trips.vehicle_ids() if self._clusters[v] == logs["sector"]}
                    trips = TripLog(tuple(r for r in trips.records if r.vehicle_id in keep), trips.rejected)
            if not len(trips):
                raise IngestError("no vehicles left after filtering")
            self._log = trips
        return self._log

    def ingest(self) -> None:
        if self.cfg.synthetic:
            syn = self.cfg.synthetic
            params = template_params(syn.get("template", "two_shift"), **(syn.get("overrides") or {}))
            self.echo(f"synthetic fleet: template {syn.get('template', 'two_shift')}, {syn.get('size', 1)} vehicles")
            for s in params.shifts:
                self.echo(
                    f"  shift {s.start} p={s.prob:g} duration {s.duration_min:g} min distance {s.distance_km:g} km"
                )
            self.echo(f"  plug-in probability at return {params.plug_prob_at_return:g}")
            return
        trips = self.trip_log()
        self.echo(f"trips: {len(trips)} accepted, {trips.error_count} rejected, {len(trips.vehicle_ids())} vehicles")
        for row in trips.rejected[:20]:
            self.echo(f"  rejected line {row.line}: {row.reason}")
        if self._clusters is not None:
            self.echo(f"{'sector':<40} vehicles")
            for sector, n in cluster_counts(trips, self._clusters).items():
                self.echo(f"{sector:<40} {n}")

    def _spec_for(self, vehicle_id: str) -> VehicleSpec:
        logs = self.cfg.logs or {}
        sector = (self._clusters or {}).get(vehicle_id, "")
        vclass = None
        if logs.get("vehicle_classes"):
            if not hasattr(self, "_classes"):
                self._classes = VehicleClassTable.load(self.cfg.path(logs["vehicle_classes"]))
            vclass = self._classes.classes.get(vehicle_id)
        return _vehicle_spec(self.cfg.fleet.get("vehicle") or {}, self.cfg.fleet, sector, vclass)

    def profiles(self) -> dict[str, MobilityProfile]:
        if self._profiles is None:
            if self.cfg.synthetic:
                syn = self.cfg.synthetic
                template = syn.get("template", "two_shift")
                params = template_params(template, **(syn.get("overrides") or {}))
                self._profiles = {template: synthetic_profile(template, params)}
            else:
                trips = self.trip_log()
                self._profiles = {v: fit_profile(trips, v, self._spec_for(v)) for v in trips.vehicle_ids()}
        return self._profiles

    def fit(self) -> None:
        for name, profile in self.profiles().items():
            profile.save(self._profile_path(name))
            self.echo(f"profile {name}: {profile.mean_trips_per_day():.2f} trips/day")

    def _profile_path(self, name: str) -> Path:
        d = self.cfg.output_dir / "profiles"
        d.mkdir(parents=True, exist_ok=True)
        p = d / f"{_safe(name)}.json"
        self.written[f"profiles/{p.name}"] = p
        return p

    # simulate

    def curve(self, spec: VehicleSpec) -> ChargingCurve:
        p_station = float(self.cfg.fleet.get("station_power_kw", 11.0))
        cp = min(spec.max_charge_power, p_station)
        if self.cfg.battery.get("charging_curve"):
            return ChargingCurve.from_json(self.cfg.path(self.cfg.battery["charging_curve"])).with_power(cp)
        return ChargingCurve(cp_power_ac=cp)

    def fleet(self) -> list[FleetMember]:
        if self._fleet is None:
            cfg, bat = self.cfg, self.cfg.battery
            p_station = float(cfg.fleet.get("station_power_kw", 11.0))
            if cfg.synthetic:
                (profile,) = self.profiles().values()
                spec = self._spec_for("")
                self._fleet = synthetic_fleet(
                    profile, spec, int(cfg.synthetic.get("size", 1)), p_station, cfg.sim_config,
                    history_weeks=int(bat["history_weeks"]), curve=self.curve(spec),
                    quantile=float(bat["quantile"]), lookahead_slots=int(bat["lookahead_slots"]),
                    margin=float(bat["margin"]),
                )
            else:
                trips = self.trip_log()
                base = []
                for vid, profile in self.profiles().items():
                    spec = self._spec_for(vid)
                    curve = self.curve(spec)
                    partition = build_partition(
                        trips, spec, curve, float(bat["quantile"]), int(bat["lookahead_slots"]),
                        float(bat["margin"]), vehicle_id=vid,
                    )
                    base.append(FleetMember(spec, profile, partition, p_station, curve, vid))
                size = cfg.logs.get("size") or len(base)
                # larger fleets cycle through the observed vehicles, each copy on its own stream
                self._fleet = [
                    m if i < len(base) else FleetMember(m.spec, m.profile, m.partition, m.p_station, m.curve,
                                                        f"{m.vehicle_id}#{i // len(base)}")
                    for i in range(int(size))
                    for m in (base[i % len(base)],)
                ]
        return self._fleet

    def traces(self) -> list[EVTrace]:
        if self._traces is None:
            cache = self.cfg.output_dir / "cache" / f"traces_{self.cfg.digest()[:16]}.npz"
            if cache.is_file():
                log.info("using cached traces %s", cache)
                self._traces = load_traces(cache)
            else:
                fleet = self.fleet()
                self._traces = simulate_fleet(fleet, self.cfg.sim_config, workers=self.cfg.workers)
                cache.parent.mkdir(parents=True, exist_ok=True)
                save_traces(self._traces, cache)
        return self._traces

    def simulate(self) -> None:
        traces = self.traces()
        n = self.cfg.trace_vehicles
        subset = traces if n is None else traces[: int(n)]
        ids = [m.vehicle_id for m in self.fleet()][: len(subset)]
        write_traces_csv(subset, self.artifact("traces.csv"), ids)
        self.echo(f"simulated {len(traces)} vehicles x {len(traces[0])} slots")

    # capability / revenue / compare

    def capability(self) -> PowerCapabilityProfile:
        if self._capability is None:
            self._capability = capability_profile(self.traces())
        return self._capability

    def write_capability(self) -> None:
        prof = self.capability()
        write_capability_csv(prof, self.artifact("capability.csv"))
        write_bands_csv(distribution_bands(prof), self.artifact("bands.csv"))
        for period in sorted({d.design.service_period for d in self.cfg.designs}):
            write_minima_csv(period_minima(prof, period), self.artifact(f"minima_{period}.csv"))
        rel = prof.relative()
        self.echo(f"pool capability: mean {rel.mean():.1%} of rated {prof.rated_power / 1000:.3f} MW, min {rel.min():.1%}")

    def reports(self) -> list[RevenueReport]:
        return list(self.comparison().reports)

    def comparison(self) -> DesignComparison:
        if self._comparison is None:
            priced = [(d.design, load_prices(d.prices, d.design.service_period)) for d in self.cfg.designs]
            self._comparison = compare_designs(self.capability(), priced, opex_per_ev_year=self.cfg.opex_per_ev_year)
        return self._comparison

    def write_revenue(self) -> None:
        for r in self.reports():
            name = _safe(r.design.name)
            r.write_csv(self.artifact(f"revenue_{name}.csv"))
            r.write_json(self.artifact(f"revenue_{name}.json"))
            self.echo(
                f"{r.design.name:>10}: {r.weekly:12.2f} EUR/week ({r.per_ev_weekly:.2f} per EV),"
                f" mean bid {r.p_bid.mean():.2f} MW"
            )

    def write_compare(self) -> None:
        self.comparison().write_csv(self.artifact("compare.csv"))

    def plots(self) -> None:
        from fcrpool import plots

        plots.bands_svg(distribution_bands(self.capability()), self.capability().rated_power, self.artifact("bands.svg"))
        plots.compare_svg(self.comparison(), self.artifact("compare.svg"))

    def manifest(self) -> Path:
        doc = {
            "seed": self.cfg.seed,
            "config_hash": self.cfg.digest(),
            "artifacts": {name: _sha256(p) for name, p in sorted(self.written.items())},
        }
        p = self.cfg.output_dir / MANIFEST
        p.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return p


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _stage(name: str, fn) -> None:
    try:
        fn()
    except (ConfigError, StageError):
        raise
    except (ValueError, OSError, KeyError) as exc:
        raise StageError(name, exc) from exc


def run_all(pipe: Pipeline, plots: bool = False) -> Path:
    _stage("simulate", pipe.simulate)
    _stage("capability", pipe.write_capability)
    _stage("revenue", pipe.write_revenue)
    _stage("compare", pipe.write_compare)
    if plots:
        _stage("plots", pipe.plots)
    return pipe.manifest()


# Demo fixtures ------------------------------------------------------------------

DEMO_START = datetime(2020, 7, 6)
DEMO_WEEKS = 4
DEMO_PRICES = {"4h": 30.0, "1d": 1280.0 / 7.0, "1w": 1880.0}


def write_demo(directory: str | Path, size: int = 1000, weeks: int = DEMO_WEEKS) -> Path:
    """Two-shift demo configuration plus constant price fixtures; returns the config path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    designs = []
    for period, price in DEMO_PRICES.items():
        n = {"4h": 6 * 7, "1d": 7, "1w": 1}[period] * weeks
        fname = f"prices_{period}.csv"
        write_prices(PriceSeries.constant(period, DEMO_START, n, price), directory / fname)
        designs.append({"name": {"4h": "4h", "1d": "daily", "1w": "weekly"}[period],
                        "service_period": period, "prices": fname})
    doc = {
        "seed": DEFAULT_SEED,
        "horizon": {"start": DEMO_START.isoformat(timespec="minutes"), "weeks": weeks},
        "fleet": {
            "synthetic": {"template": "two_shift", "size": size},
            "vehicle": {"class": "medium"},
            "max_charge_power_kw": 11.0,
            "station_power_kw": 11.0,
        },
        "market": {"designs": designs[::-1]},
        "trace_vehicles": 20,
        "workers": 1,
        "output_dir": "out",
    }
    path = directory / "demo.json"
    path.write_text(json.dumps(doc, indent=2) + "\n", encoding="utf-8")
    return path


# Entry point --------------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fcrpool", description="EV pool FCR capability and revenue pipeline")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="run configuration (JSON)")
        sp.add_argument("--seed", type=int, help=f"override the configured seed (default {DEFAULT_SEED})")
        sp.add_argument("--out", help=f"output directory (else ${OUTPUT_ENV}, else config)")
        sp.add_argument("--workers", type=int, help="worker processes for the fleet simulation")
        return sp

    common(sub.add_parser("ingest", help="parse trip logs and print sector counts"))
    common(sub.add_parser("fit", help="fit mobility profiles"))
    common(sub.add_parser("simulate", help="simulate the fleet and write traces.csv"))
    common(sub.add_parser("capability", help="write capability, bands and minima CSVs"))
    common(sub.add_parser("revenue", help="write per-design revenue reports"))
    common(sub.add_parser("compare", help="write the design comparison"))
    run = common(sub.add_parser("run", help="run every stage and write a manifest"))
    run.add_argument("--plots", action="store_true", help="also write SVG charts")
    demo = sub.add_parser("demo", help="write the two-shift demo config and run it")
    demo.add_argument("directory", nargs="?", default="fcrpool-demo")
    demo.add_argument("--size", type=int, default=1000)
    demo.add_argument("--weeks", type=int, default=DEMO_WEEKS)
    demo.add_argument("--seed", type=int)
    demo.add_argument("--out")
    demo.add_argument("--workers", type=int)
    demo.add_argument("--plots", action="store_true")
    return p


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.command == "demo":
            config_path = write_demo(args.directory, args.size, args.weeks)
            print(f"wrote {config_path}", file=out)
        else:
            config_path = args.config
        cfg = load_config(config_path, seed=args.seed, output_dir=args.out, workers=args.workers)
        pipe = Pipeline(cfg, out)
        cmd = args.command
        if cmd == "ingest":
            _stage("ingest", pipe.ingest)
        elif cmd == "fit":
            _stage("fit", pipe.fit)
        elif cmd == "simulate":
            _stage("simulate", pipe.simulate)
        elif cmd == "capability":
            _stage("capability", pipe.write_capability)
        elif cmd == "revenue":
            _stage("revenue", pipe.write_revenue)
        elif cmd == "compare":
            _stage("compare", pipe.write_compare)
        else:
            manifest = run_all(pipe, plots=args.plots)
            print(f"wrote {len(pipe.written)} artifacts and {manifest}", file=out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except StageError as exc:
        print(f"error in {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
