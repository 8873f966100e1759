"""Simulate commercial EV pools and evaluate FCR bids and revenue under different market designs."""

from fcrpool.battery import (
    BatteryPartition,
    ChargingCurve,
    EVState,
    available_power,
    build_partition,
    charge_step,
    marketable_energy,
    mobility_energy,
)
from fcrpool.ingest import (
    TripLog,
    TripRecord,
    VehicleSpec,
    electrify_vehicle,
    filter_vehicles,
    parse_trip_log,
)
from fcrpool.market import (
    MarketDesign,
    PriceSeries,
    RevenueReport,
    biddable_power,
    compare_designs,
    load_prices,
    normalize_weekly,
    revenue,
)
from fcrpool.pool import (
    PeriodMinSeries,
    PowerCapabilityProfile,
    capability_profile,
    distribution_bands,
    period_minima,
)
from fcrpool.profiles import MobilityProfile, TripDraw, fit_profile, sample_trip, synthetic_profile
from fcrpool.sim import EVTrace, FleetMember, SimConfig, simulate_ev, simulate_fleet

__version__ = "0.1.0"

__all__ = [
    "BatteryPartition",
    "ChargingCurve",
    "EVState",
    "EVTrace",
    "FleetMember",
    "MarketDesign",
    "MobilityProfile",
    "PeriodMinSeries",
    "PowerCapabilityProfile",
    "PriceSeries",
    "RevenueReport",
    "SimConfig",
    "TripDraw",
    "TripLog",
    "TripRecord",
    "VehicleSpec",
    "available_power",
    "biddable_power",
    "build_partition",
    "capability_profile",
    "charge_step",
    "compare_designs",
    "distribution_bands",
    "electrify_vehicle",
    "filter_vehicles",
    "fit_profile",
    "load_prices",
    "marketable_energy",
    "mobility_energy",
    "normalize_weekly",
    "parse_trip_log",
    "period_minima",
    "revenue",
    "sample_trip",
    "simulate_ev",
    "simulate_fleet",
    "synthetic_profile",
]
