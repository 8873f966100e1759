from datetime import datetime

import pytest

from fcrpool.ingest import electrify_vehicle
from fcrpool.pool import capability_profile
from fcrpool.profiles import synthetic_profile
from fcrpool.sim import SimConfig, simulate_fleet, synthetic_fleet

FLEET_START = datetime(2020, 7, 6)  # a Monday


@pytest.fixture(scope="session")
def two_shift_run():
    """1,000 medium-class EVs on the two-shift template, 4 weeks, 11 kW."""
    config = SimConfig.for_weeks(FLEET_START, 4, seed=1)
    spec = electrify_vehicle("medium", sector="human health")
    fleet = synthetic_fleet(synthetic_profile("two_shift"), spec, 1000, 11.0, config)
    traces = simulate_fleet(fleet, config)
    return fleet, traces, capability_profile(traces)
