import json
import math
from datetime import datetime, timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fcrpool.battery import (
    AvailablePower,
    BatteryPartition,
    ChargingCurve,
    EVState,
    MarketEnergy,
    available_power,
    build_partition,
    capability_arrays,
    charge_step,
    marketable_energy,
    mobility_energy,
)
from fcrpool.ingest import TripLog, TripRecord, VehicleSpec

SPEC = VehicleSpec(battery_energy=24.0, mean_consumption=18.0, max_charge_power=11.0)
CURVE = ChargingCurve()
MONDAY = datetime(2020, 1, 6)


def _partition(trip_energy=None, soe_max=19.2, e_bat=24.0):
    te = np.zeros((7, 96)) if trip_energy is None else trip_energy
    return BatteryPartition(e_bat, te, soe_max, 0.9 * e_bat)


def _trip(start, kwh, minutes=60, company=True):
    return TripRecord("v", start, start + timedelta(minutes=minutes), kwh * 100 / 18.0, kwh, company)


# mobility energy


def test_mobility_energy_floor_sum_and_clip():
    te = np.zeros((7, 96))
    te[0, 24] = 5.0
    te[0, 25] = 30.0
    p = _partition(te)
    assert mobility_energy(p, 6, 12) == pytest.approx(7.2)
    assert mobility_energy(p, 0, 24) == pytest.approx(12.2)
    assert mobility_energy(p, 0, 25) == pytest.approx(19.2)


def test_partition_invariants_enforced():
    with pytest.raises(ValueError):
        BatteryPartition(24.0, np.zeros((7, 96)), 5.0, 21.6)  # below buffer
    with pytest.raises(ValueError):
        BatteryPartition(24.0, np.zeros((7, 96)), 22.0, 21.6)  # above CV limit
    with pytest.raises(ValueError):
        BatteryPartition(24.0, np.zeros((6, 96)), 19.0, 21.6)


# build_partition


def test_single_trip_reserved_over_previous_hour():
    p = build_partition([_trip(MONDAY.replace(hour=6, minute=30), 6.0)], SPEC, CURVE, quantile=1.0)
    te = p.trip_energy[0]
    assert te[23] == te[24] == te[25] == te[26] == pytest.approx(6.0)
    assert te[22] == 0 and te[27] == 0
    assert mobility_energy(p, 0, 3 * 4) == pytest.approx(7.2)  # night: buffer only


@pytest.mark.parametrize("share", [0.40, 0.45, 0.50])
def test_charge_limit_near_eighty_percent(share):
    trips = [_trip(MONDAY + timedelta(days=d, hours=7), share * 24.0, minutes=300) for d in range(28)]
    p = build_partition(trips, SPEC, CURVE)
    assert 0.75 * 24 <= p.soe_max <= 0.9 * 24 + 1e-12
    assert p.infeasible_trips == 0
    assert all(t.consumption <= p.soe_max for t in trips)


def test_infeasible_trip_reported_and_capped(caplog):
    trips = [_trip(MONDAY.replace(hour=7), 23.0), _trip(MONDAY + timedelta(days=1, hours=7), 4.0)]
    p = build_partition(trips, SPEC, CURVE, quantile=1.0)
    assert p.infeasible_trips == 1
    assert p.soe_max == pytest.approx(0.9 * 24)
    assert p.mobility_table.max() <= p.soe_max
    assert "CV limit" in caplog.text


def test_history_must_be_single_vehicle():
    a = _trip(MONDAY.replace(hour=7), 3.0)
    b = TripRecord("w", a.start, a.end, 10.0, 2.0, True)
    with pytest.raises(ValueError, match="vehicle_id"):
        build_partition([a, b], SPEC, CURVE)
    assert build_partition(TripLog.from_records([a, b]), SPEC, CURVE, vehicle_id="w").e_bat == 24.0


def _oracle_trip_energy(trips, q, lookahead):
    """Per weekday and slot: q-quantile ('higher') over days of energy departing in the lookahead window."""
    first = trips[0].start.date()
    last = max(t.end for t in trips).date()
    days = [first + timedelta(days=i) for i in range((last - first).days + 1)]
    out = np.zeros((7, 96))
    for wd in range(7):
        wd_days = [d for d in days if d.weekday() == wd]
        if not wd_days:
            continue
        for s in range(96):
            sums = []
            for d in wd_days:
                lo = datetime.combine(d, datetime.min.time()) + timedelta(minutes=15 * s)
                hi = lo + timedelta(minutes=15 * lookahead)
                sums.append(sum(t.consumption for t in trips if lo <= t.start.replace(minute=t.start.minute // 15 * 15) < hi))
            sums.sort()
            out[wd, s] = sums[math.ceil(q * (len(sums) - 1))]
    return out


@settings(max_examples=15, deadline=None)
@given(
    st.lists(
        st.tuples(st.integers(0, 20), st.integers(0, 95), st.integers(0, 14), st.floats(0.5, 6.0)),
        min_size=1,
        max_size=25,
    ),
    st.sampled_from([0.5, 0.8, 0.95, 1.0]),
    st.integers(1, 6),
)
def test_trip_energy_matches_oracle(raw, q, lookahead):
    trips = sorted(
        (_trip(MONDAY + timedelta(days=d, minutes=15 * s + m), e, minutes=20) for d, s, m, e in raw),
        key=lambda t: t.start,
    )
    p = build_partition(trips, SPEC, CURVE, quantile=q, lookahead_slots=lookahead)
    expected = np.minimum(_oracle_trip_energy(trips, q, lookahead), p.soe_max - p.spontaneous_buffer)
    np.testing.assert_allclose(p.trip_energy, expected, rtol=0, atol=1e-9)


# marketable energy and power


def test_marketable_energy_with_charge_limit():
    p = _partition()
    e = marketable_energy(EVState(20.0), p, 6, 12, ceiling="charge_limit")
    assert e.e_market == pytest.approx(16.8)
    assert e.e_discharge == pytest.approx(12.8)
    assert e.e_charge == 0.0

    e = marketable_energy(EVState(15.0), p, 6, 12, ceiling="charge_limit")
    assert e.e_charge == pytest.approx(4.2)
    assert e.e_discharge == pytest.approx(7.8)
    assert e.e_charge_raw == pytest.approx(9.0)
    assert e.e_charge_raw + e.e_discharge == pytest.approx(e.e_market)


def test_marketable_energy_default_uses_battery_ceiling():
    e = marketable_energy(EVState(15.0), _partition(), 6, 12)
    assert e.e_charge == pytest.approx(9.0)
    assert e.available


def test_soe_at_mobility_energy_is_unavailable():
    p = _partition()
    e = marketable_energy(EVState(mobility_energy(p, 6, 12)), p, 6, 12)
    assert (e.e_charge, e.e_discharge, e.e_market, e.available) == (0.0, 0.0, 0.0, False)


def test_cv_band_and_unplugged_unavailable():
    p = _partition()
    assert not marketable_energy(EVState(22.0), p, 0, 0).available
    assert not marketable_energy(EVState(15.0, plugged=False), p, 0, 0).available
    assert available_power(marketable_energy(EVState(15.0, plugged=False), p, 0, 0), 11, 11) == AvailablePower(0, 0)


def test_available_power_examples():
    def energies(c, d):
        return MarketEnergy(c, d, c + d, c, True)

    assert available_power(energies(10.0, 5.0), 22.0, 11.0).p_charge == 11.0
    assert available_power(energies(2.0, 5.0), 22.0, 11.0).p_charge == 8.0
    assert available_power(energies(2.0, 0.0), 22.0, 11.0).p_discharge == 0.0
    assert available_power(energies(2.0, 0.0), 22.0, 11.0).bidirectional == 0.0


@settings(max_examples=200, deadline=None)
@given(
    st.floats(0, 50), st.floats(0, 50), st.floats(0.1, 50), st.floats(0.1, 50), st.floats(0.1, 50)
)
def test_available_power_monotone(e, de, p_car, dp, p_station):
    base = available_power(MarketEnergy(e, e, 2 * e, e, True), p_car, p_station).p_charge
    assert available_power(MarketEnergy(e + de, e, 2 * e, e, True), p_car, p_station).p_charge >= base
    assert available_power(MarketEnergy(e, e, 2 * e, e, True), p_car + dp, p_station).p_charge >= base
    assert available_power(MarketEnergy(e, e, 2 * e, e, True), p_car, p_station + dp).p_charge >= base
    assert (base == 0) == (e == 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["battery", "charge_limit"]))
def test_vectorised_matches_scalar(seed, ceiling):
    rng = np.random.default_rng(seed)
    te = rng.uniform(0, 8, (7, 96))
    p = _partition(te)
    n = 200
    soe = rng.uniform(0, 24, n)
    plugged = rng.random(n) < 0.8
    slots = rng.integers(0, 7 * 96, n)
    e_mob = p.mobility_table.ravel()[slots]
    pc, pd, av = capability_arrays(soe, e_mob, plugged, p, 11.0, 7.4, 0.25, ceiling)
    for k in range(n):
        e = marketable_energy(EVState(soe[k], bool(plugged[k])), p, *divmod(int(slots[k]), 96), ceiling=ceiling)
        ap = available_power(e, 11.0, 7.4)
        assert (pc[k], pd[k], bool(av[k])) == (ap.p_charge, ap.p_discharge, e.available)


# charging


def test_cp_step():
    s = charge_step(EVState(5.0), SPEC, CURVE, target_soe=19.2)
    assert s.soe - 5.0 == pytest.approx(2.5575, abs=1e-12)
    assert s.grid_energy == pytest.approx(2.75)


def test_at_target_unchanged():
    s = EVState(19.2)
    assert charge_step(s, SPEC, CURVE, target_soe=19.2) is s


def test_cv_step_smaller():
    s = charge_step(EVState(0.95 * 24), SPEC, CURVE, target_soe=24.0)
    assert 0 < s.soe - 0.95 * 24 < 2.5575
    assert s.soe < 24.0


def test_unplugged_does_not_charge():
    s = EVState(5.0, plugged=False)
    assert charge_step(s, SPEC, CURVE, 19.2) is s


def test_cv_tail_matches_fine_integration():
    # brute-force Euler integration of the DC power curve
    soe, dt = 0.85 * 24, 0.25
    n = 200_000
    h = dt / n
    x = soe
    for _ in range(n):
        x += h * CURVE.dc_power(x / 24)
    assert CURVE.advance(soe, 24.0, dt) == pytest.approx(x, abs=1e-4)


def test_curve_continuity_and_decay():
    thr = CURVE.cv_threshold
    assert CURVE.dc_power(thr) == pytest.approx(CURVE.cp_power_dc)
    pts = [CURVE.dc_power(f) for f in np.linspace(thr, 1.0, 20)]
    assert all(b < a for a, b in zip(pts, pts[1:]))
    assert pts[-1] == 0.0


def test_curve_from_json(tmp_path):
    path = tmp_path / "curve.json"
    path.write_text(json.dumps({"efficiency": 0.9, "points": [[0, 7.4], [0.85, 7.4], [0.95, 2.0], [1.0, 0.0]]}))
    curve = ChargingCurve.from_json(path)
    assert (curve.cp_power_ac, curve.cv_threshold, curve.efficiency) == (7.4, 0.85, 0.9)
    assert curve.dc_power(0.95) == pytest.approx(1.8)
    s1 = curve.advance(0.9 * 40, 40.0, 0.25)
    assert 0.9 * 40 < s1 < 40.0
    assert curve.with_power(3.7).dc_power(0.95) == pytest.approx(0.9)


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 24), st.floats(0, 24), st.floats(0.1, 22))
def test_charge_step_monotone_bounded(soe, target, p):
    curve = ChargingCurve(cp_power_ac=p)
    s = charge_step(EVState(soe), SPEC, curve, target)
    assert s.soe >= soe
    assert s.soe <= max(soe, target) + 1e-12
    assert s.soe <= 24.0
    higher = charge_step(EVState(min(24.0, soe + 1.0)), SPEC, curve, target)
    assert higher.soe >= s.soe - 1e-12
