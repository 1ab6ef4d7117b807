import math

import numpy as np
import pytest

from cavsim.baseline import DriverParams
from cavsim.config import load_scenario
from cavsim.coordinator import Coordinator
from cavsim.dynamics import VehicleParams, safe_distance
from cavsim.engine import (
    TRACE_HEADER, FleetVehicle, ScenarioConfig, Simulation, run, snapshot_leader, validate_config,
    write_jsonl, write_trace,
)
from cavsim.exceptions import ConfigurationError, InfeasiblePlanError
from cavsim.network import Network
from cavsim.planner import check_feasibility, eval_plan, solve_boundary

from conftest import crossing_network, reference_run, two_vehicle_config


def single_vehicle_config(mode="optimal", speed=7.0, zone_speed=7.0, desired=7.0, v_max=8.33):
    net = crossing_network(speed=zone_speed)
    fleet = (FleetVehicle(1, "ra", 50.0, speed, True),)
    return ScenarioConfig(net, fleet, mode=mode,
                          vehicle=VehicleParams(v_max=v_max, desired_speed=min(desired, v_max)),
                          driver=DriverParams(desired_speed=desired), duration=20.0,
                          random_driver_factor=False)


def test_single_vehicle_cruises_through_zone():
    result = run(single_vehicle_config())
    s = result.trace.series(1)
    ctrl = np.array([z == "control:X:a" for z in s["zone"]])
    assert ctrl.any()
    assert np.all(s["u"][ctrl] == pytest.approx(0.0, abs=1e-12))
    entry = result.events_of("control_entry")[0]["t"]
    conflict = result.events_of("conflict_entry")[0]["t"]
    assert conflict - entry == pytest.approx(45 / 7, abs=0.02)


def test_two_crossing_vehicles_optimal_no_overlap():
    result = run(two_vehicle_config("optimal"))
    assert len(result.events_of("plan")) >= 2
    assert result.audit() == []
    led = result.ledgers["X"].intervals
    first, second = sorted(led, key=lambda x: x.t_m)[:2]
    assert second.t_m >= first.t_f - 1e-9


def test_two_crossing_vehicles_baseline_minor_holds():
    # the major vehicle trails by 10 m, too close for the minor one to go first
    result = run(two_vehicle_config("baseline", positions=(40.0, 50.0)))
    s = result.trace.series(2)
    held = np.array(["yield_held" in f for f in s["flags"]])
    assert held.any()
    assert s["v"][held].min() == pytest.approx(0.0, abs=1e-9)
    # stopped before the yield line at arc-length 145
    stopped = s["p"][held & (s["v"] < 1e-9)]
    assert np.all(stopped < 145.0)
    assert result.events_of("collision") == []


def test_entry_behind_crossing_predecessor_composes_planner():
    params = VehicleParams(standstill=0.0, time_gap=1.0)
    zone = crossing_network(S=7.0).zones["X"]
    coord = Coordinator(zone, params)
    coord.register(1, "a", 0.0, 7.0)
    coord.queue[1].t_m = 10.5  # predecessor scheduled late
    coord._last.t_m = 10.5
    e = coord.register(2, "b", 0.0, 4.0)
    assert e.t_m == pytest.approx(max(10.5 + 1.0, 45 / 4))
    plan = solve_boundary(e.t0, e.t_m, 0.0, 45.0, 4.0, 7.0)
    p, v, _ = eval_plan(plan, np.array([e.t0, e.t_m]))
    assert p == pytest.approx([0.0, 45.0], abs=1e-9)
    assert v == pytest.approx([4.0, 7.0], abs=1e-9)
    assert check_feasibility(plan, params).feasible
    # a ten-second window gives the reference cubic
    plan = solve_boundary(0.0, 10.0, 0.0, 45.0, 4.0, 7.0)
    assert (plan.a, plan.b, plan.c, plan.d) == pytest.approx((0.12, -0.3, 4.0, 0.0), abs=1e-12)


def test_infeasible_entry_aborts_naming_bound():
    cfg = single_vehicle_config(speed=8.3, zone_speed=2.0, desired=8.3)
    with pytest.raises(InfeasiblePlanError) as info:
        run(cfg)
    assert info.value.bound == "v_max"
    assert "v_max" in str(info.value) and "vehicle 1" in str(info.value)


def test_snapshot_leader_examples():
    assert snapshot_leader(0.0, 300.0, [], 50.0) is None
    assert snapshot_leader(295.0, 300.0, [(7, 10.0)], 50.0) == (7, pytest.approx(15.0))
    assert snapshot_leader(0.0, 300.0, [(7, 20.0)], 50.0, [("stop_bar", 8.0)]) == ("stop_bar", 8.0)
    assert snapshot_leader(0.0, 300.0, [(7, 80.0)], 50.0) is None


def test_config_validation_messages():
    cfg = two_vehicle_config("optimal", positions=(50.0, 120.0))
    assert any("inside zone" in p for p in validate_config(cfg))
    cfg = two_vehicle_config("optimal").with_(dt=0.5)
    assert any("dt" in p for p in validate_config(cfg))
    cfg = two_vehicle_config("optimal").with_(mode="fast")
    assert any("mode" in p for p in validate_config(cfg))
    with pytest.raises(ConfigurationError):
        Simulation(cfg)


def test_initial_spacing_checked():
    base = two_vehicle_config("optimal")
    fleet = base.fleet + (FleetVehicle(3, "ra", 55.0, 7.0),)
    problems = validate_config(base.with_(fleet=fleet))
    assert any("apart" in p for p in problems)


def test_trace_shape_and_order():
    result = reference_run("optimal")
    cfg = result.config
    cols = result.trace.columns()
    n_ticks = cfg.n_ticks + 1
    assert len(result.trace) == n_ticks * len(cfg.fleet)
    keys = list(zip(cols["t"], cols["vehicle"]))
    assert keys == sorted(keys)
    assert len(set(keys)) == len(keys)


@pytest.mark.parametrize("mode", ["baseline", "optimal"])
def test_fleet_conserved_and_no_reversal(mode):
    result = reference_run(mode)
    for vid in result.trace.vehicle_ids():
        s = result.trace.series(vid)
        assert np.all(np.diff(s["p"]) >= -1e-12)
        assert np.all(s["v"] >= 0)
    assert len(result.trace.vehicle_ids()) == len(result.config.fleet)


def test_tracking_fidelity():
    result = reference_run("optimal")
    cfg = result.config
    plans = {}
    for e in result.events_of("plan"):
        plans.setdefault(e["vehicle"], []).append(e)
    dt = cfg.dt
    for vid, events in plans.items():
        s = result.trace.series(vid)
        for e in events:
            plan = solve_boundary(e["t"], e["t_m"], 0.0, 45.0, e["v0"], 7.0)
            k0 = int(np.searchsorted(s["t"], e["t"]))
            entry_odo = s["p"][k0] - eval_plan(plan, s["t"][k0])[0]
            ks = np.flatnonzero((s["t"] >= e["t"]) & (s["t"] <= e["t_m"]))
            expected = entry_odo + eval_plan(plan, s["t"][ks])[0]
            assert np.max(np.abs(s["p"][ks] - expected)) <= cfg.vehicle.v_max * dt


def test_realized_occupancy_matches_ledger():
    result = reference_run("optimal")
    dt = result.config.dt
    cols = result.trace.columns()
    for zone_id, ledger in result.ledgers.items():
        for item in ledger.intervals:
            if item.realized_exit is None:
                continue
            m = (cols["vehicle"] == item.vehicle) & np.array(
                [z.startswith(f"conflict:{zone_id}:") for z in cols["zone"]])
            ts = cols["t"][m]
            ts = ts[(ts >= item.t_m - dt) & (ts <= item.realized_exit + dt)]
            assert ts.min() == pytest.approx(item.t_m, abs=dt)
            assert ts.max() == pytest.approx(item.realized_exit, abs=dt)
            assert item.realized_exit == pytest.approx(item.t_f, abs=dt)


@pytest.mark.parametrize("seed", [1, 2, 3])
def test_baseline_has_no_rear_end_overlap(seed):
    result = reference_run("baseline", seed)
    assert result.events_of("collision") == []


def test_optimal_zone_speeds_within_bounds():
    result = reference_run("optimal")
    cols = result.trace.columns()
    ctrl = np.array([z.startswith("control") for z in cols["zone"]])
    assert cols["v"][ctrl].min() >= 2.0 - 1e-9
    assert cols["v"][ctrl].max() <= 8.33 + 1e-9
    assert np.abs(cols["u"][ctrl]).max() <= 3.0 + 1e-9


def test_writers_are_byte_stable(tmp_path):
    result = run(two_vehicle_config("optimal"))
    again = run(two_vehicle_config("optimal"))
    for name, res in (("a", result), ("b", again)):
        write_trace(res.trace, tmp_path / f"{name}.csv")
        write_jsonl(res.events, tmp_path / f"{name}.jsonl")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()
    lines = (tmp_path / "a.csv").read_text().splitlines()
    assert lines[0] == ",".join(TRACE_HEADER)
    p = lines[5].split(",")[3]
    assert len(p.replace(".", "").replace("-", "").lstrip("0")) <= 9


def test_zero_zone_network_modes_identical(tmp_path):
    cfg = load_scenario()
    routes = {rid: type(r)(r.id, r.segments, r.loop, ()) for rid, r in cfg.network.routes.items()}
    cfg = cfg.with_(network=Network(routes, {}, ()), signals={})
    for mode in ("baseline", "optimal"):
        write_trace(run(cfg.with_(mode=mode)).trace, tmp_path / f"{mode}.csv")
    assert (tmp_path / "baseline.csv").read_bytes() == (tmp_path / "optimal.csv").read_bytes()


def test_zone_speed_held_for_one_headway_after_entry():
    result = reference_run("optimal")
    cfg = result.config
    headway = safe_distance(7.0, cfg.vehicle) / 7.0
    for e in result.events_of("conflict_entry"):
        s = result.trace.series(e["vehicle"])
        m = (s["t"] > e["t_m"] + 1e-9) & (s["t"] < e["t_m"] + headway - 1e-9)
        assert np.all(s["v"][m] == pytest.approx(7.0, abs=1e-9))
