import functools
import math

import pytest

from cavsim.baseline import DriverParams
from cavsim.config import load_scenario
from cavsim.dynamics import VehicleParams
from cavsim.engine import FleetVehicle, ScenarioConfig, run
from cavsim.network import (
    CROSSING, Approach, ArcSegment, LineSegment, Network, Route, SharedLane, ZoneCrossing, ZoneSpec,
)


@functools.lru_cache(maxsize=8)
def reference_run(mode: str, seed: int = 1):
    return run(load_scenario(mode=mode, seed=seed))


@pytest.fixture
def params():
    return VehicleParams()


@pytest.fixture
def zone_params():
    """Speed and acceleration limits of the reference setup with delta = v."""
    return VehicleParams(standstill=0.0, time_gap=1.0)


def circle_route(route_id, radius, crossings=(), center=(0.0, 0.0)):
    """Single full-circle loop starting at angle 0, counterclockwise."""
    start = (center[0] + radius, center[1])
    return Route(route_id, (ArcSegment(start, center, radius, 2 * math.pi),), True, tuple(crossings))


def square_route(route_id, side, origin=(0.0, 0.0), crossings=()):
    x, y = origin
    pts = [(x, y), (x + side, y), (x + side, y + side), (x, y + side)]
    segs = tuple(LineSegment(pts[k], pts[(k + 1) % 4]) for k in range(4))
    return Route(route_id, segs, True, tuple(crossings))


def crossing_network(L=45.0, S=8.0, speed=7.0, priority=("major", "minor"), offsets=(100.0, 100.0),
                     side=100.0):
    """Two square loops sharing one crossing zone ``X`` with approaches ``a`` and ``b``."""
    zone = ZoneSpec("X", "intersection", (
        Approach("a", L, S, speed, priority[0]), Approach("b", L, S, speed, priority[1])),
        {("a", "b"): CROSSING, ("b", "a"): CROSSING})
    ra = square_route("ra", side, (0.0, 0.0),
                      [ZoneCrossing("X", "a", offsets[0], offsets[0] + L, offsets[0] + L + S)])
    rb = square_route("rb", side, (200.0, 0.0),
                      [ZoneCrossing("X", "b", offsets[1], offsets[1] + L, offsets[1] + L + S)])
    return Network({"ra": ra, "rb": rb}, {"X": zone}, ())


def two_vehicle_config(mode, positions=(50.0, 50.0), speeds=(7.0, 7.0), duration=30.0, **net_kw):
    net = crossing_network(**net_kw)
    fleet = (FleetVehicle(1, "ra", positions[0], speeds[0], True),
             FleetVehicle(2, "rb", positions[1], speeds[1], True))
    return ScenarioConfig(net, fleet, mode=mode, vehicle=VehicleParams(standstill=5.0, time_gap=0.6),
                          driver=DriverParams(), duration=duration, seed=3,
                          random_driver_factor=False)
