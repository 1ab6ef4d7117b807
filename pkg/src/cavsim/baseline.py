"""Human-driven baseline: psycho-physical car following, signals and yielding.

The car-following model follows the Wiedemann 1974 regime structure.
Thresholds, with ``z`` the driver's random factor in ``[0, 1]``:

* ``ABX = ax + (bx_add + bx_mult*z) * sqrt(min(v_f, v_l))``, desired minimum gap
* ``SDX = ax + (ex_add + ex_mult*z) * BX``, upper edge of the following band
* ``SDV = ((gap - ax) / cx)**2``, closing speed at which the leader is perceived

All gaps are net (bumper to bumper) distances in meters.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import NamedTuple

from .exceptions import ConfigurationError

FREE = "free"
APPROACHING = "approaching"
FOLLOWING = "following"
EMERGENCY = "emergency"
COLLISION = "collision"


@dataclass(frozen=True)
class DriverParams:
    desired_speed: float = 7.0
    ax: float = 2.0
    bx_add: float = 2.0
    bx_mult: float = 3.0
    ex_add: float = 1.5
    ex_mult: float = 1.0
    cx: float = 10.0
    z: float = 0.5
    b_null: float = 0.2
    max_accel: float = 3.0
    comfortable_decel: float = 3.0
    emergency_decel: float = 6.0
    speed_gain: float = 1.0
    perception_range: float = 150.0
    critical_gap: float = 3.0
    model: str = "wiedemann74"

    def violations(self) -> list[str]:
        out = []
        for f in fields(self):
            value = getattr(self, f.name)
            if isinstance(value, float) and value < 0:
                out.append(f"driver.{f.name}: must be >= 0 (got {value})")
        if not 0.0 <= self.z <= 1.0:
            out.append(f"driver.z: must lie in [0, 1] (got {self.z})")
        if not self.emergency_decel >= self.comfortable_decel > 0:
            out.append("driver.emergency_decel/comfortable_decel: need emergency >= comfortable > 0")
        if not self.cx > 0:
            out.append("driver.cx: must be > 0")
        if not self.desired_speed > 0:
            out.append("driver.desired_speed: must be > 0")
        if self.model not in CAR_FOLLOWING_MODELS:
            out.append(f"driver.model: unknown car-following model {self.model!r}")
        return out


class LeaderView(NamedTuple):
    gap: float
    speed: float
    vehicle: int | None = None   # None for virtual leaders (stop bar, yield line)
    kind: str = "vehicle"


def thresholds(v_f: float, v_l: float, driver: DriverParams) -> tuple[float, float]:
    """(ABX, SDX) for the given follower and leader speeds."""
    bx = (driver.bx_add + driver.bx_mult * driver.z) * math.sqrt(max(min(v_f, v_l), 0.0))
    abx = driver.ax + bx
    sdx = driver.ax + (driver.ex_add + driver.ex_mult * driver.z) * bx
    return abx, max(sdx, abx)


def free_accel(v: float, driver: DriverParams) -> float:
    u = driver.speed_gain * (driver.desired_speed - v)
    return min(max(u, -driver.comfortable_decel), driver.max_accel)


def wiedemann74(v_f: float, leader: LeaderView | None, driver: DriverParams,
                dt: float) -> tuple[float, str]:
    """Acceleration command and regime name for one follower."""
    if leader is None or leader.gap > driver.perception_range:
        return free_accel(v_f, driver), FREE

    s = leader.gap
    dv = v_f - leader.speed
    if s <= 0.0:
        u = -driver.emergency_decel if v_f > 0 else 0.0
        return u, COLLISION

    abx, sdx = thresholds(v_f, leader.speed, driver)
    if s < abx or (dv > 0.0 and s - abx < 1e-9):
        if v_f <= 0.0:
            return 0.0, EMERGENCY
        margin = s - driver.ax
        if dv <= 0.0:
            u = -driver.b_null
        elif margin <= 0.05:
            u = -driver.emergency_decel
        else:
            u = -min(driver.emergency_decel, dv * dv / (2.0 * margin) + driver.b_null)
        return u, EMERGENCY

    sdv = ((s - driver.ax) / driver.cx) ** 2
    if dv > sdv:
        u = -min(driver.comfortable_decel, dv * dv / (2.0 * (s - abx)))
        return u, APPROACHING
    if s <= sdx:
        u = min(max(-dv / dt, -driver.b_null), driver.b_null)
        return u, FOLLOWING
    return free_accel(v_f, driver), FREE


def idm(v_f: float, leader: LeaderView | None, driver: DriverParams,
        dt: float) -> tuple[float, str]:
    """Intelligent Driver Model with the same parameter object.

    Registered as an alternative so coordination effects can be separated
    from the choice of human-driver model. ``ax`` is the jam distance and
    ``bx_add`` the time headway.
    """
    a, b = driver.max_accel, driver.comfortable_decel
    free = 1.0 - (max(v_f, 0.0) / driver.desired_speed) ** 4
    if leader is None or leader.gap > driver.perception_range:
        return min(max(a * free, -driver.emergency_decel), a), FREE
    if leader.gap <= 0.0:
        return -driver.emergency_decel, COLLISION
    dv = v_f - leader.speed
    s_star = driver.ax + max(0.0, v_f * driver.bx_add / 2.0 + v_f * dv / (2.0 * math.sqrt(a * b)))
    u = a * (free - (s_star / leader.gap) ** 2)
    return min(max(u, -driver.emergency_decel), a), FOLLOWING


CAR_FOLLOWING_MODELS = {"wiedemann74": wiedemann74, "idm": idm}


def register_model(name: str, fn) -> None:
    """Make a car-following function selectable through ``DriverParams.model``."""
    CAR_FOLLOWING_MODELS[name] = fn


def follow_accel(v_f: float, leader: LeaderView | None, driver: DriverParams,
                 dt: float) -> tuple[float, str]:
    fn = CAR_FOLLOWING_MODELS[driver.model]
    u, regime = fn(v_f, leader, driver, dt)
    return min(max(u, -driver.emergency_decel), driver.max_accel), regime


@dataclass(frozen=True)
class Phase:
    approaches: tuple[str, ...]
    green: float
    intergreen: float = 0.0


@dataclass(frozen=True)
class SignalPlan:
    zone: str
    phases: tuple[Phase, ...]
    offset: float = 0.0

    @property
    def cycle(self) -> float:
        return sum(p.green + p.intergreen for p in self.phases)

    def violations(self, approaches=None) -> list[str]:
        out = []
        seen = [a for p in self.phases for a in p.approaches]
        if len(seen) != len(set(seen)):
            out.append(f"signal {self.zone}: an approach appears in more than one phase")
        if approaches is not None and set(seen) != set(approaches):
            out.append(f"signal {self.zone}: phases must cover approaches {sorted(approaches)}")
        for p in self.phases:
            if p.green <= 0 or p.intergreen < 0:
                out.append(f"signal {self.zone}: phase durations must be positive")
        return out


GREEN = "green"
RED = "red"


def signal_state(plan: SignalPlan, approach: str, t: float) -> tuple[str, float]:
    """Return the indication for ``approach`` at ``t`` and seconds until it changes."""
    cycle = plan.cycle
    tc = (t - plan.offset) % cycle
    if tc >= cycle:  # a tiny negative remainder rounds up to the full cycle
        tc = 0.0
    start = 0.0
    for phase in plan.phases:
        if approach in phase.approaches:
            end = start + phase.green
            if start <= tc < end:
                return GREEN, end - tc
            return RED, (start - tc) % cycle
        start += phase.green + phase.intergreen
    raise ConfigurationError(f"approach {approach!r} not in signal plan for zone {plan.zone}")


class YieldDecision(NamedTuple):
    proceed: bool
    min_gap: float


def yield_decision(majors, critical_gap: float, occupied: bool = False) -> YieldDecision:
    """Gap acceptance for a minor-road vehicle.

    ``majors`` yields ``(distance to conflict entry, speed)`` for every
    conflicting major-road vehicle. The minor vehicle proceeds only if each
    of them needs more than ``critical_gap`` seconds to arrive and the
    conflict zone is empty.
    """
    min_gap = math.inf
    for distance, speed in majors:
        gap = distance / max(speed, 1e-6)
        min_gap = min(min_gap, gap)
    return YieldDecision(not occupied and min_gap > critical_gap, min_gap)
