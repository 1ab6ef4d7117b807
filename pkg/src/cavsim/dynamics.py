"""Double-integrator vehicle kinematics and rear-end spacing."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .exceptions import ConfigurationError, NumericError, UsageError


@dataclass(frozen=True)
class VehicleState:
    id: int
    route: str
    p: float
    v: float
    u: float = 0.0
    t: float = 0.0


@dataclass(frozen=True)
class VehicleParams:
    """Admissible ranges and spacing parameters of one vehicle class.

    ``standstill`` is the standstill distance and ``time_gap`` the minimum
    safe time gap of the speed-dependent safe distance.
    """

    u_min: float = -3.0
    u_max: float = 3.0
    v_min: float = 2.0
    v_max: float = 8.33
    desired_speed: float = 7.0
    standstill: float = 1.0
    time_gap: float = 0.5
    length: float = 4.0

    def violations(self) -> list[str]:
        out = []
        if not self.u_min < 0 < self.u_max:
            out.append(f"vehicle.u_min/u_max: need u_min < 0 < u_max (got {self.u_min}, {self.u_max})")
        if not 0 <= self.v_min < self.desired_speed <= self.v_max:
            out.append("vehicle.v_min/desired_speed/v_max: need 0 <= v_min < desired_speed <= v_max "
                       f"(got {self.v_min}, {self.desired_speed}, {self.v_max})")
        if not self.standstill >= 0:
            out.append(f"vehicle.standstill: must be >= 0 (got {self.standstill})")
        if not self.time_gap > 0:
            out.append(f"vehicle.time_gap: must be > 0 (got {self.time_gap})")
        if not self.length > 0:
            out.append(f"vehicle.length: must be > 0 (got {self.length})")
        return out

    def check(self) -> "VehicleParams":
        problems = self.violations()
        if problems:
            raise ConfigurationError("; ".join(problems))
        return self


def advance(p: float, v: float, u: float, dt: float) -> tuple[float, float]:
    """Exact double-integrator update that never lets the speed go negative."""
    v_next = v + u * dt
    if v_next >= 0.0:
        return p + v * dt + 0.5 * u * dt * dt, v_next
    # u < 0 here; integrate only up to the stopping instant.
    t_stop = -v / u
    return p + v * t_stop + 0.5 * u * t_stop * t_stop, 0.0


def step(state: VehicleState, u: float, dt: float) -> VehicleState:
    if not (math.isfinite(u) and math.isfinite(dt) and math.isfinite(state.p)
            and math.isfinite(state.v)):
        raise NumericError(f"non-finite step input for vehicle {state.id}")
    if not dt > 0:
        raise UsageError(f"dt must be > 0 (got {dt})")
    p, v = advance(state.p, state.v, u, dt)
    return replace(state, p=p, v=v, u=u, t=state.t + dt)


def safe_distance(v: float, params: VehicleParams) -> float:
    return params.standstill + params.time_gap * v


def rear_end_gap_ok(follower: VehicleState, leader: VehicleState, params: VehicleParams,
                    same_lane: bool | None = None) -> tuple[bool, float]:
    """Check the rear-end spacing constraint between consecutive vehicles.

    Positions are compared directly, so both states must be expressed on the
    same lane coordinate. ``same_lane`` defaults to comparing route ids.

    Returns ``(ok, margin)`` where ``margin = (p_leader - p_follower) - delta``.
    """
    if same_lane is None:
        same_lane = follower.route == leader.route
    if not same_lane:
        raise UsageError(f"vehicles {follower.id} and {leader.id} are not in a same-lane relation")
    margin = (leader.p - follower.p) - safe_distance(follower.v, params)
    return margin >= 0.0, margin
