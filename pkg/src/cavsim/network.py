"""Road network geometry, zone placement and conflict topology.

Routes are chains of line and circular-arc segments parameterized by
arc-length. Each route lists the zones it crosses as arc-length offsets:
the control-zone entry, the conflict-zone entry (stop/yield line) and the
conflict-zone exit. Vehicles on different routes interact only through
zones and through ``SharedLane`` stretches where their paths coincide.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from typing import NamedTuple

from .exceptions import ConfigurationError, OutOfRangeError

SAME_LANE = "same-lane"
CROSSING = "crossing"
DISJOINT = "disjoint"
RELATIONS = (SAME_LANE, CROSSING, DISJOINT)

ZONE_KINDS = ("intersection", "roundabout", "merge")

OPEN = "open"
CONTROL = "control"
CONFLICT = "conflict"

_LENGTH_TOL = 1e-9
_CONTINUITY_TOL = 1e-6


@dataclass(frozen=True)
class LineSegment:
    start: tuple[float, float]
    end: tuple[float, float]
    declared_length: float | None = None

    kind = "line"

    @property
    def length(self) -> float:
        return math.hypot(self.end[0] - self.start[0], self.end[1] - self.start[1])

    @property
    def end_point(self) -> tuple[float, float]:
        return self.end

    def point(self, s: float) -> tuple[float, float]:
        frac = s / self.length
        return (self.start[0] + frac * (self.end[0] - self.start[0]),
                self.start[1] + frac * (self.end[1] - self.start[1]))


@dataclass(frozen=True)
class ArcSegment:
    """Circular arc; positive ``sweep`` turns counterclockwise."""

    start: tuple[float, float]
    center: tuple[float, float]
    radius: float
    sweep: float
    declared_length: float | None = None

    kind = "arc"

    @property
    def length(self) -> float:
        return abs(self.radius * self.sweep)

    @property
    def start_angle(self) -> float:
        return math.atan2(self.start[1] - self.center[1], self.start[0] - self.center[0])

    @property
    def end_point(self) -> tuple[float, float]:
        return self._at_angle(self.start_angle + self.sweep)

    def _at_angle(self, theta: float) -> tuple[float, float]:
        return (self.center[0] + self.radius * math.cos(theta),
                self.center[1] + self.radius * math.sin(theta))

    def point(self, s: float) -> tuple[float, float]:
        direction = 1.0 if self.sweep >= 0 else -1.0
        return self._at_angle(self.start_angle + direction * s / self.radius)


Segment = LineSegment | ArcSegment


@dataclass(frozen=True)
class ZoneCrossing:
    zone: str
    approach: str
    control_entry: float
    conflict_entry: float
    conflict_exit: float


@dataclass(frozen=True)
class Route:
    id: str
    segments: tuple[Segment, ...]
    loop: bool = True
    crossings: tuple[ZoneCrossing, ...] = ()
    _starts: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _bounds: tuple[float, ...] = field(init=False, repr=False, compare=False)
    _total: float = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        starts, acc = [], 0.0
        for seg in self.segments:
            starts.append(acc)
            acc += seg.length
        object.__setattr__(self, "_starts", tuple(starts))
        object.__setattr__(self, "_total", acc)
        bounds = []
        for c in self.crossings:
            bounds.extend((c.control_entry, c.conflict_entry, c.conflict_exit))
        object.__setattr__(self, "_bounds", tuple(bounds))

    @property
    def total_length(self) -> float:
        return self._total

    def wrap(self, s: float) -> float:
        """Map an odometer reading onto ``[0, total_length)`` for loops."""
        total = self.total_length
        if self.loop:
            return s % total
        if s < -_LENGTH_TOL or s > total + _LENGTH_TOL:
            raise OutOfRangeError(f"s={s} outside route {self.id!r} of length {total}")
        return min(max(s, 0.0), total)


@dataclass(frozen=True)
class Approach:
    id: str
    control_length: float
    conflict_length: float
    speed: float
    priority: str = "major"
    downstream: str | None = None


@dataclass(frozen=True)
class ZoneSpec:
    id: str
    kind: str
    approaches: tuple[Approach, ...]
    relations: dict = field(default_factory=dict, hash=False, compare=False)

    def approach(self, approach_id: str) -> Approach:
        for a in self.approaches:
            if a.id == approach_id:
                return a
        raise ConfigurationError(f"zone {self.id!r} has no approach {approach_id!r}")


@dataclass(frozen=True)
class SharedLane:
    """A stretch of pavement traversed by several routes.

    ``pieces`` holds ``(route id, arc-length start, length)``; every piece of
    one shared lane has the same length and lane position ``q`` maps to
    ``start + q`` on each member route.
    """

    id: str
    pieces: tuple[tuple[str, float, float], ...]


@dataclass(frozen=True)
class Network:
    routes: dict
    zones: dict
    shared_lanes: tuple[SharedLane, ...] = ()

    def route(self, route_id: str) -> Route:
        try:
            return self.routes[route_id]
        except KeyError:
            raise ConfigurationError(f"unknown route {route_id!r}") from None

    def zone(self, zone_id: str) -> ZoneSpec:
        try:
            return self.zones[zone_id]
        except KeyError:
            raise ConfigurationError(f"unknown zone {zone_id!r}") from None


class ZoneContext(NamedTuple):
    kind: str
    zone: str | None = None
    approach: str | None = None
    distance: float = 0.0

    def label(self) -> str:
        if self.kind == OPEN:
            return OPEN
        return f"{self.kind}:{self.zone}:{self.approach}"


def position_at(route: Route, s: float) -> tuple[float, float]:
    """2D point at arc-length ``s`` along ``route`` (wrapped for loops)."""
    if not math.isfinite(s):
        raise OutOfRangeError(f"non-finite arc-length {s}")
    s = route.wrap(s)
    k = bisect.bisect_right(route._starts, s) - 1
    k = min(max(k, 0), len(route.segments) - 1)
    seg = route.segments[k]
    local = min(max(s - route._starts[k], 0.0), seg.length)
    return seg.point(local)


def zone_context(route: Route, s: float) -> ZoneContext:
    """Classify arc-length ``s`` as open road, control zone or conflict zone.

    Intervals are half-open: a vehicle exactly at the conflict entry is in
    the conflict zone, exactly at the conflict exit it is back on open road.
    """
    s = route.wrap(s)
    k = bisect.bisect_right(route._bounds, s)
    if k == 0:
        return ZoneContext(OPEN)
    crossing = route.crossings[(k - 1) // 3]
    phase = (k - 1) % 3
    if phase == 0:
        return ZoneContext(CONTROL, crossing.zone, crossing.approach, s - crossing.control_entry)
    if phase == 1:
        return ZoneContext(CONFLICT, crossing.zone, crossing.approach, s - crossing.conflict_entry)
    return ZoneContext(OPEN)


def conflict_relation(zone: ZoneSpec, approach_i: str, approach_j: str) -> str:
    zone.approach(approach_i)
    zone.approach(approach_j)
    if approach_i == approach_j:
        return SAME_LANE
    return zone.relations.get((approach_i, approach_j), DISJOINT)


def _validate_segment(seg, where: str) -> list[str]:
    out = []
    if seg.kind == "arc":
        if not seg.radius > 0:
            out.append(f"{where}: arc radius must be > 0 (got {seg.radius})")
            return out
        r_start = math.hypot(seg.start[0] - seg.center[0], seg.start[1] - seg.center[1])
        if abs(r_start - seg.radius) > _CONTINUITY_TOL:
            out.append(f"{where}: arc start is {r_start:.9g} m from center, radius {seg.radius}")
    if not seg.length > 0:
        out.append(f"{where}: segment length must be > 0")
    if seg.declared_length is not None and abs(seg.declared_length - seg.length) > _LENGTH_TOL:
        out.append(f"{where}: declared length {seg.declared_length} != analytic {seg.length:.12g}")
    return out


def _validate_route(route: Route, network: Network) -> list[str]:
    out = []
    if not route.segments:
        return [f"route {route.id}: no segments"]
    for k, seg in enumerate(route.segments):
        out.extend(_validate_segment(seg, f"route {route.id} segment {k}"))
    for k in range(len(route.segments) - 1):
        a, b = route.segments[k].end_point, route.segments[k + 1].start
        gap = math.hypot(a[0] - b[0], a[1] - b[1])
        if gap > _CONTINUITY_TOL:
            out.append(f"route {route.id}: discontinuity of {gap:.6g} m between segments {k} and {k + 1}")
    if route.loop:
        a, b = route.segments[-1].end_point, route.segments[0].start
        gap = math.hypot(a[0] - b[0], a[1] - b[1])
        if gap > _CONTINUITY_TOL:
            out.append(f"route {route.id}: loop not closed, end is {gap:.6g} m from start")

    total = route.total_length
    prev_exit = -math.inf
    for c in route.crossings:
        where = f"route {route.id} crossing {c.zone}/{c.approach}"
        if c.zone not in network.zones:
            out.append(f"{where}: unknown zone")
            continue
        zone = network.zones[c.zone]
        try:
            appr = zone.approach(c.approach)
        except ConfigurationError:
            out.append(f"{where}: zone has no such approach")
            continue
        if c.control_entry < prev_exit:
            out.append(f"{where}: crossings unsorted or overlapping")
        if c.control_entry < 0 or c.conflict_exit > total + _LENGTH_TOL:
            out.append(f"{where}: offsets outside [0, {total:.6g}]")
        if abs((c.conflict_entry - c.control_entry) - appr.control_length) > _CONTINUITY_TOL:
            out.append(f"{where}: conflict entry - control entry = "
                       f"{c.conflict_entry - c.control_entry:.9g} != L^z {appr.control_length}")
        if abs((c.conflict_exit - c.conflict_entry) - appr.conflict_length) > _CONTINUITY_TOL:
            out.append(f"{where}: conflict exit - conflict entry = "
                       f"{c.conflict_exit - c.conflict_entry:.9g} != S^z {appr.conflict_length}")
        prev_exit = c.conflict_exit
    return out


def _validate_zone(zone: ZoneSpec, vehicle_params) -> list[str]:
    out = []
    where = f"zone {zone.id}"
    if zone.kind not in ZONE_KINDS:
        out.append(f"{where}: unknown kind {zone.kind!r}")
    ids = [a.id for a in zone.approaches]
    if len(set(ids)) != len(ids):
        out.append(f"{where}: duplicate approach ids")
    for a in zone.approaches:
        if not a.control_length > 0:
            out.append(f"{where} approach {a.id}: L^z must be > 0")
        if not a.conflict_length > 0:
            out.append(f"{where} approach {a.id}: S^z must be > 0")
        if vehicle_params is not None and not (
                vehicle_params.v_min <= a.speed <= vehicle_params.v_max):
            out.append(f"{where} approach {a.id}: imposed speed {a.speed} outside "
                       f"[{vehicle_params.v_min}, {vehicle_params.v_max}]")
        elif not a.speed > 0:
            out.append(f"{where} approach {a.id}: imposed speed must be > 0")
    downstream = {a.id: a.downstream for a in zone.approaches}
    for (i, j), rel in zone.relations.items():
        if i not in downstream or j not in downstream:
            out.append(f"{where}: relation references unknown approach ({i}, {j})")
            continue
        if rel not in RELATIONS:
            out.append(f"{where}: unknown relation {rel!r} for ({i}, {j})")
            continue
        if rel in (CROSSING, DISJOINT) and zone.relations.get((j, i), DISJOINT) != rel:
            out.append(f"{where}: relation ({i}, {j}) = {rel} is not symmetric")
        if rel == SAME_LANE and i != j and (
                downstream[i] is None or downstream[i] != downstream[j]):
            out.append(f"{where}: ({i}, {j}) same-lane without a shared downstream lane")
    return out


def _validate_shared(lane: SharedLane, network: Network) -> list[str]:
    out = []
    lengths = {round(length, 9) for _, _, length in lane.pieces}
    if len(lengths) > 1:
        out.append(f"shared lane {lane.id}: pieces have different lengths")
    for route_id, start, length in lane.pieces:
        if route_id not in network.routes:
            out.append(f"shared lane {lane.id}: unknown route {route_id!r}")
            continue
        total = network.routes[route_id].total_length
        if start < 0 or start + length > total + _LENGTH_TOL or length <= 0:
            out.append(f"shared lane {lane.id}: piece on {route_id} outside route")
    return out


def validate_network(network: Network, vehicle_params=None) -> list[str]:
    """Return human-readable invariant violations; empty when well formed."""
    out = []
    for route in network.routes.values():
        out.extend(_validate_route(route, network))
    for zone in network.zones.values():
        out.extend(_validate_zone(zone, vehicle_params))
    for lane in network.shared_lanes:
        out.extend(_validate_shared(lane, network))
    return out
