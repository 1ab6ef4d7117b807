"""First-in-first-out coordination of one conflict zone.

The coordinator only sequences vehicles and relays what each one shares;
it never computes controls. A vehicle entering the control zone receives
the next queue index, learns which queued vehicles share its lane or cross
its path, and fixes its conflict-zone entry time from the information of
the vehicle registered just before it.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

from .dynamics import VehicleParams, safe_distance
from .exceptions import ProtocolError, UsageError
from .network import CROSSING, DISJOINT, SAME_LANE, ZoneSpec, conflict_relation

log = logging.getLogger(__name__)


@dataclass
class InfoSet:
    p: float
    v: float
    same_lane: frozenset
    crossing: frozenset
    t_m: float


@dataclass
class QueueEntry:
    index: int
    vehicle: int
    approach: str
    t0: float
    v0: float
    t_m: float = math.nan
    t_f: float = math.nan
    info: InfoSet | None = None
    relation_to_predecessor: str | None = None


@dataclass
class LedgerInterval:
    vehicle: int
    approach: str
    t_m: float
    t_f: float
    realized_exit: float | None = None
    late: bool = False


@dataclass
class OccupancyLedger:
    zone: str
    intervals: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def open(self, entry: QueueEntry) -> LedgerInterval:
        item = LedgerInterval(entry.vehicle, entry.approach, entry.t_m, entry.t_f)
        self.intervals.append(item)
        return item

    def records(self):
        for item in self.intervals:
            yield {
                "zone": self.zone,
                "vehicle": item.vehicle,
                "approach": item.approach,
                "t_m": item.t_m,
                "t_f": item.t_f,
                "realized_exit": item.realized_exit,
                "late": item.late,
            }


def entry_window(L: float, v0: float, params: VehicleParams) -> tuple[float, float, float]:
    """Durations (fastest, cruise, slowest) for crossing a control zone of length ``L``."""
    return L / params.v_max, L / v0, L / params.v_min


def schedule_entry_time(entry: QueueEntry, predecessor: QueueEntry | None, relation: str | None,
                        L: float, S: float, v_zone: float, params: VehicleParams) -> float:
    """Absolute conflict-zone entry time for ``entry``.

    ``relation`` is how the predecessor (queue index ``i-1``) relates to the
    entering vehicle. All ``L/v`` terms are durations measured from the
    vehicle's own control-zone entry time; the predecessor's entry time is
    absolute. A disjoint predecessor imposes no spacing.
    """
    if not entry.v0 > 0:
        raise UsageError(f"vehicle {entry.vehicle}: entry speed must be > 0 (got {entry.v0})")
    fastest, cruise, slowest = entry_window(L, entry.v0, params)
    # an entry speed outside [v_min, v_max] must not push the crossing
    # duration outside the admissible window
    cruise = min(max(cruise, fastest), slowest)
    if predecessor is None or relation == DISJOINT:
        return entry.t0 + cruise
    if relation == SAME_LANE:
        spacing = safe_distance(v_zone, params) / v_zone
    elif relation == CROSSING:
        spacing = S / v_zone
    else:
        raise UsageError(f"unknown relation {relation!r}")
    follow = min(predecessor.t_m + spacing, entry.t0 + slowest)
    return max(follow, entry.t0 + cruise)


class Coordinator:
    """Queue and ledger of one conflict zone.

    ``late_tolerance`` is how far past the scheduled exit a realized exit may
    be before a warning is recorded.
    """

    def __init__(self, zone: ZoneSpec, params: VehicleParams, late_tolerance: float = 0.05):
        self.zone = zone
        self.params = params
        self.late_tolerance = late_tolerance
        self.queue: dict[int, QueueEntry] = {}
        self.ledger = OccupancyLedger(zone.id)
        self._open: dict[int, LedgerInterval] = {}
        self._assigned = 0
        self._last: QueueEntry | None = None

    def __len__(self):
        return len(self.queue)

    def entries(self) -> list[QueueEntry]:
        return sorted(self.queue.values(), key=lambda e: e.index)

    def register(self, vehicle: int, approach: str, t: float, v0: float,
                 p: float = 0.0) -> QueueEntry:
        if vehicle in self.queue:
            raise ProtocolError(f"vehicle {vehicle} already registered in zone {self.zone.id}")
        if not self.queue:
            self._assigned = 0
            self._last = None
        self._assigned += 1
        entry = QueueEntry(self._assigned, vehicle, approach, t, v0)

        same, cross = set(), set()
        for other in self.queue.values():
            rel = conflict_relation(self.zone, approach, other.approach)
            if rel == SAME_LANE:
                same.add(other.vehicle)
            elif rel == CROSSING:
                cross.add(other.vehicle)

        pred = self._last
        relation = None
        if pred is not None:
            relation = conflict_relation(self.zone, approach, pred.approach)
        appr = self.zone.approach(approach)
        entry.t_m = schedule_entry_time(entry, pred, relation, appr.control_length,
                                        appr.conflict_length, appr.speed, self.params)
        entry.t_f = entry.t_m + appr.conflict_length / appr.speed
        entry.relation_to_predecessor = relation
        entry.info = InfoSet(p, v0, frozenset(same), frozenset(cross), entry.t_m)

        self.queue[vehicle] = entry
        self._last = entry
        self._open[vehicle] = self.ledger.open(entry)
        return entry

    def register_batch(self, arrivals, rng) -> list[QueueEntry]:
        """Register vehicles that crossed the control entry in the same tick.

        ``arrivals`` holds ``(vehicle, approach, t, v0)``; their queue order is
        a seeded random permutation.
        """
        arrivals = list(arrivals)
        order = list(range(len(arrivals)))
        if len(arrivals) > 1:
            order = [int(k) for k in rng.permutation(len(arrivals))]
        return [self.register(*arrivals[k]) for k in order]

    def predecessor(self, vehicle: int) -> QueueEntry | None:
        entry = self.queue[vehicle]
        for other in self.queue.values():
            if other.index == entry.index - 1:
                return other
        return None

    def release(self, vehicle: int, t: float) -> QueueEntry:
        try:
            entry = self.queue.pop(vehicle)
        except KeyError:
            raise ProtocolError(f"vehicle {vehicle} is not registered in zone {self.zone.id}") from None
        item = self._open.pop(vehicle)
        item.realized_exit = t
        if t > item.t_f + self.late_tolerance:
            item.late = True
            msg = (f"zone {self.zone.id}: vehicle {vehicle} exited at {t:.6g} s, "
                   f"scheduled {item.t_f:.6g} s")
            self.ledger.warnings.append(msg)
            log.warning(msg)
        return entry


def audit_ledger(ledger: OccupancyLedger, zone: ZoneSpec, use_realized: bool = False,
                 tol: float = 1e-9) -> list[dict]:
    """Report every overlapping pair of intervals on crossing approaches.

    Intervals are treated as half-open ``[t_m, t_f)`` so back-to-back
    occupancy is not a violation.
    """
    items = ledger.intervals
    out = []
    for x in range(len(items)):
        a = items[x]
        a_end = a.realized_exit if use_realized and a.realized_exit is not None else a.t_f
        for y in range(x + 1, len(items)):
            b = items[y]
            if conflict_relation(zone, a.approach, b.approach) != CROSSING:
                continue
            b_end = b.realized_exit if use_realized and b.realized_exit is not None else b.t_f
            overlap = min(a_end, b_end) - max(a.t_m, b.t_m)
            if overlap > tol:
                out.append({"zone": zone.id, "vehicles": (a.vehicle, b.vehicle),
                            "approaches": (a.approach, b.approach), "overlap": overlap})
    return out
