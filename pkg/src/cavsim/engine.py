"""Deterministic fixed-step simulation of a looped road network.

One tick of length ``dt``:

1. every vehicle's control is computed from the frozen state at ``t``;
2. the state at ``t`` is recorded;
3. states are advanced to ``t + dt``;
4. zone boundary crossings are resolved in a fixed order: conflict exits,
   conflict entries, control entries (grouped per zone), each sorted by
   route id then arc-length.

In ``optimal`` mode a vehicle entering a control zone registers with that
zone's coordinator, receives its conflict entry time and follows the
resulting closed-form plan with position authority. It crosses the
conflict zone at the imposed speed and reverts to car following on exit.
In ``baseline`` mode every vehicle car-follows, with virtual stationary
leaders at red signals and at yield lines.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .baseline import (
    CAR_FOLLOWING_MODELS, COLLISION, GREEN, DriverParams, LeaderView, SignalPlan, signal_state,
    yield_decision,
)
from .coordinator import Coordinator, audit_ledger
from .dynamics import VehicleParams, advance, safe_distance
from .exceptions import ConfigurationError, InfeasiblePlanError
from .network import (
    CONFLICT, CONTROL, CROSSING, OPEN, Network, ZoneContext, conflict_relation, validate_network,
    zone_context,
)
from .planner import check_feasibility, solve_boundary, verify_rear_end

log = logging.getLogger(__name__)

BASELINE = "baseline"
OPTIMAL = "optimal"
MODES = (BASELINE, OPTIMAL)

TRACE_HEADER = ("t", "vehicle", "route", "p", "v", "u", "zone", "queue_index", "t_zm", "flags")


@dataclass(frozen=True)
class FleetVehicle:
    id: int
    route: str
    position: float
    speed: float
    ego: bool = False


@dataclass(frozen=True)
class ScenarioConfig:
    network: Network
    fleet: tuple[FleetVehicle, ...]
    mode: str = OPTIMAL
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    driver: DriverParams = field(default_factory=DriverParams)
    signals: dict = field(default_factory=dict)
    dt: float = 0.02
    duration: float = 80.0
    seed: int = 1
    position_jitter: float = 0.0
    random_driver_factor: bool = True
    name: str = "scenario"

    @property
    def ego_ids(self) -> tuple[int, ...]:
        return tuple(v.id for v in self.fleet if v.ego)

    @property
    def n_ticks(self) -> int:
        return int(round(self.duration / self.dt))

    def with_(self, **changes) -> "ScenarioConfig":
        return replace(self, **changes)


def validate_config(config: ScenarioConfig) -> list[str]:
    """Network plus scenario invariants; empty list when runnable."""
    out = list(config.vehicle.violations())
    out.extend(config.driver.violations())
    out.extend(validate_network(config.network, config.vehicle))
    if config.mode not in MODES:
        out.append(f"scenario.mode: must be one of {MODES} (got {config.mode!r})")
    if not 0 < config.dt <= 0.1:
        out.append(f"scenario.dt: need 0 < dt <= 0.1 (got {config.dt})")
    if not config.duration > 0:
        out.append(f"scenario.duration: must be > 0 (got {config.duration})")
    if config.position_jitter < 0:
        out.append("fleet.position_jitter: must be >= 0")
    if not config.fleet:
        out.append("fleet: no vehicles")
    ids = [v.id for v in config.fleet]
    if len(ids) != len(set(ids)):
        out.append("fleet: duplicate vehicle ids")

    jit = config.position_jitter
    by_route: dict[str, list[FleetVehicle]] = {}
    for veh in config.fleet:
        if veh.route not in config.network.routes:
            out.append(f"fleet vehicle {veh.id}: unknown route {veh.route!r}")
            continue
        by_route.setdefault(veh.route, []).append(veh)
        route = config.network.routes[veh.route]
        if not 0 <= veh.position < route.total_length:
            out.append(f"fleet vehicle {veh.id}: position {veh.position} outside route")
            continue
        if veh.speed < 0:
            out.append(f"fleet vehicle {veh.id}: negative initial speed")
        for c in route.crossings:
            if c.control_entry - jit <= veh.position <= c.conflict_exit + jit:
                out.append(f"fleet vehicle {veh.id}: initial position {veh.position} inside "
                           f"zone {c.zone} (control zones must start empty)")
    for route_id, vehs in by_route.items():
        total = config.network.routes[route_id].total_length
        vehs = sorted(vehs, key=lambda v: v.position)
        min_gap = config.vehicle.length + config.vehicle.standstill + 2 * jit
        for k, veh in enumerate(vehs):
            ahead = vehs[(k + 1) % len(vehs)]
            if ahead is veh:
                continue
            d = (ahead.position - veh.position) % total
            if d <= min_gap:
                out.append(f"route {route_id}: vehicles {veh.id} and {ahead.id} start "
                           f"{d:.3g} m apart (need > {min_gap:.3g})")

    for zone in config.network.zones.values():
        signalled = [a.id for a in zone.approaches if a.priority == "signal"]
        if signalled:
            plan = config.signals.get(zone.id)
            if plan is None:
                out.append(f"zone {zone.id}: signalled approaches but no signal plan")
            else:
                out.extend(plan.violations(signalled))
        for a in zone.approaches:
            if a.priority not in ("major", "minor", "signal"):
                out.append(f"zone {zone.id} approach {a.id}: unknown priority {a.priority!r}")
    for zone_id in config.signals:
        if zone_id not in config.network.zones:
            out.append(f"signal plan for unknown zone {zone_id!r}")
    return out


class Trace:
    """Row-oriented trace, one row per vehicle per tick, ordered by (t, vehicle)."""

    def __init__(self, rows=None):
        self.rows = rows if rows is not None else []
        self._columns = None

    def __len__(self):
        return len(self.rows)

    def columns(self) -> dict:
        if self._columns is None:
            cols = list(zip(*self.rows)) if self.rows else [()] * len(TRACE_HEADER)
            self._columns = {
                "t": np.asarray(cols[0], dtype=float),
                "vehicle": np.asarray(cols[1], dtype=int),
                "route": np.asarray(cols[2], dtype=object),
                "p": np.asarray(cols[3], dtype=float),
                "v": np.asarray(cols[4], dtype=float),
                "u": np.asarray(cols[5], dtype=float),
                "zone": np.asarray(cols[6], dtype=object),
                "queue_index": np.asarray([-1 if q is None else q for q in cols[7]], dtype=int),
                "t_zm": np.asarray([math.nan if x is None else x for x in cols[8]], dtype=float),
                "flags": np.asarray(cols[9], dtype=object),
            }
        return self._columns

    def vehicle_ids(self) -> list[int]:
        return sorted(set(int(x) for x in self.columns()["vehicle"]))

    def series(self, vehicle: int) -> dict:
        cols = self.columns()
        mask = cols["vehicle"] == vehicle
        return {k: v[mask] for k, v in cols.items()}

    def route_of(self, vehicle: int) -> str:
        for row in self.rows:
            if row[1] == vehicle:
                return row[2]
        raise KeyError(vehicle)


@dataclass
class RunResult:
    config: ScenarioConfig
    trace: Trace
    ledgers: dict
    events: list
    drivers: dict

    def events_of(self, kind: str) -> list:
        return [e for e in self.events if e["type"] == kind]

    def audit(self) -> list:
        out = []
        for zone_id, ledger in sorted(self.ledgers.items()):
            out.extend(audit_ledger(ledger, self.config.network.zones[zone_id]))
        return out

    def ledger_records(self):
        for zone_id in sorted(self.ledgers):
            yield from self.ledgers[zone_id].records()


class _Car:
    __slots__ = (
        "id", "route", "rid", "length_route", "odo", "v", "u", "ego", "driver", "follow",
        "events", "ev_idx", "lap", "ctx", "crossing", "plan", "plan_entry_odo", "plan_vz",
        "t_m", "entry", "conflict_odo", "const_speed", "flags", "committed", "held",
        "pieces", "length", "contacts", "wrapped", "conflict_crossing", "hold_until",
    )


def _route_events(route):
    """Sorted (offset, kind, crossing) boundaries of one lap of ``route``."""
    out = []
    for c in route.crossings:
        out.append((c.control_entry, 2, c))
        out.append((c.conflict_entry, 1, c))
        out.append((c.conflict_exit, 0, c))
    out.sort(key=lambda e: (e[0], e[1]))
    return out


def _seeds(seed: int):
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    fleet_ss, driver_ss, coord_ss = ss.spawn(3)
    return (np.random.default_rng(fleet_ss), np.random.default_rng(driver_ss),
            np.random.default_rng(coord_ss))


class Simulation:
    """Stateful runner behind :func:`run`; exposed for step-wise tests."""

    def __init__(self, config: ScenarioConfig):
        problems = validate_config(config)
        if problems:
            raise ConfigurationError("invalid scenario: " + "; ".join(problems))
        self.config = config
        self.net = config.network
        self.params = config.vehicle
        self.dt = config.dt
        self.optimal = config.mode == OPTIMAL
        fleet_rng, driver_rng, self.coord_rng = _seeds(config.seed)

        self.coordinators = {}
        if self.optimal:
            for zone_id in sorted(self.net.zones):
                self.coordinators[zone_id] = Coordinator(self.net.zones[zone_id], self.params)

        route_ids = sorted(self.net.routes)
        self._route_events = {r: _route_events(self.net.routes[r]) for r in route_ids}
        self._route_pieces = {r: [] for r in route_ids}
        for lane_idx, lane in enumerate(self.net.shared_lanes):
            for route_id, start, length in lane.pieces:
                self._route_pieces[route_id].append((lane_idx, start, length))
        self._labels = {}
        for r in route_ids:
            for c in self.net.routes[r].crossings:
                self._labels[(CONTROL, c)] = f"{CONTROL}:{c.zone}:{c.approach}"
                self._labels[(CONFLICT, c)] = f"{CONFLICT}:{c.zone}:{c.approach}"

        self.cars: list[_Car] = []
        self.drivers = {}
        for veh in sorted(config.fleet, key=lambda v: v.id):
            jitter = fleet_rng.uniform(-1.0, 1.0) * config.position_jitter
            z = driver_rng.uniform(0.0, 1.0) if config.random_driver_factor else config.driver.z
            route = self.net.routes[veh.route]
            car = _Car()
            car.id = veh.id
            car.route = route
            car.rid = veh.route
            car.length_route = route.total_length
            car.odo = (veh.position + jitter) % route.total_length
            car.v = veh.speed
            car.u = 0.0
            car.ego = veh.ego
            car.driver = replace(config.driver, z=float(z))
            car.follow = CAR_FOLLOWING_MODELS[car.driver.model]
            car.length = self.params.length
            car.plan = None
            car.plan_entry_odo = 0.0
            car.plan_vz = 0.0
            car.t_m = math.nan
            car.entry = None
            car.conflict_odo = 0.0
            car.conflict_crossing = None
            car.const_speed = None
            car.hold_until = None
            car.flags = ""
            car.committed = False
            car.held = False
            car.contacts = set()
            car.pieces = self._route_pieces[veh.route]
            ctx = zone_context(route, car.odo)
            car.ctx = ctx.kind
            car.crossing = None
            evs = self._route_events[veh.route]
            car.events = evs
            car.lap = 0
            car.ev_idx = 0
            while car.ev_idx < len(evs) and evs[car.ev_idx][0] <= car.odo:
                car.ev_idx += 1
            self.drivers[veh.id] = car.driver
            self.cars.append(car)

        self.rows = []
        self.events = []
        self.t = 0.0
        self.k = 0
        self.by_zone_approach_last = {}

    # -- snapshot queries ---------------------------------------------------

    def _snapshot(self):
        order = {}
        for car in self.cars:
            car.wrapped = car.odo % car.length_route
            order.setdefault(car.rid, []).append(car)
        nxt = {}
        for cars in order.values():
            cars.sort(key=lambda c: (c.wrapped, c.id))
            n = len(cars)
            for k, car in enumerate(cars):
                nxt[car.id] = cars[(k + 1) % n] if n > 1 else None
        lanes = [[] for _ in self.net.shared_lanes]
        for car in self.cars:
            for lane_idx, start, length in car.pieces:
                q = (car.wrapped - start) % car.length_route
                if q < length:
                    lanes[lane_idx].append((q, car))
        self._next = nxt
        self._lanes = lanes

    def leader_of(self, car: _Car, lookahead: float | None = None):
        """Nearest vehicle ahead on ``car``'s path: (distance, leader) or None."""
        if lookahead is None:
            lookahead = car.driver.perception_range
        best_d, best = math.inf, None
        other = self._next.get(car.id)
        if other is not None:
            d = (other.wrapped - car.wrapped) % car.length_route
            if d > 0:
                best_d, best = d, other
        Lr = car.length_route
        for lane_idx, start, length in car.pieces:
            rel = (car.wrapped - start) % Lr
            members = self._lanes[lane_idx]
            if rel < length:
                for q, o in members:
                    if o.rid != car.rid and q > rel and q - rel < best_d:
                        best_d, best = q - rel, o
            else:
                d0 = Lr - rel
                if d0 >= best_d:
                    continue
                for q, o in members:
                    # a leader only partly on the shared pavement has its rear
                    # on its own approach lane, clear of this path
                    d = d0 + max(q, o.length)
                    if o.rid != car.rid and d < best_d:
                        best_d, best = d, o
        if best is None or best_d > lookahead:
            return None
        return best_d, best

    # -- control ------------------------------------------------------------

    def _virtual_leader(self, car: _Car, t: float):
        """Stop-bar or yield-line leader for baseline vehicles in control zones."""
        c = car.crossing
        if car.ctx != CONTROL or c is None or car.committed:
            return None
        zone = self.net.zones[c.zone]
        appr = zone.approach(c.approach)
        d_line = c.conflict_entry - car.wrapped
        if appr.priority == "signal":
            state, _ = signal_state(self.config.signals[c.zone], c.approach, t)
            if state == GREEN:
                car.held = False
                return None
            if not car.held:
                need = car.v * car.v / (2.0 * max(d_line - car.driver.ax, 1e-2))
                if need > car.driver.comfortable_decel:
                    car.committed = True
                    return None
            car.held = True
            car.flags = "signal_held"
            return LeaderView(d_line, 0.0, None, "stop_bar")
        if appr.priority == "minor":
            majors, occupied = [], False
            for o in self.cars:
                oc = o.crossing
                if o is car or oc is None or oc.zone != c.zone:
                    continue
                if conflict_relation(zone, c.approach, oc.approach) != CROSSING:
                    continue
                if o.ctx == CONFLICT:
                    occupied = True
                elif o.ctx == CONTROL and zone.approach(oc.approach).priority == "major":
                    majors.append((oc.conflict_entry - o.wrapped, o.v))
            decision = yield_decision(majors, car.driver.critical_gap, occupied)
            if decision.proceed:
                need = car.v * car.v / (2.0 * max(d_line - car.driver.ax, 1e-2))
                if need > car.driver.comfortable_decel or d_line < car.driver.ax + 0.5:
                    car.committed = True
                car.held = False
                return None
            car.held = True
            car.flags = "yield_held"
            return LeaderView(d_line, 0.0, None, "yield_line")
        return None

    def _car_following(self, car: _Car, t: float) -> float:
        lv = None
        found = self.leader_of(car)
        if found is not None:
            d, other = found
            lv = LeaderView(d - other.length, other.v, other.id)
        if not self.optimal:
            virtual = self._virtual_leader(car, t)
            if virtual is not None and (lv is None or virtual.gap < lv.gap):
                lv = virtual
        u, regime = car.follow(car.v, lv, car.driver, self.dt)
        u = min(max(u, -car.driver.emergency_decel), car.driver.max_accel)
        if regime == COLLISION and lv is not None and lv.vehicle is not None:
            if lv.vehicle not in car.contacts:
                car.contacts.add(lv.vehicle)
                self.events.append({"type": "collision", "t": t, "vehicle": car.id,
                                    "leader": lv.vehicle, "gap": lv.gap})
        elif car.contacts and (lv is None or lv.gap > 0):
            car.contacts.clear()
        return u

    def _compute_controls(self, t: float):
        self._snapshot()
        for car in self.cars:
            car.flags = ""
            if car.plan is not None:
                plan = car.plan
                tau = t - plan.t0
                car.u = plan.a * tau + plan._B
            elif car.const_speed is not None:
                if car.hold_until is not None and t >= car.hold_until - 1e-9:
                    car.const_speed = car.hold_until = None
                    car.u = self._car_following(car, t)
                else:
                    car.u = 0.0
            else:
                car.u = self._car_following(car, t)

    # -- recording ------------------------------------------------------------

    def _record(self, t: float):
        rows = self.rows
        for car in self.cars:
            if car.ctx == OPEN or car.crossing is None:
                label = OPEN
            else:
                label = self._labels[(car.ctx, car.crossing)]
            entry = car.entry
            if entry is not None:
                qi, tzm = entry.index, entry.t_m
            else:
                qi, tzm = None, None
            rows.append((t, car.id, car.rid, car.odo, car.v, car.u, label, qi, tzm, car.flags))

    # -- integration and events ---------------------------------------------

    def _advance(self, t: float):
        dt = self.dt
        t_next = t + dt
        pending = []
        for car in self.cars:
            odo_old, v_old = car.odo, car.v
            if car.plan is not None:
                # plan-controlled: time, not the odometer, decides the conflict entry
                plan = car.plan
                if t_next < car.t_m:
                    tau = t_next - plan.t0
                    A, B, v0 = plan.a, plan._B, plan.boundary.v0
                    car.odo = car.plan_entry_odo + ((A * tau / 6.0 + B / 2.0) * tau + v0) * tau
                    car.v = (A * tau / 2.0 + B) * tau + v0
                else:
                    L = plan.boundary.pf
                    car.odo = car.plan_entry_odo + L + car.plan_vz * (t_next - car.t_m)
                    car.v = car.plan_vz
                    pending.append((1, car.rid, car.odo, car.id, car, ("plan", car.t_m)))
                continue
            elif car.const_speed is not None:
                car.odo += car.const_speed * dt
            else:
                car.odo, car.v = advance(car.odo, car.v, car.u, dt)
            self._scan_events(car, odo_old, v_old, t, pending)
        pending.sort(key=lambda e: (e[0], e[1], e[2], e[3]))
        self._process_events(pending, t_next)

    def _scan_events(self, car, odo_old, v_old, t, pending):
        evs = car.events
        if not evs:
            return
        moved = car.odo - odo_old
        while True:
            offset, kind, crossing = evs[car.ev_idx % len(evs)]
            at = offset + (car.lap + car.ev_idx // len(evs)) * car.length_route
            if car.odo < at:
                break
            frac = (at - odo_old) / moved if moved > 0 else 1.0
            te = t + frac * self.dt
            ve = v_old + frac * (car.v - v_old)
            pending.append((kind, car.rid, at, car.id, car, (te, ve, crossing, at)))
            car.ev_idx += 1
            if car.ev_idx >= len(evs):
                car.ev_idx -= len(evs)
                car.lap += 1

    def _process_events(self, pending, t_next):
        arrivals = {}
        for kind, _rid, _pos, _vid, car, info in pending:
            if kind == 0:
                self._conflict_exit(car, *info)
            elif kind == 1:
                if info[0] == "plan":
                    self._plan_ends(car, info[1])
                    self._skip_event(car, 1)
                else:
                    self._conflict_entry(car, *info)
            else:
                te, ve, crossing, at = info
                car.ctx = CONTROL
                car.crossing = crossing
                car.committed = False
                car.held = False
                if self.optimal:
                    arrivals.setdefault(crossing.zone, []).append((car, te, ve, at))
                self.events.append({"type": "control_entry", "t": te, "vehicle": car.id,
                                    "zone": crossing.zone, "approach": crossing.approach,
                                    "speed": ve})
        for zone_id in sorted(arrivals):
            self._register(zone_id, arrivals[zone_id], t_next)

    def _skip_event(self, car, kind):
        # the plan handled the conflict entry; move the odometer pointer past it
        evs = car.events
        offset, k, _ = evs[car.ev_idx % len(evs)]
        if k == kind:
            car.ev_idx += 1
            if car.ev_idx >= len(evs):
                car.ev_idx -= len(evs)
                car.lap += 1

    def _register(self, zone_id, cars, t_next):
        coord = self.coordinators[zone_id]
        zone = self.net.zones[zone_id]
        lookup = {car.id: (car, te, ve, at) for car, te, ve, at in cars}
        arrivals = [(car.id, car.crossing.approach, te, ve) for car, te, ve, at in cars]
        for entry in coord.register_batch(arrivals, self.coord_rng):
            car, te, ve, at = lookup[entry.vehicle]
            appr = zone.approach(entry.approach)
            plan = solve_boundary(te, entry.t_m, 0.0, appr.control_length, ve, appr.speed)
            feas = check_feasibility(plan, self.params)
            if not feas.feasible:
                worst = max(feas.violations, key=lambda x: x.magnitude)
                raise InfeasiblePlanError(
                    f"vehicle {car.id} in zone {zone_id}: {worst.describe()}",
                    vehicle=car.id, zone=zone_id, bound=worst.bound)
            car.plan = plan
            car.plan_entry_odo = at
            car.plan_vz = appr.speed
            car.t_m = entry.t_m
            car.entry = entry
            self.events.append({
                "type": "plan", "t": te, "vehicle": car.id, "zone": zone_id,
                "approach": entry.approach, "queue_index": entry.index, "t_m": entry.t_m,
                "t_f": entry.t_f, "v0": ve, "a": plan.a, "b": plan.b, "c": plan.c, "d": plan.d,
                "relation": entry.relation_to_predecessor,
            })
            key = (zone_id, entry.approach)
            prev = self.by_zone_approach_last.get(key)
            if prev is not None and prev.entry is not None and prev.crossing is not None \
                    and prev.crossing.zone == zone_id:
                self._check_rear_end(car, prev, zone_id)
            self.by_zone_approach_last[key] = car
            # position authority from the crossing instant onward
            if t_next < car.t_m:
                tau = t_next - plan.t0
                car.odo = at + ((plan.a * tau / 6.0 + plan._B / 2.0) * tau + ve) * tau
                car.v = (plan.a * tau / 2.0 + plan._B) * tau + ve

    def _check_rear_end(self, car, prev, zone_id):
        plan_i = car.plan
        if prev.plan is not None:
            plan_k = prev.plan
        else:
            return
        L = plan_k.boundary.pf
        bad = verify_rear_end(plan_i, plan_k, self.params, self.dt)
        if plan_i.tm > plan_k.tm:
            cruise = solve_boundary(plan_k.tm, plan_i.tm, L, L + prev.plan_vz * (plan_i.tm - plan_k.tm),
                                    prev.plan_vz, prev.plan_vz)
            bad += verify_rear_end(plan_i, cruise, self.params, self.dt)
        if bad:
            t_w, m_w = min(bad, key=lambda x: x[1])
            self.events.append({"type": "rear_end_warning", "t": plan_i.t0, "vehicle": car.id,
                                "leader": prev.id, "zone": zone_id, "samples": len(bad),
                                "worst_t": t_w, "worst_margin": m_w})

    def _plan_ends(self, car, t_m):
        crossing = car.crossing
        car.plan = None
        car.const_speed = car.plan_vz
        car.ctx = CONFLICT
        car.conflict_odo = car.plan_entry_odo + crossing.conflict_entry - crossing.control_entry
        car.conflict_crossing = crossing
        self._log_conflict_entry(car, t_m, crossing)

    def _conflict_entry(self, car, te, ve, crossing, at):
        car.ctx = CONFLICT
        car.crossing = crossing
        car.conflict_odo = at
        car.conflict_crossing = crossing
        self._log_conflict_entry(car, te, crossing)

    def _log_conflict_entry(self, car, te, crossing):
        event = {"type": "conflict_entry", "t": te, "vehicle": car.id, "zone": crossing.zone,
                 "approach": crossing.approach, "speed": car.v}
        if self.optimal and car.entry is not None:
            event["t_m"] = car.entry.t_m
            key = ("conflict", crossing.zone, crossing.approach)
            prev = self.by_zone_approach_last.get(key)
            if prev is not None and prev is not car and prev.conflict_crossing is crossing:
                # distance the predecessor has covered past the same conflict entry
                ahead = prev.odo - prev.conflict_odo
                behind = car.odo - car.conflict_odo
                spacing = ahead - behind
                event["predecessor"] = prev.id
                event["spacing"] = spacing
                event["required"] = safe_distance(car.plan_vz, self.params)
            self.by_zone_approach_last[key] = car
        self.events.append(event)

    def _conflict_exit(self, car, te, ve, crossing, at):
        if self.optimal and car.entry is not None:
            self.coordinators[crossing.zone].release(car.id, te)
            self.events.append({"type": "conflict_exit", "t": te, "vehicle": car.id,
                                "zone": crossing.zone, "scheduled": car.entry.t_f})
        else:
            self.events.append({"type": "conflict_exit", "t": te, "vehicle": car.id,
                                "zone": crossing.zone})
        car.ctx = OPEN
        car.crossing = None
        car.const_speed = None
        if self.optimal and car.entry is not None:
            # the same-lane follower's entry spacing assumes this car keeps the
            # zone speed for one safe headway past its own entry
            hold = car.entry.t_m + safe_distance(car.plan_vz, self.params) / car.plan_vz
            if hold > te:
                car.const_speed, car.hold_until = car.plan_vz, hold
        car.entry = None
        car.plan = None
        car.committed = False
        car.held = False

    # -- main loop ------------------------------------------------------------

    def run(self) -> RunResult:
        n = self.config.n_ticks
        dt = self.dt
        for k in range(n + 1):
            t = k * dt
            self._compute_controls(t)
            self._record(t)
            if k == n:
                break
            self._advance(t)
        ledgers = {z: c.ledger for z, c in self.coordinators.items()}
        for z, ledger in ledgers.items():
            for msg in ledger.warnings:
                self.events.append({"type": "late_exit", "zone": z, "message": msg})
        return RunResult(self.config, Trace(self.rows), ledgers, self.events, self.drivers)


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return f"{x + 0.0:.9g}"  # + 0.0 folds -0.0 into 0.0
    return str(x)


def write_trace(trace: Trace, path) -> None:
    """CSV with the fixed trace header; floats at 9 significant digits."""
    with open(path, "w", newline="") as fh:
        fh.write(",".join(TRACE_HEADER) + "\n")
        fh.writelines(",".join(map(_cell, row)) + "\n" for row in trace.rows)


def _round_floats(obj):
    if isinstance(obj, float):
        return float(f"{obj:.9g}") if math.isfinite(obj) else None
    if isinstance(obj, dict):
        return {str(k): _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round_floats(v) for v in obj]
    return obj


def write_jsonl(records, path) -> None:
    with open(path, "w") as fh:
        for rec in records:
            fh.write(json.dumps(_round_floats(rec), sort_keys=True) + "\n")


def run(config: ScenarioConfig) -> RunResult:
    """Run ``config`` to completion; identical configs give identical results."""
    return Simulation(config).run()


def snapshot_leader(car_position: float, route_length: float, others, lookahead: float,
                    virtual=()):
    """Leader resolution on a single loop, as used by the engine.

    ``others`` holds ``(vehicle id, arc-length)`` of the other vehicles on
    the same lane; ``virtual`` holds ``(kind, gap)`` virtual leaders such as
    a stop bar. Returns ``(kind or vehicle id, distance)`` or ``None``.
    """
    best = None
    for vid, pos in others:
        d = (pos - car_position) % route_length
        if 0 < d <= lookahead and (best is None or d < best[1]):
            best = (vid, d)
    for kind, gap in virtual:
        if gap <= lookahead and (best is None or gap < best[1]):
            best = (kind, gap)
    return best
