"""Scenario files: TOML documents describing network, fleet and parameters.

A scenario file has these top-level tables (see ``scenarios/reference.toml``):

``[scenario]``      name, mode, dt, duration, seed
``[vehicle]``       admissible ranges and spacing (``VehicleParams`` fields)
``[driver]``        human-driver model parameters (``DriverParams`` fields)
``[[zones]]``       id, kind, ``approaches`` and pairwise ``relations``
``[[routes]]``      id, loop, ``segments`` and zone ``crossings``
``[[shared_lanes]]`` pavement shared by several routes downstream of merges
``[[signals]]``     fixed-time plan per signalized zone
``[fleet]``         position_jitter, random_driver_factor, ``vehicles``
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import fields
from importlib import resources
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .baseline import DriverParams, Phase, SignalPlan
from .dynamics import VehicleParams
from .engine import FleetVehicle, ScenarioConfig
from .exceptions import ConfigurationError
from .network import (
    ArcSegment, Approach, LineSegment, Network, Route, SharedLane, ZoneCrossing, ZoneSpec,
)


class ScenarioParseError(ConfigurationError):
    """Unreadable or structurally malformed scenario file."""


class ScenarioReadError(ScenarioParseError):
    """The scenario file could not be read at all."""


def reference_path() -> Path:
    return Path(str(resources.files("cavsim") / "scenarios" / "reference.toml"))


def read_document(path) -> dict:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ScenarioReadError(f"{path}: cannot read ({exc.strerror})") from exc
    try:
        return tomllib.loads(raw.decode("utf-8"))
    except UnicodeDecodeError as exc:
        raise ScenarioParseError(f"{path}: not UTF-8 text ({exc})") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioParseError(f"{path}: {exc}") from exc


def config_hash(doc: dict) -> str:
    """SHA-256 of the canonical JSON form of a parsed scenario document."""
    canon = json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=True)
    return hashlib.sha256(canon.encode("ascii")).hexdigest()


def _get(table: dict, key: str, where: str, kind=float, default=...):
    if key not in table:
        if default is ...:
            raise ScenarioParseError(f"{where}.{key}: missing required field")
        return default
    value = table[key]
    try:
        if kind is float:
            if isinstance(value, bool):
                raise TypeError
            value = float(value)
            if not math.isfinite(value):
                raise ValueError
        elif kind is int:
            if isinstance(value, bool) or not isinstance(value, int):
                raise TypeError
        elif kind is str:
            if not isinstance(value, str):
                raise TypeError
        elif kind is bool:
            if not isinstance(value, bool):
                raise TypeError
        elif kind == "point":
            if len(value) != 2:
                raise ValueError
            value = (float(value[0]), float(value[1]))
    except (TypeError, ValueError):
        raise ScenarioParseError(f"{where}.{key}: expected {getattr(kind, '__name__', kind)}, "
                                 f"got {value!r}") from None
    return value


def _dataclass_from(cls, table: dict, where: str):
    known = {f.name: f for f in fields(cls)}
    unknown = set(table) - set(known)
    if unknown:
        raise ScenarioParseError(f"{where}: unknown field(s) {sorted(unknown)}")
    kwargs = {}
    for name, value in table.items():
        kind = str if isinstance(known[name].default, str) else float
        kwargs[name] = _get(table, name, where, kind)
    return cls(**kwargs)


def _segment(table: dict, where: str):
    kind = _get(table, "kind", where, str)
    length = _get(table, "length", where, float, None)
    if kind == "line":
        return LineSegment(_get(table, "start", where, "point"), _get(table, "end", where, "point"),
                           length)
    if kind == "arc":
        return ArcSegment(_get(table, "start", where, "point"), _get(table, "center", where, "point"),
                          _get(table, "radius", where), _get(table, "sweep", where), length)
    raise ScenarioParseError(f"{where}.kind: expected 'line' or 'arc', got {kind!r}")


def _zone(table: dict, where: str) -> ZoneSpec:
    zid = _get(table, "id", where, str)
    approaches = []
    for k, a in enumerate(table.get("approaches", [])):
        w = f"{where}.approaches[{k}]"
        approaches.append(Approach(
            _get(a, "id", w, str), _get(a, "control_length", w), _get(a, "conflict_length", w),
            _get(a, "speed", w), _get(a, "priority", w, str, "major"),
            _get(a, "downstream", w, str, None)))
    relations = {}
    for k, rel in enumerate(table.get("relations", [])):
        if not (isinstance(rel, list) and len(rel) == 3 and all(isinstance(x, str) for x in rel)):
            raise ScenarioParseError(f"{where}.relations[{k}]: expected [approach, approach, relation]")
        i, j, r = rel
        relations[(i, j)] = r
        relations[(j, i)] = r
    return ZoneSpec(zid, _get(table, "kind", where, str), tuple(approaches), relations)


def _route(table: dict, where: str, zones: dict) -> Route:
    rid = _get(table, "id", where, str)
    segments = tuple(_segment(s, f"{where}.segments[{k}]") for k, s in enumerate(table.get("segments", [])))
    crossings = []
    for k, c in enumerate(table.get("crossings", [])):
        w = f"{where}.crossings[{k}]"
        zone_id = _get(c, "zone", w, str)
        approach_id = _get(c, "approach", w, str)
        control = _get(c, "control_entry", w)
        L = S = math.nan
        if zone_id in zones:
            try:
                appr = zones[zone_id].approach(approach_id)
                L, S = appr.control_length, appr.conflict_length
            except ConfigurationError:
                pass
        entry = _get(c, "conflict_entry", w, float, control + L)
        exit_ = _get(c, "conflict_exit", w, float, entry + S)
        crossings.append(ZoneCrossing(zone_id, approach_id, control, entry, exit_))
    return Route(rid, segments, _get(table, "loop", where, bool, True), tuple(crossings))


def parse_scenario(doc: dict) -> ScenarioConfig:
    """Build a :class:`ScenarioConfig` from a parsed scenario document."""
    scen = doc.get("scenario", {})
    zones = {}
    for k, z in enumerate(doc.get("zones", [])):
        zone = _zone(z, f"zones[{k}]")
        zones[zone.id] = zone
    routes = {}
    for k, r in enumerate(doc.get("routes", [])):
        route = _route(r, f"routes[{k}]", zones)
        routes[route.id] = route
    shared = []
    for k, lane in enumerate(doc.get("shared_lanes", [])):
        w = f"shared_lanes[{k}]"
        pieces = tuple((_get(p, "route", f"{w}.pieces[{j}]", str), _get(p, "start", f"{w}.pieces[{j}]"),
                        _get(p, "length", f"{w}.pieces[{j}]"))
                       for j, p in enumerate(lane.get("pieces", [])))
        shared.append(SharedLane(_get(lane, "id", w, str), pieces))
    network = Network(routes, zones, tuple(shared))

    signals = {}
    for k, sig in enumerate(doc.get("signals", [])):
        w = f"signals[{k}]"
        phases = tuple(
            Phase(tuple(p.get("approaches", [])), _get(p, "green", f"{w}.phases[{j}]"),
                  _get(p, "intergreen", f"{w}.phases[{j}]", float, 0.0))
            for j, p in enumerate(sig.get("phases", [])))
        plan = SignalPlan(_get(sig, "zone", w, str), phases, _get(sig, "offset", w, float, 0.0))
        signals[plan.zone] = plan

    fleet_doc = doc.get("fleet", {})
    fleet = []
    for k, v in enumerate(fleet_doc.get("vehicles", [])):
        w = f"fleet.vehicles[{k}]"
        fleet.append(FleetVehicle(_get(v, "id", w, int), _get(v, "route", w, str),
                                  _get(v, "position", w), _get(v, "speed", w, float, 0.0),
                                  _get(v, "ego", w, bool, False)))

    return ScenarioConfig(
        network=network,
        fleet=tuple(fleet),
        mode=_get(scen, "mode", "scenario", str, "optimal"),
        vehicle=_dataclass_from(VehicleParams, doc.get("vehicle", {}), "vehicle"),
        driver=_dataclass_from(DriverParams, doc.get("driver", {}), "driver"),
        signals=signals,
        dt=_get(scen, "dt", "scenario", float, 0.02),
        duration=_get(scen, "duration", "scenario", float, 80.0),
        seed=_get(scen, "seed", "scenario", int, 1),
        position_jitter=_get(fleet_doc, "position_jitter", "fleet", float, 0.0),
        random_driver_factor=_get(fleet_doc, "random_driver_factor", "fleet", bool, True),
        name=_get(scen, "name", "scenario", str, "scenario"),
    )


def load_scenario(path=None, **overrides) -> ScenarioConfig:
    """Load a scenario file (the bundled reference scenario by default).

    Keyword overrides (``mode``, ``seed``, ``dt``, ``duration``) replace the
    file values; ``None`` leaves them untouched.
    """
    doc = read_document(reference_path() if path is None else path)
    config = parse_scenario(doc)
    changes = {k: v for k, v in overrides.items() if v is not None}
    return config.with_(**changes) if changes else config
