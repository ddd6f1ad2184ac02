"""Instance documents, the five-city artificial generator and subset extraction.

Document format (UTF-8 JSON, keys in this order)::

    {
      "horizonEnd": 1440,
      "stations": ["Berlin", ...],
      "distanceKm": {"Berlin": {"Berlin": 0, "Cologne": 576, ...}, ...},
      "durationMin": {"Berlin": {"Berlin": 0, "Cologne": 260, ...}, ...},
      "trips": [{"id": 0, "departureStation": ..., "arrivalStation": ...,
                 "departureTime": ..., "arrivalTime": ..., "distance": ...,
                 "duration": ..., "postProc": ...}, ...],
      "trains": [{"id": 0, "initialStation": ..., "earliestTime": ...,
                  "initialKm": {"0": 5120, "1": 301}}, ...],
      "maintenanceTypes": [{"id": 0, "stations": [...], "duration": ...,
                            "isPeriodic": true, "limit": 8000}, ...]
    }

Matrix rows and columns follow the order of ``stations``. ``initialKm`` is
keyed by maintenance type id (as a string, JSON objects only have string
keys).
"""
from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .model import (
    EmptyRide,
    Instance,
    MaintenanceTask,
    MaintenanceType,
    Network,
    RegularTrip,
    Schedule,
    Train,
    Trip,
    validate_instance,
)


class InstanceFormatError(ValueError):
    """Document is not well-formed; ``path`` points at the offending field."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


class InstanceValidationError(ValueError):
    def __init__(self, violations: Sequence[str]):
        super().__init__("invalid instance: " + "; ".join(violations))
        self.violations = list(violations)


class GeneratorConfigError(ValueError):
    pass


# -- parsing -----------------------------------------------------------------

def _int(obj: Any, path: str) -> int:
    if isinstance(obj, bool) or not isinstance(obj, int):
        raise InstanceFormatError(path, f"expected integer, got {obj!r}")
    return obj


def _str(obj: Any, path: str) -> str:
    if not isinstance(obj, str):
        raise InstanceFormatError(path, f"expected string, got {obj!r}")
    return obj


def _get(obj: Mapping, key: str, path: str) -> Any:
    if not isinstance(obj, Mapping):
        raise InstanceFormatError(path, "expected object")
    if key not in obj:
        raise InstanceFormatError(f"{path}.{key}", "missing field")
    return obj[key]


def _list(obj: Any, path: str) -> list:
    if not isinstance(obj, list):
        raise InstanceFormatError(path, "expected array")
    return obj


def _matrix(doc: Mapping, key: str, stations: Sequence[str]) -> dict[tuple[str, str], int]:
    rows = _get(doc, key, "$")
    if not isinstance(rows, Mapping):
        raise InstanceFormatError(f"$.{key}", "expected object")
    table = {}
    for b, row in rows.items():
        if not isinstance(row, Mapping):
            raise InstanceFormatError(f"$.{key}.{b}", "expected object")
        for c, v in row.items():
            table[b, c] = _int(v, f"$.{key}.{b}.{c}")
    return table


def instance_from_dict(doc: Mapping) -> Instance:
    """Build an instance from a decoded document without validating it."""
    e = _int(_get(doc, "horizonEnd", "$"), "$.horizonEnd")
    stations = tuple(_str(s, f"$.stations[{k}]") for k, s in enumerate(_list(_get(doc, "stations", "$"), "$.stations")))
    net = Network(stations, _matrix(doc, "distanceKm", stations), _matrix(doc, "durationMin", stations))

    trips = []
    for k, t in enumerate(_list(_get(doc, "trips", "$"), "$.trips")):
        p = f"$.trips[{k}]"
        trips.append(Trip(
            id=_int(_get(t, "id", p), p + ".id"),
            departure_station=_str(_get(t, "departureStation", p), p + ".departureStation"),
            arrival_station=_str(_get(t, "arrivalStation", p), p + ".arrivalStation"),
            departure_time=_int(_get(t, "departureTime", p), p + ".departureTime"),
            arrival_time=_int(_get(t, "arrivalTime", p), p + ".arrivalTime"),
            distance=_int(_get(t, "distance", p), p + ".distance"),
            duration=_int(_get(t, "duration", p), p + ".duration"),
            post_proc=_int(_get(t, "postProc", p), p + ".postProc"),
        ))

    types = []
    for k, w in enumerate(_list(_get(doc, "maintenanceTypes", "$"), "$.maintenanceTypes")):
        p = f"$.maintenanceTypes[{k}]"
        periodic = _get(w, "isPeriodic", p)
        if not isinstance(periodic, bool):
            raise InstanceFormatError(p + ".isPeriodic", "expected boolean")
        types.append(MaintenanceType(
            id=_int(_get(w, "id", p), p + ".id"),
            stations=tuple(_str(s, f"{p}.stations[{i}]") for i, s in enumerate(_list(_get(w, "stations", p), p + ".stations"))),
            duration=_int(_get(w, "duration", p), p + ".duration"),
            is_periodic=periodic,
            limit=_int(_get(w, "limit", p), p + ".limit"),
        ))

    trains = []
    for k, z in enumerate(_list(_get(doc, "trains", "$"), "$.trains")):
        p = f"$.trains[{k}]"
        raw_km = _get(z, "initialKm", p)
        if not isinstance(raw_km, Mapping):
            raise InstanceFormatError(p + ".initialKm", "expected object")
        initial_km = {}
        for u, km in raw_km.items():
            try:
                uid = int(u)
            except ValueError:
                raise InstanceFormatError(f"{p}.initialKm.{u}", "key must be a maintenance type id") from None
            initial_km[uid] = _int(km, f"{p}.initialKm.{u}")
        trains.append(Train(
            id=_int(_get(z, "id", p), p + ".id"),
            initial_station=_str(_get(z, "initialStation", p), p + ".initialStation"),
            earliest_time=_int(_get(z, "earliestTime", p), p + ".earliestTime"),
            initial_km=initial_km,
        ))
    return Instance(e, net, tuple(trips), tuple(trains), tuple(types))


def parse_instance(document: str | bytes) -> Instance:
    """Parse and validate an instance document."""
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno} col {exc.colno}", exc.msg) from None
    inst = instance_from_dict(doc)
    violations = validate_instance(inst)
    if violations:
        raise InstanceValidationError(violations)
    return inst


# -- writing -----------------------------------------------------------------

def instance_to_dict(inst: Instance) -> dict:
    net = inst.network
    return {
        "horizonEnd": inst.horizon_end,
        "stations": list(net.stations),
        "distanceKm": {b: {c: net.distance(b, c) for c in net.stations} for b in net.stations},
        "durationMin": {b: {c: net.duration(b, c) for c in net.stations} for b in net.stations},
        "trips": [
            {
                "id": f.id,
                "departureStation": f.departure_station,
                "arrivalStation": f.arrival_station,
                "departureTime": f.departure_time,
                "arrivalTime": f.arrival_time,
                "distance": f.distance,
                "duration": f.duration,
                "postProc": f.post_proc,
            }
            for f in inst.trips
        ],
        "trains": [
            {
                "id": z.id,
                "initialStation": z.initial_station,
                "earliestTime": z.earliest_time,
                "initialKm": {str(u): z.initial_km[u] for u in sorted(z.initial_km)},
            }
            for z in inst.trains
        ],
        "maintenanceTypes": [
            {
                "id": w.id,
                "stations": list(w.stations),
                "duration": w.duration,
                "isPeriodic": w.is_periodic,
                "limit": w.limit,
            }
            for w in inst.maintenance_types
        ],
    }


def write_instance(inst: Instance) -> str:
    """Canonical serialisation; equal instances give identical text."""
    if not inst.trips:
        raise InstanceValidationError(["instance has no trips"])
    violations = validate_instance(inst)
    if violations:
        raise InstanceValidationError(violations)
    return json.dumps(instance_to_dict(inst), indent=2, ensure_ascii=False) + "\n"


# -- artificial generator ----------------------------------------------------

CITIES = ("Berlin", "Frankfurt", "Hamburg", "Munich", "Cologne")

# (km, minutes), symmetric. Only Munich-Cologne is a published figure; the
# other entries are rough ICE values picked to satisfy the triangle
# inequality in both columns.
DEFAULT_TABLE: dict[tuple[str, str], tuple[int, int]] = {
    ("Berlin", "Hamburg"): (289, 105),
    ("Berlin", "Frankfurt"): (545, 240),
    ("Berlin", "Munich"): (623, 240),
    ("Berlin", "Cologne"): (576, 260),
    ("Frankfurt", "Hamburg"): (492, 220),
    ("Frankfurt", "Munich"): (400, 200),
    ("Frankfurt", "Cologne"): (177, 65),
    ("Hamburg", "Munich"): (775, 345),
    ("Hamburg", "Cologne"): (427, 240),
    ("Munich", "Cologne"): (570, 259),
}


@dataclass(frozen=True)
class MaintenanceSpec:
    stations: tuple[str, ...]
    duration: int
    limit: int
    is_periodic: bool = True


DEFAULT_MAINTENANCE = (
    MaintenanceSpec(("Berlin", "Munich"), 240, 8000),
    MaintenanceSpec(("Frankfurt",), 480, 24000),
)


@dataclass(frozen=True)
class GeneratorConfig:
    trip_count: int = 72
    train_count: int = 39
    seed: int = 0
    cities: tuple[str, ...] = CITIES
    horizon_end: int = 1440
    post_proc: int = 120
    earliest_time: int = 0
    maintenance: tuple[MaintenanceSpec, ...] = DEFAULT_MAINTENANCE
    table: Mapping[tuple[str, str], tuple[int, int]] = field(default_factory=lambda: dict(DEFAULT_TABLE))

    def leg(self, a: str, b: str) -> tuple[int, int]:
        if a == b:
            return 0, 0
        if (a, b) in self.table:
            return self.table[a, b]
        if (b, a) in self.table:
            return self.table[b, a]
        raise GeneratorConfigError(f"no distance/duration for {a} - {b}")


def generate_artificial(cfg: GeneratorConfig = GeneratorConfig()) -> Instance:
    """Random timetable between the configured cities.

    Departures are uniform over ``[0, e - duration)``; initial km readings
    are uniform over ``[0, limit)`` per maintenance type.
    """
    if cfg.trip_count <= 0 or cfg.train_count <= 0:
        raise GeneratorConfigError("trip_count and train_count must be positive")
    if len(cfg.cities) < 2:
        raise GeneratorConfigError("need at least two cities")
    cities = tuple(cfg.cities)
    legs = {(a, b): cfg.leg(a, b) for a in cities for b in cities}
    for spec in cfg.maintenance:
        if not set(spec.stations) <= set(cities):
            raise GeneratorConfigError(f"maintenance station outside configured cities: {spec.stations}")
    for a, b in legs:
        if a != b and legs[a, b][1] >= cfg.horizon_end:
            raise GeneratorConfigError(f"leg {a}-{b} does not fit into the horizon")

    rng = random.Random(cfg.seed)
    raw = []
    for _ in range(cfg.trip_count):
        dep = rng.choice(cities)
        arr = rng.choice([c for c in cities if c != dep])
        km, minutes = legs[dep, arr]
        t0 = rng.randrange(0, cfg.horizon_end - minutes)
        raw.append((t0, dep, arr, km, minutes))
    raw.sort(key=lambda r: (r[0], cities.index(r[1]), cities.index(r[2])))
    trips = tuple(
        Trip(k, dep, arr, t0, t0 + minutes, km, minutes, cfg.post_proc)
        for k, (t0, dep, arr, km, minutes) in enumerate(raw)
    )
    types = tuple(
        MaintenanceType(u, tuple(s.stations), s.duration, s.is_periodic, s.limit)
        for u, s in enumerate(cfg.maintenance)
    )
    trains = tuple(
        Train(i, rng.choice(cities), cfg.earliest_time, {w.id: rng.randrange(0, w.limit) for w in types})
        for i in range(cfg.train_count)
    )
    net = Network(
        cities,
        {(a, b): legs[a, b][0] for a in cities for b in cities},
        {(a, b): legs[a, b][1] for a in cities for b in cities},
    )
    return Instance(cfg.horizon_end, net, trips, trains, types)


def subset_instance(inst: Instance, fraction: float, seed: int = 0) -> Instance:
    """Keep ceil(fraction * n) trips and ceil(fraction * m) trains, re-indexed."""
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    n_keep = math.ceil(round(fraction * inst.n, 9))
    m_keep = math.ceil(round(fraction * inst.m, 9))
    rng = random.Random(seed)
    trip_idx = sorted(rng.sample(range(inst.n), n_keep))
    train_idx = sorted(rng.sample(range(inst.m), m_keep))
    trips = tuple(
        Trip(k, f.departure_station, f.arrival_station, f.departure_time, f.arrival_time, f.distance, f.duration, f.post_proc)
        for k, f in enumerate(inst.trips[i] for i in trip_idx)
    )
    trains = tuple(
        Train(k, z.initial_station, z.earliest_time, dict(z.initial_km))
        for k, z in enumerate(inst.trains[i] for i in train_idx)
    )
    return Instance(inst.horizon_end, inst.network, trips, trains, inst.maintenance_types)


# -- schedules ---------------------------------------------------------------

def schedule_to_dict(sched: Schedule) -> dict:
    """``{"trains": [{"train": i, "activities": [...]}, ...]}`` in train order."""
    trains = []
    for z in sorted(sched.per_train):
        acts = []
        for a in sched.per_train[z]:
            if isinstance(a, RegularTrip):
                acts.append({"kind": "trip", "trip": a.trip, "slot": a.slot})
            elif isinstance(a, MaintenanceTask):
                acts.append({"kind": "maintenance", "type": a.type, "station": a.station})
            else:
                acts.append({"kind": "empty", "origin": a.origin, "destination": a.destination, "km": a.km})
        trains.append({"train": z, "activities": acts})
    return {"trains": trains}


def schedule_from_dict(doc: Mapping) -> Schedule:
    per_train = {}
    for k, entry in enumerate(_list(_get(doc, "trains", "$"), "$.trains")):
        p = f"$.trains[{k}]"
        z = _int(_get(entry, "train", p), p + ".train")
        acts = []
        for j, a in enumerate(_list(_get(entry, "activities", p), p + ".activities")):
            q = f"{p}.activities[{j}]"
            kind = _get(a, "kind", q)
            if kind == "trip":
                slot = a.get("slot")
                acts.append(RegularTrip(_int(_get(a, "trip", q), q + ".trip"),
                                        None if slot is None else _int(slot, q + ".slot")))
            elif kind == "maintenance":
                acts.append(MaintenanceTask(_int(_get(a, "type", q), q + ".type"), _str(_get(a, "station", q), q + ".station")))
            elif kind == "empty":
                acts.append(EmptyRide(_str(_get(a, "origin", q), q + ".origin"),
                                      _str(_get(a, "destination", q), q + ".destination"),
                                      _int(_get(a, "km", q), q + ".km")))
            else:
                raise InstanceFormatError(q + ".kind", f"unknown activity kind {kind!r}")
        if z in per_train:
            raise InstanceFormatError(p + ".train", f"train {z} listed twice")
        per_train[z] = tuple(acts)
    return Schedule(per_train)


def write_schedule(sched: Schedule, **extra) -> str:
    """Schedule document; ``extra`` keys (objective, metrics, ...) go first."""
    return json.dumps({**extra, **schedule_to_dict(sched)}, indent=2, ensure_ascii=False) + "\n"


def parse_schedule(document: str | bytes) -> Schedule:
    if isinstance(document, bytes):
        document = document.decode("utf-8")
    try:
        doc = json.loads(document)
    except json.JSONDecodeError as exc:
        raise InstanceFormatError(f"line {exc.lineno} col {exc.colno}", exc.msg) from None
    return schedule_from_dict(doc)
