"""Domain types shared by the solvers, the validator and the file formats.

All times are integer minutes from the start of the horizon and all
distances are integer kilometres.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Mapping, Union


@dataclass(frozen=True)
class Network:
    """Stations plus complete distance/duration tables keyed by station pairs."""

    stations: tuple[str, ...]
    distance_km: Mapping[tuple[str, str], int]
    duration_min: Mapping[tuple[str, str], int]

    def distance(self, b: str, c: str) -> int:
        return self.distance_km[b, c]

    def duration(self, b: str, c: str) -> int:
        return self.duration_min[b, c]

    @cached_property
    def index(self) -> dict[str, int]:
        return {s: k for k, s in enumerate(self.stations)}

    @cached_property
    def dist_matrix(self) -> list[list[int]]:
        return [[self.distance_km.get((b, c), 0) for c in self.stations] for b in self.stations]

    @cached_property
    def dur_matrix(self) -> list[list[int]]:
        return [[self.duration_min.get((b, c), 0) for c in self.stations] for b in self.stations]


@dataclass(frozen=True)
class Trip:
    id: int
    departure_station: str
    arrival_station: str
    departure_time: int
    arrival_time: int
    distance: int
    duration: int
    post_proc: int = 120


@dataclass(frozen=True)
class Train:
    id: int
    initial_station: str
    earliest_time: int
    initial_km: Mapping[int, int]


@dataclass(frozen=True)
class MaintenanceType:
    id: int
    stations: tuple[str, ...]
    duration: int
    is_periodic: bool
    limit: int


@dataclass(frozen=True)
class Instance:
    horizon_end: int
    network: Network
    trips: tuple[Trip, ...]
    trains: tuple[Train, ...]
    maintenance_types: tuple[MaintenanceType, ...] = ()

    @property
    def n(self) -> int:
        return len(self.trips)

    @property
    def m(self) -> int:
        return len(self.trains)

    @property
    def p(self) -> int:
        return len(self.maintenance_types)


# -- schedules ---------------------------------------------------------------

@dataclass(frozen=True)
class RegularTrip:
    trip: int
    slot: int | None = None


@dataclass(frozen=True)
class MaintenanceTask:
    type: int
    station: str


@dataclass(frozen=True)
class EmptyRide:
    origin: str
    destination: str
    km: int


Activity = Union[RegularTrip, MaintenanceTask, EmptyRide]


@dataclass(frozen=True)
class Schedule:
    """Ordered activities per train id. Trains without activities may be omitted."""

    per_train: Mapping[int, tuple[Activity, ...]] = field(default_factory=dict)

    @property
    def allocated_trips(self) -> int:
        return sum(isinstance(a, RegularTrip) for acts in self.per_train.values() for a in acts)

    @property
    def empty_km(self) -> int:
        return sum(a.km for acts in self.per_train.values() for a in acts if isinstance(a, EmptyRide))

    def trip_ids(self) -> list[int]:
        return [a.trip for acts in self.per_train.values() for a in acts if isinstance(a, RegularTrip)]


# -- validation --------------------------------------------------------------

def validate_instance(inst: Instance) -> list[str]:
    """Return a description for every violated instance invariant.

    The result depends only on the instance contents, never on the order in
    which checks happen to run; an empty list means the instance is valid.
    """
    out: list[str] = []
    net = inst.network
    stations = set(net.stations)
    e = inst.horizon_end

    if len(stations) != len(net.stations):
        out.append("duplicate station names")
    for b in net.stations:
        for c in net.stations:
            for label, table in (("distance", net.distance_km), ("duration", net.duration_min)):
                if (b, c) not in table:
                    out.append(f"missing {label} entry ({b}, {c})")
                    continue
                v = table[b, c]
                if b == c and v != 0:
                    out.append(f"diagonal {label} nonzero at {b}")
                elif b != c and v <= 0:
                    out.append(f"{label} ({b}, {c}) must be positive")
    for label, table in (("distance", net.distance_km), ("duration", net.duration_min)):
        for b, c in table:
            if b not in stations or c not in stations:
                out.append(f"{label} entry ({b}, {c}) references unknown station")

    for k, f in enumerate(inst.trips):
        tag = f"trip {f.id}"
        if f.id != k:
            out.append(f"{tag}: id does not match position {k}")
        for s in (f.departure_station, f.arrival_station):
            if s not in stations:
                out.append(f"{tag}: unknown station {s}")
        if not f.departure_time < f.arrival_time:
            out.append(f"{tag}: departure not before arrival")
        if f.arrival_time - f.departure_time != f.duration:
            out.append(f"{tag}: arrival - departure != duration")
        if f.departure_station == f.arrival_station:
            out.append(f"{tag}: departure station equals arrival station")
        if f.distance <= 0:
            out.append(f"{tag}: distance must be positive")
        if f.post_proc < 0:
            out.append(f"{tag}: negative post-processing time")
        for t in (f.departure_time, f.arrival_time):
            if not 0 <= t < e:
                out.append(f"{tag}: time {t} outside horizon")

    type_ids = {w.id for w in inst.maintenance_types}
    for k, w in enumerate(inst.maintenance_types):
        tag = f"maintenance type {w.id}"
        if w.id != k:
            out.append(f"{tag}: id does not match position {k}")
        if not w.stations:
            out.append(f"{tag}: no stations")
        for s in w.stations:
            if s not in stations:
                out.append(f"{tag}: unknown station {s}")
        if w.limit <= 0:
            out.append(f"{tag}: limit must be positive")
        if w.duration < 0:
            out.append(f"{tag}: negative duration")
    nonperiodic = [w.limit for w in inst.maintenance_types if not w.is_periodic]
    if len(set(nonperiodic)) != len(nonperiodic):
        out.append("non-periodic maintenance types must have distinct limits")

    limits = {w.id: w.limit for w in inst.maintenance_types}
    for k, z in enumerate(inst.trains):
        tag = f"train {z.id}"
        if z.id != k:
            out.append(f"{tag}: id does not match position {k}")
        if z.initial_station not in stations:
            out.append(f"{tag}: unknown station {z.initial_station}")
        if not 0 <= z.earliest_time < e:
            out.append(f"{tag}: earliest time outside horizon")
        for u in sorted(type_ids - set(z.initial_km)):
            out.append(f"{tag}: missing initial km for maintenance type {u}")
        for u, km in z.initial_km.items():
            if u not in type_ids:
                out.append(f"{tag}: initial km for unknown maintenance type {u}")
            elif km < 0:
                out.append(f"{tag}: negative initial km for type {u}")
            elif km > limits[u]:
                out.append(f"{tag}: initial km {km} above limit of type {u}")
    return out


def duration_triangle_violations(net: Network) -> list[tuple[str, str, str]]:
    """Station triples (a, b, c) where going a->b->c is faster than a->c.

    The timing-based pruning in the CP engine assumes there are none.
    """
    d = net.dur_matrix
    s = net.stations
    r = range(len(s))
    return [(s[a], s[b], s[c]) for a in r for b in r for c in r if d[a][b] + d[b][c] < d[a][c]]
