"""Ground-truth schedule validation, results tables and Gantt charts.

The validator replays every train's activities in order, the same way the
CP leaf check does, but instead of rejecting a schedule it records what
went wrong. Trips run while a maintenance counter is over its limit are
*flagged*; the corrected trip count leaves them out.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from xml.sax.saxutils import escape

from .model import EmptyRide, Instance, MaintenanceTask, RegularTrip, Schedule

SLOT_CLASH = "slot-clash"
DUPLICATE = "duplicate"
OVERLAP = "overlap"
REACHABILITY = "reachability"
INCONSISTENT = "inconsistent"
LIMIT = "over-limit"
ORDER = "maintenance-order"
STRUCTURAL = (SLOT_CLASH, DUPLICATE, OVERLAP)


class ScheduleReferenceError(ValueError):
    """A schedule names a train, trip, station or maintenance type that does not exist."""


@dataclass(frozen=True)
class ActivityRecord:
    train: int
    position: int
    kind: str  # "trip", "maintenance" or "empty"
    start: int
    end: int
    trip: int | None = None
    flagged: bool = False
    verdicts: tuple[str, ...] = ()


@dataclass(frozen=True)
class KmEntry:
    train: int
    type: int
    time: int
    km: int
    position: int


@dataclass
class ValidationReport:
    activities: list[ActivityRecord] = field(default_factory=list)
    violations: list[tuple[int, str, str]] = field(default_factory=list)  # (train, category, message)
    flagged_trips: list[int] = field(default_factory=list)
    raw_allocated_trips: int = 0
    empty_km: int = 0
    used_trains: int = 0
    km_ledger: list[KmEntry] = field(default_factory=list)

    @property
    def corrected_allocated_trips(self) -> int:
        return self.raw_allocated_trips - len(self.flagged_trips)

    def count(self, *categories: str) -> int:
        return sum(1 for _, c, _ in self.violations if c in categories)

    @property
    def structural_violations(self) -> int:
        """Slot clashes, duplicated trips and overlaps."""
        return self.count(*STRUCTURAL)

    @property
    def timing_violations(self) -> int:
        return self.count(OVERLAP, REACHABILITY)

    @property
    def clean(self) -> bool:
        return not self.violations and not self.flagged_trips


def validate_schedule(inst: Instance, sched: Schedule) -> ValidationReport:
    """Replay each train and report timing, structure and maintenance problems.

    A trip is flagged when any counter is over its limit at departure or
    after the trip, or when an over-limit empty ride or an out-of-order
    non-periodic task happened since the previous trip.
    """
    net = inst.network
    types = inst.maintenance_types
    rep = ValidationReport()
    seen: Counter[int] = Counter()

    for z in sorted(sched.per_train):
        if not 0 <= z < inst.m:
            raise ScheduleReferenceError(f"unknown train {z}")
        acts = sched.per_train[z]
        train = inst.trains[z]
        pos, t = train.initial_station, train.earliest_time
        km = [train.initial_km[w.id] for w in types]
        done = [False] * len(types)
        top_done = None
        pending = False
        trips_run = 0
        slots: Counter = Counter()

        def over() -> bool:
            return any(km[u] > w.limit and (w.is_periodic or not done[u]) for u, w in enumerate(types))

        def ledger(position: int) -> None:
            rep.km_ledger.extend(KmEntry(z, u, t, km[u], position) for u in range(len(types)))

        ledger(-1)
        for p, a in enumerate(acts):
            if isinstance(a, EmptyRide):
                for s in (a.origin, a.destination):
                    if s not in net.index:
                        raise ScheduleReferenceError(f"unknown station {s}")
                verdicts = []
                if a.origin != pos:
                    verdicts.append(INCONSISTENT)
                    rep.violations.append((z, INCONSISTENT, f"empty ride starts at {a.origin}, train is at {pos}"))
                if a.km != net.distance(a.origin, a.destination):
                    verdicts.append(INCONSISTENT)
                    rep.violations.append((z, INCONSISTENT, f"empty ride {a.origin}->{a.destination} km mismatch"))
                start = t
                t += net.duration(a.origin, a.destination)
                for u in range(len(types)):
                    km[u] += a.km
                rep.empty_km += a.km
                if over():
                    pending = True
                    verdicts.append(LIMIT)
                rep.activities.append(ActivityRecord(z, p, "empty", start, t, verdicts=tuple(verdicts)))
                pos = a.destination
                ledger(p)
            elif isinstance(a, MaintenanceTask):
                if not 0 <= a.type < len(types):
                    raise ScheduleReferenceError(f"unknown maintenance type {a.type}")
                w = types[a.type]
                verdicts = []
                if a.station not in w.stations or a.station != pos:
                    verdicts.append(INCONSISTENT)
                    rep.violations.append((z, INCONSISTENT, f"maintenance {a.type} at {a.station}, train is at {pos}"))
                if w.is_periodic:
                    km[a.type] = 0
                else:
                    if top_done is not None and w.limit < top_done:
                        verdicts.append(ORDER)
                        rep.violations.append((z, ORDER, f"non-periodic type {a.type} after a larger limit"))
                        pending = True
                    done[a.type] = True
                    top_done = w.limit if top_done is None else max(top_done, w.limit)
                start = t
                t += w.duration
                rep.activities.append(ActivityRecord(z, p, "maintenance", start, t, verdicts=tuple(verdicts)))
                ledger(p)
            elif isinstance(a, RegularTrip):
                if not 0 <= a.trip < inst.n:
                    raise ScheduleReferenceError(f"unknown trip {a.trip}")
                f = inst.trips[a.trip]
                verdicts = []
                seen[a.trip] += 1
                if seen[a.trip] > 1:
                    verdicts.append(DUPLICATE)
                    rep.violations.append((z, DUPLICATE, f"trip {a.trip} allocated more than once"))
                if a.slot is not None:
                    slots[a.slot] += 1
                    if slots[a.slot] > 1:
                        verdicts.append(SLOT_CLASH)
                        rep.violations.append((z, SLOT_CLASH, f"slot {a.slot} holds more than one trip"))
                if pos != f.departure_station:
                    verdicts.append(INCONSISTENT)
                    rep.violations.append((z, INCONSISTENT, f"trip {a.trip} departs from {f.departure_station}, train is at {pos}"))
                if t > f.departure_time:
                    cat = OVERLAP if trips_run else REACHABILITY
                    verdicts.append(cat)
                    rep.violations.append((z, cat, f"trip {a.trip} departs {f.departure_time}, train ready at {t}"))
                flagged = pending or over()
                for u in range(len(types)):
                    km[u] += f.distance
                flagged = flagged or over()
                if flagged:
                    rep.flagged_trips.append(a.trip)
                    verdicts.append(LIMIT)
                pending = False
                rep.activities.append(ActivityRecord(z, p, "trip", f.departure_time, f.arrival_time, a.trip,
                                                     flagged, tuple(verdicts)))
                t = f.arrival_time + f.post_proc
                pos = f.arrival_station
                trips_run += 1
                rep.raw_allocated_trips += 1
                ledger(p)
            else:
                raise ScheduleReferenceError(f"unknown activity {a!r}")
        if trips_run:
            rep.used_trains += 1
    return rep


# -- results table -----------------------------------------------------------

@dataclass(frozen=True)
class MetricsRow:
    method: str
    raw_trips: int
    corrected_trips: int
    available_trips: int
    used_trains: int
    available_trains: int
    empty_km: int
    runtime: float | None = None
    preprocessing: float | None = None

    @property
    def trips_cell(self) -> str:
        return trip_notation(self.raw_trips, self.corrected_trips)


def trip_notation(raw: int, corrected: int) -> str:
    """``"62"``, or ``"123(118)"`` when flagged trips were removed."""
    return str(raw) if raw == corrected else f"{raw}({corrected})"


def compute_metrics(inst: Instance, results) -> list[MetricsRow]:
    """One row per ``(method, report, runtime[, preprocessing])`` tuple."""
    rows = []
    for item in results:
        method, rep, runtime, *rest = item
        rows.append(MetricsRow(method, rep.raw_allocated_trips, rep.corrected_allocated_trips, inst.n,
                               rep.used_trains, inst.m, rep.empty_km, runtime, rest[0] if rest else None))
    return rows


COLUMNS = ("allocated/available trips", "used/available trains", "method", "empty rides [km]", "run-time [s]")


def _runtime_cell(r: MetricsRow) -> str:
    if r.runtime is None:
        return "-"
    if r.preprocessing is not None:
        return f"{r.preprocessing:.1f} + {r.runtime:.1f}"
    return f"{r.runtime:.1f}"


def format_table(rows: list[MetricsRow]) -> str:
    """Plain-text table; run-time shows ``pre + search`` when both are known."""
    body = [
        (f"{r.trips_cell}/{r.available_trips}", f"{r.used_trains}/{r.available_trains}",
         r.method, str(r.empty_km), _runtime_cell(r))
        for r in rows
    ]
    widths = [max(len(c), *(len(b[k]) for b in body)) if body else len(c) for k, c in enumerate(COLUMNS)]
    lines = [" | ".join(c.ljust(w) for c, w in zip(COLUMNS, widths)).rstrip()]
    lines.append("-+-".join("-" * w for w in widths))
    lines += [" | ".join(c.ljust(w) for c, w in zip(b, widths)).rstrip() for b in body]
    return "\n".join(lines) + "\n"


# -- Gantt -------------------------------------------------------------------

COLOURS = {"trip": "black", "maintenance": "blue", "empty": "green", "idle": "yellow", "flagged": "red"}
LEGEND = (("trip", "regular trip"), ("maintenance", "maintenance"), ("empty", "empty ride"),
          ("idle", "unavailable"), ("flagged", "limit conflict"))
LANE_H = 18
LABEL_W = 60
PX_PER_MIN = 0.5


def render_gantt(inst: Instance, sched: Schedule, report: ValidationReport, title: str = "") -> str:
    """SVG with one lane per train; uncovered lane time is drawn as idle."""
    width = LABEL_W + inst.horizon_end * PX_PER_MIN
    top = 24 if title else 4
    height = top + inst.m * LANE_H + 4 + LANE_H
    by_train: dict[int, list[ActivityRecord]] = {}
    for rec in report.activities:
        by_train.setdefault(rec.train, []).append(rec)
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:g}" height="{height}" '
        f'viewBox="0 0 {width:g} {height}">'
    ]
    if title:
        out.append(f'<text x="4" y="16" font-size="12">{escape(title)}</text>')

    def rect(cls: str, x0: float, x1: float, y: int, label: str = "") -> None:
        x0 = max(0.0, min(x0, inst.horizon_end))
        x1 = max(0.0, min(x1, inst.horizon_end))
        if x1 <= x0:
            return
        tip = f"<title>{escape(label)}</title>" if label else ""
        out.append(
            f'<rect class="{cls}" x="{LABEL_W + x0 * PX_PER_MIN:g}" y="{y}" '
            f'width="{(x1 - x0) * PX_PER_MIN:g}" height="{LANE_H - 4}" fill="{COLOURS[cls]}">{tip}</rect>'
        )

    for z in range(inst.m):
        y = top + z * LANE_H
        out.append(f'<text x="2" y="{y + LANE_H - 6}" font-size="10">train {z}</text>')
        busy = []
        for rec in sorted(by_train.get(z, ()), key=lambda r: (r.start, r.position)):
            if rec.kind == "trip":
                cls = "flagged" if rec.flagged else "trip"
                label = f"trip {rec.trip}"
            else:
                cls = rec.kind
                label = rec.kind
            busy.append((rec.start, rec.end, cls, label))
        t = 0
        for s, e, cls, label in sorted(busy):
            if s > t:
                rect("idle", t, s, y)
            rect(cls, s, e, y, label)
            t = max(t, e)
        if t < inst.horizon_end:
            rect("idle", t, inst.horizon_end, y)
    y = top + inst.m * LANE_H + 4
    for k, (cls, name) in enumerate(LEGEND):
        x = LABEL_W + k * 110
        out.append(f'<rect class="legend" data-kind="{cls}" x="{x}" y="{y}" width="10" height="10" '
                   f'fill="{COLOURS[cls]}" stroke="grey"/>')
        out.append(f'<text x="{x + 14}" y="{y + 9}" font-size="10">{name}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
