"""Depth-first branch and bound over slot plans.

Labelling follows a first-fail order on trains (fewest potential trips,
then fewest potential slots), fills a train's slots left to right, labels
each slot's trip before its maintenance, tries greater trip ids first and
"no maintenance" before any maintenance type.
"""
from __future__ import annotations

import dataclasses
import itertools
import logging
import time
from dataclasses import dataclass, field

from .cp_engine import (
    SlotPlan,
    StaticSets,
    bits,
    bound_objectives,
    compute_slot_count,
    compute_static_sets,
    propagate_fixpoint,
)
from .model import EmptyRide, Instance, MaintenanceTask, RegularTrip, Schedule, duration_triangle_violations

log = logging.getLogger(__name__)

TRIP, MAINT = "trip", "maint"


class HorizonError(ValueError):
    """No trip fits into the horizon although trips exist."""


@dataclass
class SearchConfig:
    time_limit: float | None = None
    big_m: int = 1_000_000
    stronger_maint_rule: bool = False
    node_limit: int | None = None
    solution_limit: int | None = None  # 1 gives the "first solution" run


@dataclass
class SearchStats:
    nodes: int = 0
    fails: int = 0
    solutions: int = 0
    time_to_first: float | None = None
    time_to_best: float | None = None
    elapsed: float = 0.0
    complete: bool = False


@dataclass(frozen=True)
class Improvement:
    time: float
    trips: int
    empty_km: int
    objective: int
    nodes: int


@dataclass
class SearchResult:
    schedule: Schedule | None
    stats: SearchStats
    log: list[Improvement] = field(default_factory=list)
    objective: int | None = None
    q: int = 0


# -- labelling ---------------------------------------------------------------

def select_variable(plan: SlotPlan) -> tuple[int, int, str] | None:
    """First-fail choice of the next variable, or None when all are assigned."""
    q = plan.q
    SENT = plan.sent_bit
    FMASK = SENT - 1
    best = None
    for i in range(plan.m):
        trips = plan.trip[i * q:(i + 1) * q]
        maints = plan.maint[i * q:(i + 1) * q]
        if all(d & (d - 1) == 0 for d in trips) and all(d & (d - 1) == 0 for d in maints):
            continue
        potential = 0
        slots = 0
        for d in trips:
            if d & FMASK:
                potential |= d & FMASK
                slots += 1
        key = (potential.bit_count(), slots, i)
        if best is None or key < best:
            best = key
    if best is None:
        return None
    i = best[2]
    for j in range(q):
        d = plan.trip[i * q + j]
        if d & (d - 1):
            return i, j, TRIP
        d = plan.maint[i * q + j]
        if d & (d - 1):
            return i, j, MAINT
    raise AssertionError("unreachable")


def order_values(plan: SlotPlan, var: tuple[int, int, str]) -> list[int]:
    i, j, kind = var
    if kind == TRIP:
        vals = plan.trip_values(i, j)
        trips = sorted((v for v in vals if v >= 0), reverse=True)
        return trips + [v for v in vals if v < 0]
    return sorted(plan.maint_values(i, j))


def _assign(plan: SlotPlan, var: tuple[int, int, str], value: int) -> SlotPlan:
    child = plan.copy()
    i, j, kind = var
    if kind == TRIP:
        child.set_trip_values(i, j, [value])
    else:
        child.set_maint_values(i, j, [value])
    return child


# -- leaf evaluation ---------------------------------------------------------

def _simulate(inst: Instance, i: int, trips: list[int], maints: list[int], stations) -> tuple[bool, int, list]:
    """Exact check of one train's fixed sequence with chosen maintenance stations."""
    net = inst.network
    z = inst.trains[i]
    types = inst.maintenance_types
    pos, t = z.initial_station, z.earliest_time
    km = [z.initial_km[w.id] for w in types]
    done = [False] * len(types)
    np_limit_done = None
    acts = []
    empty = 0

    def travel(d: int) -> bool:
        for u, w in enumerate(types):
            km[u] += d
            if km[u] > w.limit and (w.is_periodic or not done[u]):
                return False
        return True

    st_iter = iter(stations)
    for slot, (k, u) in enumerate(zip(trips, maints)):
        f = inst.trips[k]
        if u >= 0:
            w = types[u]
            s = next(st_iter)
            if s != pos:
                d = net.distance(pos, s)
                acts.append(EmptyRide(pos, s, d))
                empty += d
                t += net.duration(pos, s)
                if not travel(d):
                    return False, 0, []
                pos = s
            acts.append(MaintenanceTask(u, s))
            t += w.duration
            if w.is_periodic:
                km[u] = 0
            else:
                if np_limit_done is not None and w.limit < np_limit_done:
                    return False, 0, []
                done[u] = True
                np_limit_done = max(np_limit_done or 0, w.limit)
        if pos != f.departure_station:
            d = net.distance(pos, f.departure_station)
            acts.append(EmptyRide(pos, f.departure_station, d))
            empty += d
            t += net.duration(pos, f.departure_station)
            if not travel(d):
                return False, 0, []
        if t > f.departure_time:
            return False, 0, []
        acts.append(RegularTrip(k, slot))
        if not travel(f.distance):
            return False, 0, []
        t = f.arrival_time + f.post_proc
        pos = f.arrival_station
    return True, empty, acts


def extract_train(inst: Instance, i: int, trips: list[int], maints: list[int]):
    """Cheapest feasible station choice for a fixed train sequence, or None.

    Ties go to the lexicographically smallest tuple of station indices.
    """
    index = inst.network.index
    choices = [
        sorted(inst.maintenance_types[u].stations, key=index.__getitem__)
        for u in maints if u >= 0
    ]
    best = None
    for combo in itertools.product(*choices):
        ok, empty, acts = _simulate(inst, i, trips, maints, combo)
        if ok and (best is None or empty < best[0]):
            best = (empty, acts)
    return best


def _leaf(inst: Instance, plan: SlotPlan):
    q = plan.q
    per_train = {}
    total_km = 0
    total_trips = 0
    for i in range(plan.m):
        trips, maints = [], []
        for j in range(q):
            t = plan.trip_values(i, j)[0]
            if t < 0:
                break
            trips.append(t)
            maints.append(plan.maint_values(i, j)[0])
        if not trips:
            continue
        res = extract_train(inst, i, trips, maints)
        if res is None:
            return None
        total_km += res[0]
        total_trips += len(trips)
        per_train[i] = tuple(res[1])
    return Schedule(per_train), total_trips, total_km


# -- branch and bound --------------------------------------------------------

def by_duration(inst: Instance) -> tuple[Instance, list[int]]:
    """Renumber trips in non-decreasing duration order (ties by id).

    Returns the renumbered instance and ``orig`` with ``orig[new] = old``.
    """
    orig = sorted(range(inst.n), key=lambda k: (inst.trips[k].duration, k))
    trips = tuple(dataclasses.replace(inst.trips[k], id=new) for new, k in enumerate(orig))
    return dataclasses.replace(inst, trips=trips), orig


def _rename(sched: Schedule, orig: list[int]) -> Schedule:
    return Schedule({
        i: tuple(RegularTrip(orig[a.trip], a.slot) if isinstance(a, RegularTrip) else a for a in acts)
        for i, acts in sched.per_train.items()
    })


def max_empty_km(inst: Instance) -> int:
    """Upper bound on empty km: each trip is preceded by at most two empty legs."""
    d = inst.network.dist_matrix
    longest = max((max(row) for row in d), default=0)
    return inst.n * 2 * longest


def branch_and_bound(inst: Instance, cfg: SearchConfig = SearchConfig()) -> SearchResult:
    """Maximise ``big_m * trips - empty_km`` by depth-first branch and bound.

    Returns the best schedule found before the limits hit, together with
    every improving solution in order. ``stats.complete`` is True when the
    tree was exhausted, i.e. the result is optimal. Trips are searched in
    non-decreasing duration order, so "greatest trip id first" tries the
    longest trips first; the returned schedule uses the caller's trip ids.
    """
    start = time.perf_counter()
    stats = SearchStats()
    if cfg.big_m <= max_empty_km(inst):
        raise ValueError("big_m must exceed the largest possible empty km total")
    if inst.n == 0:
        stats.nodes = 1
        stats.solutions = 1
        stats.complete = True
        stats.time_to_first = stats.time_to_best = stats.elapsed = time.perf_counter() - start
        return SearchResult(Schedule({}), stats, [Improvement(stats.elapsed, 0, 0, 0, 1)], 0, 0)
    q = compute_slot_count(inst)
    if q == 0:
        raise HorizonError("no trip fits into the scheduling horizon")
    if duration_triangle_violations(inst.network):
        log.warning("duration table violates the triangle inequality; pruning may be unsound")

    inst, orig = by_duration(inst)
    sets: StaticSets = compute_static_sets(inst, cfg.stronger_maint_rule)
    root = SlotPlan.full(inst, q)
    M = cfg.big_m
    best_obj = None
    best_sched = None
    improvements: list[Improvement] = []

    def out_of_budget() -> bool:
        if cfg.node_limit is not None and stats.nodes >= cfg.node_limit:
            return True
        if cfg.solution_limit is not None and stats.solutions >= cfg.solution_limit:
            return True
        return cfg.time_limit is not None and time.perf_counter() - start >= cfg.time_limit

    # each frame: (plan at fixpoint, variable, values, next value position)
    stack: list[list] = []

    def expand(plan: SlotPlan, dirty) -> None:
        nonlocal best_obj, best_sched
        stats.nodes += 1
        if propagate_fixpoint(plan, sets, inst, dirty) is None:
            stats.fails += 1
            return
        ub, lb = bound_objectives(plan, None, sets, inst)
        if best_obj is not None and M * ub - lb <= best_obj:
            return
        var = select_variable(plan)
        if var is None:
            leaf = _leaf(inst, plan)
            if leaf is None:
                stats.fails += 1
                return
            sched, trips, km = leaf
            obj = M * trips - km
            if best_obj is None or obj > best_obj:
                now = time.perf_counter() - start
                best_obj, best_sched = obj, sched
                stats.solutions += 1
                if stats.time_to_first is None:
                    stats.time_to_first = now
                stats.time_to_best = now
                improvements.append(Improvement(now, trips, km, obj, stats.nodes))
                log.info("solution %d: %d trips, %d empty km after %.2fs", stats.solutions, trips, km, now)
            return
        stack.append([plan, var, order_values(plan, var), 0])

    expand(root, None)
    exhausted = True
    while stack:
        if out_of_budget():
            exhausted = False
            break
        frame = stack[-1]
        plan, var, values, pos = frame
        if pos >= len(values):
            stack.pop()
            continue
        frame[3] = pos + 1
        expand(_assign(plan, var, values[pos]), (var[0],))

    stats.elapsed = time.perf_counter() - start
    stats.complete = exhausted
    if best_sched is not None:
        best_sched = _rename(best_sched, orig)
    return SearchResult(best_sched, stats, improvements, best_obj, q)
