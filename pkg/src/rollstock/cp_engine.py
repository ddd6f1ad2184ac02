"""Finite-domain store and the rolling-stock pruning rules.

Every train ``i`` owns ``q`` trip variables and ``q`` maintenance variables.
``trip[i, j]`` ranges over trip ids ``0..n-1`` plus a unique negative value
``-(i*q + j + 1)`` meaning "no regular trip in slot j"; ``maint[i, j]``
ranges over ``-1`` (no maintenance before the slot's trip) and the
maintenance type ids.

Domains are stored as Python ints used as bitsets: for trip variables bit
``k`` stands for trip ``k`` and bit ``n`` for the slot's sentinel; for
maintenance variables bit ``0`` stands for ``-1`` and bit ``u + 1`` for type
``u``.

The rules assume the duration table satisfies the triangle inequality (a
detour via a maintenance station is never faster than the direct leg).
Kilometre readings are computed as minima over every leg combination still
in the domains, so distances need not be metric.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

from .model import Instance

INF = float("inf")


class Status(enum.Enum):
    UNCHANGED = 0
    CHANGED = 1
    FAIL = 2


def bits(mask: int):
    while mask:
        low = mask & -mask
        yield low.bit_length() - 1
        mask ^= low


def compute_slot_count(inst: Instance) -> int:
    """Largest q whose q shortest trip durations fit into ``e - 1`` minutes, capped at n."""
    total = 0
    q = 0
    for d in sorted(f.duration for f in inst.trips):
        total += d
        if total > inst.horizon_end - 1:
            break
        q += 1
    return q


class SlotPlan:
    """Trip and maintenance domains for every (train, slot)."""

    __slots__ = ("n", "m", "q", "p", "trip", "maint")

    def __init__(self, n: int, m: int, q: int, p: int, trip: list[int], maint: list[int]):
        self.n, self.m, self.q, self.p = n, m, q, p
        self.trip = trip
        self.maint = maint

    @classmethod
    def full(cls, inst: Instance, q: int) -> "SlotPlan":
        n, m, p = inst.n, inst.m, inst.p
        if q < 1:
            raise ValueError("slot count must be at least 1")
        return cls(n, m, q, p, [(1 << (n + 1)) - 1] * (m * q), [(1 << (p + 1)) - 1] * (m * q))

    def copy(self) -> "SlotPlan":
        return SlotPlan(self.n, self.m, self.q, self.p, self.trip[:], self.maint[:])

    def sentinel(self, i: int, j: int) -> int:
        return -(i * self.q + j + 1)

    @property
    def sent_bit(self) -> int:
        return 1 << self.n

    def trip_values(self, i: int, j: int) -> list[int]:
        d = self.trip[i * self.q + j]
        out = [self.sentinel(i, j)] if d >> self.n & 1 else []
        return out + [k for k in bits(d) if k < self.n]

    def maint_values(self, i: int, j: int) -> list[int]:
        return [u - 1 for u in bits(self.maint[i * self.q + j])]

    def set_trip_values(self, i: int, j: int, values) -> None:
        mask = 0
        for v in values:
            if v < 0:
                if v != self.sentinel(i, j):
                    raise ValueError(f"{v} is not the sentinel of slot ({i}, {j})")
                mask |= self.sent_bit
            else:
                mask |= 1 << v
        self.trip[i * self.q + j] = mask

    def set_maint_values(self, i: int, j: int, values) -> None:
        self.maint[i * self.q + j] = sum(1 << (u + 1) for u in set(values))

    def __eq__(self, other):
        return isinstance(other, SlotPlan) and (self.q, self.trip, self.maint) == (other.q, other.trip, other.maint)

    def __repr__(self):
        return f"SlotPlan(n={self.n}, m={self.m}, q={self.q}, p={self.p})"


@dataclass
class StaticSets:
    """Instance-level predecessor/successor structure, all as bitmasks.

    ``V[k]`` potential predecessors of trip k, ``N[k]`` potential successors,
    ``W_succ[u][x]`` the trips y with (x, y) in W_u, ``W1``/``W2`` its two
    projections, ``U[i][u]`` potential first trips of train i after a
    maintenance of type u, ``first[i]`` trips train i can reach at slot 0.
    """

    n: int
    V: list[int]
    N: list[int]
    W_succ: list[list[int]]
    W1: list[int]
    W2: list[int]
    U: list[list[int]]
    first: list[int]
    # station-indexed lookup tables
    dist: list[list[int]]
    dep_st: list[int]
    arr_st: list[int]
    trip_km: list[int]
    departs_from: list[int]
    arrives_at: list[int]
    init_st: list[int]
    type_st: list[list[int]]
    periodic: list[bool]
    limit: list[int]
    initial_km: list[list[int]]
    stronger_maint_rule: bool = False

    def W(self, u: int) -> set[tuple[int, int]]:
        return {(x, y) for x in range(self.n) for y in bits(self.W_succ[u][x])}

    def predecessors(self, k: int) -> set[int]:
        return set(bits(self.V[k]))

    def successors(self, k: int) -> set[int]:
        return set(bits(self.N[k]))


def compute_static_sets(inst: Instance, stronger_maint_rule: bool = False) -> StaticSets:
    net = inst.network
    idx = net.index
    dur = net.dur_matrix
    trips = inst.trips
    n = inst.n
    dep = [idx[f.departure_station] for f in trips]
    arr = [idx[f.arrival_station] for f in trips]
    ready = [f.arrival_time + f.post_proc for f in trips]

    V = [0] * n
    N = [0] * n
    for h in range(n):
        for k in range(n):
            if ready[h] + dur[arr[h]][dep[k]] <= trips[k].departure_time:
                V[k] |= 1 << h
                N[h] |= 1 << k

    types = inst.maintenance_types
    type_st = [[idx[s] for s in w.stations] for w in types]
    W_succ, W1, W2 = [], [], []
    for w, sts in zip(types, type_st):
        rows = []
        for x in range(n):
            row = 0
            for y in range(n):
                dep_y = trips[y].departure_time
                if any(ready[x] + dur[arr[x]][s] + w.duration + dur[s][dep[y]] <= dep_y for s in sts):
                    row |= 1 << y
            rows.append(row)
        W_succ.append(rows)
        W1.append(sum(1 << x for x in range(n) if rows[x]))
        W2.append(_or(rows))

    U, first = [], []
    for z in inst.trains:
        s0 = idx[z.initial_station]
        t0 = z.earliest_time
        first.append(sum(1 << k for k in range(n) if t0 + dur[s0][dep[k]] <= trips[k].departure_time))
        U.append([
            sum(
                1 << k for k in range(n)
                if any(t0 + dur[s0][s] + w.duration + dur[s][dep[k]] <= trips[k].departure_time for s in sts)
            )
            for w, sts in zip(types, type_st)
        ])

    departs_from = [0] * len(net.stations)
    arrives_at = [0] * len(net.stations)
    for k in range(n):
        departs_from[dep[k]] |= 1 << k
        arrives_at[arr[k]] |= 1 << k

    return StaticSets(
        n=n, V=V, N=N, W_succ=W_succ, W1=W1, W2=W2, U=U, first=first,
        dist=net.dist_matrix, dep_st=dep, arr_st=arr, trip_km=[f.distance for f in trips],
        departs_from=departs_from, arrives_at=arrives_at,
        init_st=[idx[z.initial_station] for z in inst.trains],
        type_st=type_st,
        periodic=[w.is_periodic for w in types],
        limit=[w.limit for w in types],
        initial_km=[[z.initial_km[w.id] for w in types] for z in inst.trains],
        stronger_maint_rule=stronger_maint_rule,
    )


def _or(masks) -> int:
    out = 0
    for x in masks:
        out |= x
    return out


def _trains(plan: SlotPlan, trains):
    return range(plan.m) if trains is None else trains


# -- trip rules --------------------------------------------------------------

def _trip_rules_train(plan: SlotPlan, S: StaticSets, i: int) -> Status:
    q, T = plan.q, plan.trip
    SENT = plan.sent_bit
    FMASK = SENT - 1
    base = i * q
    changed = False

    d = T[base]
    nd = d & (S.first[i] | SENT)
    if nd != d:
        T[base] = nd
        changed = True
    if not nd:
        return Status.FAIL

    # forward: successors of the previous slot's trips (the predecessor
    # disjointness rule removes exactly the same values); the gap rule falls
    # out because an all-sentinel previous slot leaves only the sentinel
    for j in range(1, q):
        prev = T[base + j - 1] & FMASK
        allowed = SENT
        for k in bits(prev):
            allowed |= S.N[k]
        d = T[base + j]
        nd = d & allowed
        if nd != d:
            T[base + j] = nd
            changed = True
            if not nd:
                return Status.FAIL

    # backward: a slot that must hold a trip needs a predecessor trip
    for j in range(q - 1, 0, -1):
        cur = T[base + j]
        if cur & SENT:
            continue
        support = 0
        for k in bits(cur):
            support |= S.V[k]
        d = T[base + j - 1]
        nd = d & support
        if nd != d:
            T[base + j - 1] = nd
            changed = True
            if not nd:
                return Status.FAIL
    return Status.CHANGED if changed else Status.UNCHANGED


def _all_different(plan: SlotPlan, dirty: set[int] | None = None) -> Status:
    """Forward checking on assigned trips plus a pigeonhole count."""
    T, q = plan.trip, plan.q
    SENT = plan.sent_bit
    changed = False
    while True:
        owner: dict[int, int] = {}
        for idx, d in enumerate(T):
            if not d & SENT and d & (d - 1) == 0:
                if d in owner:
                    return Status.FAIL
                owner[d] = idx
        fixed = _or(owner)
        again = False
        if fixed:
            for idx, d in enumerate(T):
                if d & fixed:
                    keep = d if owner.get(d) == idx else d & ~fixed
                    if keep != d:
                        if not keep:
                            return Status.FAIL
                        T[idx] = keep
                        changed = again = True
                        if dirty is not None:
                            dirty.add(idx // q)
        if not again:
            break
    forced = [d for d in T if not d & SENT]
    if forced and _or(forced).bit_count() < len(forced):
        return Status.FAIL
    return Status.CHANGED if changed else Status.UNCHANGED


def propagate_trip_rules(plan: SlotPlan, sets: StaticSets, inst: Instance | None = None, trains=None) -> Status:
    """Slot-0 reachability, successor restriction, gap rule and allDifferent."""
    changed = False
    for i in _trains(plan, trains):
        st = _trip_rules_train(plan, sets, i)
        if st is Status.FAIL:
            return st
        changed |= st is Status.CHANGED
    st = _all_different(plan)
    if st is Status.FAIL:
        return st
    changed |= st is Status.CHANGED
    return Status.CHANGED if changed else Status.UNCHANGED


# -- maintenance rules -------------------------------------------------------

def _maint_rules_train(plan: SlotPlan, S: StaticSets, i: int) -> Status:
    q, T, M = plan.q, plan.trip, plan.maint
    SENT = plan.sent_bit
    FMASK = SENT - 1
    base = i * q
    changed = False
    for j in range(q):
        idx = base + j
        t = T[idx]
        m = M[idx]
        # no trip, no maintenance; maintenance implies a trip
        if t == SENT and m != 1:
            m &= 1
        if not m & 1 and t & SENT:
            t &= ~SENT
        prev = T[idx - 1] if j else 0
        for u in bits(m >> 1):
            if j == 0:
                dead = not S.U[i][u] & t
            else:
                dead = not S.W1[u] & prev or not S.W2[u] & t
                if not dead and S.stronger_maint_rule:
                    reach = 0
                    for x in bits(prev & FMASK):
                        reach |= S.W_succ[u][x]
                    dead = not reach & t
            if dead:
                m &= ~(1 << (u + 1))
        if not m or not t:
            return Status.FAIL
        if m & (m - 1) == 0 and m != 1:
            u = m.bit_length() - 2
            if j == 0:
                t &= S.U[i][u]
            else:
                nprev = prev & S.W1[u]
                t &= S.W2[u]
                support = 0
                for x in bits(nprev):
                    support |= S.W_succ[u][x]
                if not support & t:
                    return Status.FAIL
                t &= support
                if nprev != prev:
                    T[idx - 1] = nprev
                    changed = True
        if not t:
            return Status.FAIL
        if t != T[idx] or m != M[idx]:
            T[idx], M[idx] = t, m
            changed = True
    return Status.CHANGED if changed else Status.UNCHANGED


def propagate_maint_rules(plan: SlotPlan, sets: StaticSets, inst: Instance | None = None, trains=None) -> Status:
    changed = False
    for i in _trains(plan, trains):
        st = _maint_rules_train(plan, sets, i)
        if st is Status.FAIL:
            return st
        changed |= st is Status.CHANGED
    return Status.CHANGED if changed else Status.UNCHANGED


# -- km readings -------------------------------------------------------------

@dataclass
class KmState:
    """``km[i][u][j]``: lower bound of the reading of type u right after the
    trip in slot j-1 of train i, for j = 0..q (index q covers the last slot).
    """

    km: list[list[list[float]]]

    def __getitem__(self, key):
        i, u, j = key
        return self.km[i][u][j]


@dataclass
class _SlotLegs:
    """Per-slot leg minima used by the km and bound computations."""

    prev: list[int]            # stations the train can be at before the slot
    to_r: dict[int, int]       # min km from any prev station to station r
    from_r: dict[int, float]   # min km from r to a departure + the trip itself
    empty_from_r: dict[int, float]  # same without the trip km


def _slot_legs(plan: SlotPlan, S: StaticSets, i: int, j: int) -> _SlotLegs | None:
    q, T = plan.q, plan.trip
    FMASK = plan.sent_bit - 1
    cur = T[i * q + j] & FMASK
    if not cur:
        return None
    if j == 0:
        prev = [S.init_st[i]]
    else:
        p = T[i * q + j - 1] & FMASK
        prev = [s for s, mask in enumerate(S.arrives_at) if mask & p]
    min_trip = {}
    for t, mask in enumerate(S.departs_from):
        sub = mask & cur
        if sub:
            min_trip[t] = min(S.trip_km[k] for k in bits(sub))
    dist = S.dist
    stations = range(len(dist))
    to_r = {r: min(dist[s][r] for s in prev) for r in stations}
    from_r = {r: min(dist[r][t] + km for t, km in min_trip.items()) for r in stations}
    empty_from_r = {r: min(dist[r][t] for t in min_trip) for r in stations}
    return _SlotLegs(prev, to_r, from_r, empty_from_r)


def _km_train(plan: SlotPlan, S: StaticSets, i: int, legs=None) -> list[list[float]]:
    q, M = plan.q, plan.maint
    p = plan.p
    if legs is None:
        legs = [_slot_legs(plan, S, i, j) for j in range(q)]
    km = [[S.initial_km[i][u]] + [0] * q for u in range(p)]
    for j in range(q):
        L = legs[j]
        m = M[i * q + j]
        types = [u for u in bits(m >> 1)]
        direct = min(L.to_r[r] + L.from_r[r] for r in L.prev) if L else 0
        via = {}
        if L:
            for w in types:
                via[w] = min(L.to_r[r] + L.from_r[r] for r in S.type_st[w])
        for u in range(p):
            cur = km[u][j]
            if not L:
                km[u][j + 1] = cur
                continue
            options = []
            if m & 1:
                options.append(cur + direct)
            for w in types:
                if w == u and S.periodic[u]:
                    options.append(min(L.from_r[r] for r in S.type_st[u]))
                else:
                    options.append(cur + via[w])
            km[u][j + 1] = min(options) if options else INF
    return km


def compute_km_readings(plan: SlotPlan, sets: StaticSets, inst: Instance | None = None) -> KmState:
    """Minimal km readings per (train, type, slot) over the current domains.

    Periodic types reset to the cheapest maintenance-station-to-trip leg
    where a maintenance of that type is possible; every remaining leg
    combination (direct, or via a station of any other type still in the
    slot's maintenance domain) contributes to the minimum, so the values are
    lower bounds for every completion.
    """
    return KmState([_km_train(plan, sets, i) for i in range(plan.m)])


def _force_empty_from(plan: SlotPlan, i: int, j0: int) -> Status:
    q, T, M = plan.q, plan.trip, plan.maint
    SENT = plan.sent_bit
    changed = False
    for j in range(max(0, j0), q):
        idx = i * q + j
        if not T[idx] & SENT or not M[idx] & 1:
            return Status.FAIL
        if T[idx] != SENT or M[idx] != 1:
            T[idx], M[idx] = SENT, 1
            changed = True
    return Status.CHANGED if changed else Status.UNCHANGED


def _km_rules_train(plan: SlotPlan, S: StaticSets, i: int) -> Status:
    q, T, M = plan.q, plan.trip, plan.maint
    SENT = plan.sent_bit
    FMASK = SENT - 1
    base = i * q
    legs = [_slot_legs(plan, S, i, j) for j in range(q)]
    km = _km_train(plan, S, i, legs)
    changed = False

    for u in range(plan.p):
        lim = S.limit[u]
        if not S.periodic[u] and km[u][0] > lim and T[base] & FMASK:
            return Status.FAIL
        # a reading over the limit after slot j-1 rules out that trip and all later ones
        for j in range(1, q + 1):
            if km[u][j] <= lim:
                continue
            if not S.periodic[u] and any(M[base + l] >> (u + 1) & 1 for l in range(j)):
                continue
            st = _force_empty_from(plan, i, j - 1)
            if st is Status.FAIL:
                return st
            if st is Status.CHANGED:
                return st  # readings are stale now; the driver recomputes
            break

    # travelling to a maintenance station must not itself break a limit
    for j in range(q):
        L = legs[j]
        idx = base + j
        m = M[idx]
        if not L or m <= 1:
            continue
        for u in range(plan.p):
            if not S.periodic[u] and any(M[base + l] >> (u + 1) & 1 for l in range(j)):
                continue
            lim = S.limit[u]
            for w in bits(m >> 1):
                if km[u][j] + min(L.to_r[r] for r in S.type_st[w]) > lim:
                    m &= ~(1 << (w + 1))
        if m != M[idx]:
            if not m:
                return Status.FAIL
            M[idx] = m
            changed = True

    # non-periodic tasks happen in the order of their limits
    for x in range(plan.p):
        if S.periodic[x]:
            continue
        bx = 1 << (x + 1)
        later = [y for y in range(plan.p) if not S.periodic[y] and S.limit[y] > S.limit[x]]
        earlier = [y for y in range(plan.p) if not S.periodic[y] and S.limit[y] < S.limit[x]]
        fixed = [r for r in range(q) if M[base + r] == bx]
        if not fixed:
            continue
        # a larger limit before a fixed x, or a smaller one after it, is out of order
        if later:
            drop = sum(1 << (y + 1) for y in later)
            for j in range(fixed[-1] + 1):
                if M[base + j] & drop:
                    M[base + j] &= ~drop
                    changed = True
                    if not M[base + j]:
                        return Status.FAIL
        if earlier:
            drop = sum(1 << (y + 1) for y in earlier)
            for j in range(fixed[0], q):
                if M[base + j] & drop:
                    M[base + j] &= ~drop
                    changed = True
                    if not M[base + j]:
                        return Status.FAIL
    return Status.CHANGED if changed else Status.UNCHANGED


def propagate_km_rules(plan: SlotPlan, sets: StaticSets, inst: Instance | None = None, trains=None) -> Status:
    """Maintenance-limit rules driven by the current km lower bounds."""
    changed = False
    for i in _trains(plan, trains):
        st = _km_rules_train(plan, sets, i)
        if st is Status.FAIL:
            return st
        changed |= st is Status.CHANGED
    return Status.CHANGED if changed else Status.UNCHANGED


# -- fixpoint ----------------------------------------------------------------

_RULES = {
    "trip": _trip_rules_train,
    "maint": _maint_rules_train,
    "km": _km_rules_train,
}


def propagate_fixpoint(
    plan: SlotPlan,
    sets: StaticSets,
    inst: Instance | None = None,
    dirty=None,
    order: tuple[str, ...] = ("trip", "maint", "km"),
    reverse_trains: bool = False,
) -> tuple[SlotPlan, KmState] | None:
    """Run all rule groups until no domain changes; ``None`` signals failure.

    ``plan`` is narrowed in place. ``dirty`` restricts the first round to
    the given trains (others are woken when allDifferent touches them).
    ``order``/``reverse_trains`` only change the schedule of rule
    applications; the resulting domains do not depend on them.
    """
    rules = [_RULES[name] for name in order]
    pending = set(range(plan.m)) if dirty is None else set(dirty)
    while True:
        while pending:
            i = max(pending) if reverse_trains else min(pending)
            pending.discard(i)
            while True:
                changed = False
                for rule in rules:
                    st = rule(plan, sets, i)
                    if st is Status.FAIL:
                        return None
                    changed |= st is Status.CHANGED
                if not changed:
                    break
        woken: set[int] = set()
        if _all_different(plan, woken) is Status.FAIL:
            return None
        if not woken:
            break
        pending = woken
    return plan, compute_km_readings(plan, sets, inst)


# -- objective bounds --------------------------------------------------------

def bound_objectives(plan: SlotPlan, kms: KmState | None, sets: StaticSets, inst: Instance | None = None) -> tuple[int, int]:
    """Upper bound on allocated trips and lower bound on empty km.

    The trip bound counts the trips left in any trip domain. The km bound
    sums, over slots that must hold a trip, the cheapest empty leg (direct or
    via a station of a maintenance type still possible in that slot) from
    any possible previous position to any possible departure station.
    """
    SENT = plan.sent_bit
    FMASK = SENT - 1
    max_trips = (_or(plan.trip) & FMASK).bit_count()
    lwb = 0
    q = plan.q
    for i in range(plan.m):
        for j in range(q):
            idx = i * q + j
            if plan.trip[idx] & SENT:
                continue
            L = _slot_legs(plan, sets, i, j)
            m = plan.maint[idx]
            options = []
            if m & 1:
                options.append(min(L.to_r[r] + L.empty_from_r[r] for r in L.prev))
            for w in bits(m >> 1):
                options.append(min(L.to_r[r] + L.empty_from_r[r] for r in sets.type_st[w]))
            lwb += min(options)
    return max_trips, int(lwb)
