"""Brute-force reference solver and random desk-scale instances.

Kept independent of the package's solvers: it enumerates every trip
sequence, maintenance choice and maintenance station per train and
simulates it directly.
"""
from __future__ import annotations

import itertools
import random

from rollstock.model import Instance, MaintenanceType, Network, Train, Trip


def _closure(w):
    n = len(w)
    d = [row[:] for row in w]
    for k in range(n):
        for a in range(n):
            for b in range(n):
                if d[a][k] + d[k][b] < d[a][b]:
                    d[a][b] = d[a][k] + d[k][b]
    return d


def random_instance(rng: random.Random, max_trips=6, max_trains=2, max_types=2, max_slots=3) -> Instance:
    """Random metric instance with computeSlotCount <= max_slots."""
    while True:
        l = rng.randint(2, 3)
        names = tuple("ABC"[:l])
        dist = _closure([[0 if a == b else rng.randint(20, 300) for b in range(l)] for a in range(l)])
        dur = _closure([[0 if a == b else rng.randint(10, 90) for b in range(l)] for a in range(l)])
        net = Network(
            names,
            {(names[a], names[b]): dist[a][b] for a in range(l) for b in range(l)},
            {(names[a], names[b]): dur[a][b] for a in range(l) for b in range(l)},
        )
        n = rng.randint(1, max_trips)
        legs = []
        for _ in range(n):
            a = rng.randrange(l)
            b = rng.choice([x for x in range(l) if x != a])
            legs.append((a, b, dur[a][b] + rng.choice([0, 0, 5, 15]), dist[a][b] + rng.choice([0, 0, 10, 40])))
        durs = sorted(x[2] for x in legs)
        if n > max_slots:
            e = sum(durs[: max_slots + 1])
        else:
            e = rng.randint(150, 500)
        if max(durs) >= e:
            continue
        trips = []
        for k, (a, b, d, km) in enumerate(legs):
            t0 = rng.randrange(0, e - d)
            trips.append(Trip(k, names[a], names[b], t0, t0 + d, km, d, rng.choice([0, 10, 30])))
        p = rng.randint(0, max_types)
        types = []
        np_limits = set()
        for u in range(p):
            sts = tuple(sorted(rng.sample(names, rng.randint(1, l))))
            periodic = rng.random() < 0.6
            while True:
                limit = rng.randint(150, 1200)
                if periodic or limit not in np_limits:
                    break
            if not periodic:
                np_limits.add(limit)
            types.append(MaintenanceType(u, sts, rng.choice([0, 10, 25]), periodic, limit))
        trains = []
        for i in range(rng.randint(1, max_trains)):
            trains.append(Train(i, rng.choice(names), rng.choice([0, 0, 20]),
                                {w.id: rng.randint(0, w.limit) for w in types}))
        return Instance(e, net, tuple(trips), tuple(trains), tuple(types))


def simulate(inst: Instance, i: int, trips, maints, stations):
    """(feasible, empty_km) of one train's sequence with explicit stations."""
    net = inst.network
    z = inst.trains[i]
    W = inst.maintenance_types
    pos, t = z.initial_station, z.earliest_time
    km = [z.initial_km[w.id] for w in W]
    done = [False] * len(W)
    top = 0
    empty = 0

    def go(to, d_km, d_min):
        nonlocal pos, t
        t += d_min
        pos = to
        for u, w in enumerate(W):
            km[u] += d_km
            if km[u] > w.limit and (w.is_periodic or not done[u]):
                return False
        return True

    s_it = iter(stations)
    for k, u in zip(trips, maints):
        f = inst.trips[k]
        if u >= 0:
            s = next(s_it)
            empty += net.distance(pos, s)
            if not go(s, net.distance(pos, s), net.duration(pos, s)):
                return False, None
            t += W[u].duration
            if W[u].is_periodic:
                km[u] = 0
            else:
                if W[u].limit < top:
                    return False, None
                top = max(top, W[u].limit)
                done[u] = True
        empty += net.distance(pos, f.departure_station)
        if not go(f.departure_station, net.distance(pos, f.departure_station), net.duration(pos, f.departure_station)):
            return False, None
        if t > f.departure_time:
            return False, None
        if not go(f.arrival_station, f.distance, 0):
            return False, None
        t = f.arrival_time + f.post_proc
    return True, empty


def train_assignments(inst: Instance, i: int, q: int) -> dict[tuple, int]:
    """Feasible (trips, maints) sequences of length <= q with their minimal empty km."""
    out: dict[tuple, int] = {}
    W = inst.maintenance_types

    def rec(trips, maints):
        best = None
        station_sets = [W[u].stations for u in maints if u >= 0]
        for combo in itertools.product(*station_sets):
            ok, empty = simulate(inst, i, trips, maints, combo)
            if ok and (best is None or empty < best):
                best = empty
        if best is None:
            return
        out[tuple(trips), tuple(maints)] = best
        if len(trips) == q:
            return
        for k in range(inst.n):
            if k in trips:
                continue
            for u in range(-1, inst.p):
                rec(trips + [k], maints + [u])

    rec([], [])
    return out


def optimum(inst: Instance, q: int, big_m: int = 1_000_000):
    """Best ``big_m * trips - empty_km`` over all train-disjoint combinations."""
    per_train = [train_assignments(inst, i, q) for i in range(inst.m)]
    best = None

    def rec(i, used, trips, km):
        nonlocal best
        if i == inst.m:
            obj = big_m * trips - km
            if best is None or obj > best:
                best = obj
            return
        for (ts, _), e in per_train[i].items():
            if used.isdisjoint(ts):
                rec(i + 1, used | set(ts), trips + len(ts), km + e)

    rec(0, frozenset(), 0, 0)
    return best, per_train
