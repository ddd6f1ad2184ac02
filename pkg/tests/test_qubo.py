import itertools
import math
import random
from fractions import Fraction

import numpy as np
import pytest

from rollstock.cp_search import branch_and_bound
from rollstock.model import Instance, MaintenanceType, Network, Train, Trip
from rollstock.qubo import (
    ExtendedTrip,
    QuboModel,
    QuboSizeError,
    Weights,
    alpha,
    batch_energy_numerators,
    build_extended_trips,
    build_qubo,
    energy_by_tag,
    evaluate_energy,
    export_qubo,
    filter_variables,
    hard_energy,
    immediate_action,
    overlap,
    parse_qubo,
)
from rollstock.qubo_solve import encode_schedule
from rollstock.report import validate_schedule

from oracle import random_instance


def net3():
    st = ("A", "B", "C")
    km = {("A", "B"): 100, ("A", "C"): 200, ("B", "C"): 150}
    mins = {("A", "B"): 60, ("A", "C"): 60, ("B", "C"): 240}
    d, t = {}, {}
    for a in st:
        for b in st:
            k = (a, b) if (a, b) in km else (b, a)
            d[a, b] = 0 if a == b else km[k]
            t[a, b] = 0 if a == b else mins[k]
    return Network(st, d, t)


def ext(dep_st, dep, arr_st, arr, pp=120):
    return ExtendedTrip(0, None, None, dep_st, dep, arr_st, arr, arr - dep, pp, 0)


def instance(trips, trains, types=()):
    fs = tuple(Trip(k, a, b, t0, t0 + d, km, d, pp) for k, (a, b, t0, d, km, pp) in enumerate(trips))
    return Instance(1440, net3(), fs, tuple(trains), tuple(types))


def test_overlap_examples():
    net = net3()
    f1 = ext("A", 500, "B", 600)
    assert overlap(f1, ext("C", 900, "A", 960), net)
    assert not overlap(f1, ext("C", 960, "A", 1000), net)
    assert not overlap(f1, ext("B", 720, "A", 780), net)


def test_extended_trips():
    w = MaintenanceType(0, ("A", "C"), 30, True, 8000)
    inst = instance([("A", "B", 200, 60, 100, 0)], [Train(0, "A", 0, {0: 0})], [w])
    F = build_extended_trips(inst)
    assert len(F) == 3
    assert F[0] == ExtendedTrip.of(inst.trips[0]) and not F[0].has_maintenance
    at_a = next(f for f in F if f.maintenance_station == "A")
    assert at_a.departure_time == 200 - 30 and at_a.maintenance_leg_km == 0
    at_c = next(f for f in F if f.maintenance_station == "C")
    assert at_c.departure_time == 200 - 60 - 30 and at_c.maintenance_leg_km == 200
    assert at_c.arrival_time == 260 and at_c.duration == 260 - 110


def test_negative_departure_dropped():
    w = MaintenanceType(0, ("C",), 30, True, 8000)
    inst = instance([("A", "B", 80, 60, 100, 0)], [Train(0, "A", 0, {0: 0})], [w])
    assert len(build_extended_trips(inst)) == 1


def test_filter_slot0_reachability():
    inst = instance([("C", "B", 30, 60, 150, 0)], [Train(0, "A", 0, {})])
    idx = filter_variables(inst, build_extended_trips(inst), 3)
    assert (0, 0, 0) not in idx and (1, 0, 0) in idx and (2, 0, 0) in idx
    assert len(idx) == 2


def test_variable_count_formula():
    w = MaintenanceType(0, ("A", "B"), 30, True, 8000)
    trips = [("A", "B", 300, 60, 100, 0), ("B", "C", 500, 240, 150, 0)]
    trains = [Train(0, "A", 0, {0: 0}), Train(1, "B", 0, {0: 0})]
    inst = instance(trips, trains, [w])
    F = build_extended_trips(inst)
    for q in (1, 3):
        assert len(filter_variables(inst, F, q)) == len(F) * 2 * q
    with pytest.raises(ValueError):
        filter_variables(inst, F, 0)


def test_alpha_and_immediate_action():
    assert alpha(8000, 6700) == 0.5
    assert alpha(8000, 8000) == pytest.approx(1 / (math.exp(-2.6) + 1), abs=1e-12)
    assert alpha(8000, 8000) == pytest.approx(0.9309, abs=1e-4)
    assert alpha(8000, 0) == pytest.approx(1.5e-6, rel=0.05)
    assert alpha(10**7, 0) == 0.0
    assert immediate_action(8000, 7600)
    assert not immediate_action(8000, 7500)
    assert not immediate_action(8000, 7400)


def test_single_variable_diagonal():
    inst = instance([("C", "B", 300, 240, 150, 0)], [Train(0, "A", 0, {})])
    m = build_qubo(inst, q=1)
    assert m.n == 1
    assert m.coefficient(0, 0) == -100 + 200
    assert export_qubo(m).count("\n") == 2


def test_duplicate_trip_pair_gets_twice_the_penalty():
    inst = instance([("A", "B", 300, 60, 100, 0)], [Train(0, "A", 0, {}), Train(1, "A", 0, {})])
    m = build_qubo(inst, q=1)
    assert m.n == 2
    assert m.coefficient(0, 1) == 2 * 1000


def test_slot_clash_and_overlap_terms():
    trips = [("A", "B", 300, 60, 100, 0), ("A", "C", 310, 60, 200, 0)]
    inst = instance(trips, [Train(0, "A", 0, {})])
    m = build_qubo(inst, q=2)
    ids = m.index.ids
    # same slot, same train: clash
    assert m.tag_terms["c1"][ids[0, 0, 0], ids[0, 1, 0]] == 2 * 1000
    # trip 1 cannot follow trip 0: overlap in later slot
    assert m.tag_terms["c3"][ids[0, 0, 0], ids[1, 1, 0]] == 1000
    # a trip cannot follow itself
    assert m.tag_terms["c3"][ids[0, 0, 0], ids[1, 0, 0]] == 1000


def test_feasible_schedules_have_zero_hard_energy():
    rng = random.Random(3)
    for _ in range(60):
        inst = random_instance(rng)
        res = branch_and_bound(inst)
        m = build_qubo(inst, q=max(res.q, 1))
        x = encode_schedule(inst, m.extended, m.index, res.schedule)
        assert hard_energy(m, x) == 0


def test_empty_km_accounting():
    rng = random.Random(4)
    for _ in range(60):
        inst = random_instance(rng)
        res = branch_and_bound(inst)
        m = build_qubo(inst, q=max(res.q, 1))
        x = encode_schedule(inst, m.extended, m.index, res.schedule)
        rep = validate_schedule(inst, res.schedule)
        unmodelled = sum(m.extended[m.index.keys[v][1]].maintenance_leg_km for v in np.flatnonzero(x))
        assert energy_by_tag(m, x)["km"] == rep.empty_km - unmodelled


def test_immediate_maintenance_sign_structure():
    w = MaintenanceType(0, ("A",), 30, True, 8000)
    inst = instance([("A", "B", 300, 60, 100, 0)], [Train(0, "A", 0, {0: 7600})], [w])
    m = build_qubo(inst)
    a = Fraction(alpha(8000, 7600))
    zero = np.zeros(m.n, dtype=np.int8)
    assert energy_by_tag(m, zero)["cm1"] == 40 * a
    assert energy_by_tag(m, zero)["cm2"] == 0
    x = zero.copy()
    e_maint = next(e for e, f in enumerate(m.extended) if f.has_maintenance)
    x[m.index.id(0, e_maint, 0)] = 1
    parts = energy_by_tag(m, x)
    assert parts["cm1"] == 0
    assert parts["cm3"] == 40 * (1 - a)


def test_non_urgent_types_use_all_slots():
    w = MaintenanceType(0, ("A",), 30, True, 8000)
    inst = instance([("A", "B", 300, 60, 100, 0)], [Train(0, "A", 0, {0: 1000})], [w])
    m = build_qubo(inst)
    e_maint = next(e for e, f in enumerate(m.extended) if f.has_maintenance)
    x = np.zeros(m.n, dtype=np.int8)
    x[m.index.id(2, e_maint, 0)] = 1
    assert energy_by_tag(m, x)["cm2"] == 0
    assert energy_by_tag(m, x)["cm1"] == 0


def _dense_energy(m, x):
    Q = [[Fraction(0)] * m.n for _ in range(m.n)]
    for (a, b), c in m.terms.items():
        Q[a][b] = Fraction(c, m.denominator)
    e = m.offset_value
    for a in range(m.n):
        for b in range(m.n):
            e += Q[a][b] * x[a] * x[b]
    return e


def _small_models(rng, count, cap=20):
    out = []
    while len(out) < count:
        inst = random_instance(rng, max_trips=3, max_trains=2, max_types=1)
        m = build_qubo(inst, q=2)
        if 0 < m.n <= cap:
            out.append((inst, m))
    return out


def test_energy_matches_dense_evaluation():
    rng = random.Random(10)
    nprng = np.random.default_rng(10)
    for inst, m in _small_models(rng, 25):
        X = nprng.integers(0, 2, size=(8, m.n))
        batch = batch_energy_numerators(m, X)
        for row, num in zip(X, batch):
            e = evaluate_energy(m, row)
            assert e == _dense_energy(m, row)
            assert Fraction(int(num), m.denominator) == e
            assert sum(energy_by_tag(m, row).values()) == e


def test_energy_examples():
    m = QuboModel.from_coefficients(2, {(0, 0): Fraction(-3, 7), (1, 0): 2}, offset=5)
    assert evaluate_energy(m, [0, 0]) == 5
    assert evaluate_energy(m, [1, 0]) == 5 - Fraction(3, 7)
    assert m.coefficient(1, 0) == 2
    with pytest.raises(ValueError):
        evaluate_energy(m, [1])


def test_export_round_trip():
    rng = random.Random(11)
    for _, m in _small_models(rng, 10, cap=200):
        text = export_qubo(m)
        back = parse_qubo(text)
        assert export_qubo(back) == text
        assert back.n == m.n and back.nonzeros == m.nonzeros
        lines = text.splitlines()[1:]
        keys = [tuple(map(int, ln.split()[:2])) for ln in lines]
        assert keys == sorted(keys) and all(a <= b for a, b in keys)
    odd = QuboModel.from_coefficients(3, {(0, 1): Fraction(1, 3), (2, 2): Fraction(-5, 8)}, offset=Fraction(1, 2))
    text = export_qubo(odd)
    assert text == "3 2 0.5\n0 1 1/3\n2 2 -0.625\n"
    assert export_qubo(parse_qubo(text)) == text


def test_export_of_empty_model():
    assert export_qubo(QuboModel.from_coefficients(0, {})) == "0 0 0\n"
    with pytest.raises(ValueError):
        parse_qubo("")


def test_size_cap():
    rng = random.Random(12)
    inst, m = _small_models(rng, 1)[0]
    with pytest.raises(QuboSizeError):
        build_qubo(inst, q=2, max_nonzeros=m.nonzeros - 1)
    assert build_qubo(inst, q=2, max_nonzeros=m.nonzeros).nonzeros == m.nonzeros


def test_default_weights_and_q():
    rng = random.Random(13)
    inst, _ = _small_models(rng, 1)[0]
    m = build_qubo(inst)
    assert m.q == 3
    assert {t: m.tag_weight(t) for t in ("reward", "c1", "c2", "c3", "km", "cm1", "cm2", "cm3")} == {
        "reward": 100, "c1": 1000, "c2": 1000, "c3": 1000, "km": 1, "cm1": 40, "cm2": 40, "cm3": 40}


def test_weights_parse():
    w = Weights.parse("reward=50, km=0")
    assert (w.reward, w.penalty, w.km, w.maintenance) == (50, 1000, 0, 40)
    assert Weights.parse("penalty=1/3").penalty == Fraction(1, 3)
    with pytest.raises(ValueError):
        Weights.parse("speed=3")


def test_weights_scale_tags_linearly():
    rng = random.Random(14)
    for inst, m in _small_models(rng, 5):
        m2 = build_qubo(inst, q=2, weights=Weights(reward=200, penalty=1000, km=3, maintenance=40))
        for bits in itertools.islice(itertools.product((0, 1), repeat=m.n), 20):
            p1, p2 = energy_by_tag(m, bits), energy_by_tag(m2, bits)
            assert p2["reward"] == 2 * p1["reward"] and p2["km"] == 3 * p1["km"]
            assert p2["c1"] == p1["c1"] and p2["cm3"] == p1["cm3"]
