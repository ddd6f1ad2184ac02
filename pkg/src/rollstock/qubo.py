"""QUBO formulation of the train/trip assignment problem.

Variables are X[i, e, z]: train ``z`` runs extended trip ``e`` in slot ``i``.
An extended trip is a regular trip, optionally preceded by a maintenance
task at one of the type's stations. Hard constraints (one trip per slot,
each base trip at most once, no overlap) become penalty pairs; empty km,
the trip reward and the maintenance incentives are folded into the same
upper-triangular matrix.

Coefficients are kept exactly. Every weight and every alpha factor is a
rational, so the whole model is stored as integer numerators over one
common denominator. Float copies exist only for fast move evaluation.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Mapping, Sequence

import numpy as np

from .model import Instance, Network, Trip

# constants of the maintenance urgency heuristic
ALPHA_OFFSET_KM = 1300
ALPHA_STEEPNESS = 0.002
IMMEDIATE_MARGIN_KM = 500

DEFAULT_Q = 3
TAGS = ("reward", "c1", "c2", "c3", "km", "cm1", "cm2", "cm3")
HARD_TAGS = ("c1", "c2", "c3")


class QuboSizeError(RuntimeError):
    """The model has more non-zero coefficients than the configured cap."""

    def __init__(self, nonzeros: int, cap: int):
        super().__init__(f"QUBO has {nonzeros} non-zero coefficients, cap is {cap}")
        self.nonzeros = nonzeros
        self.cap = cap


@dataclass(frozen=True)
class ExtendedTrip:
    base: int
    maintenance_type: int | None
    maintenance_station: str | None
    departure_station: str
    departure_time: int
    arrival_station: str
    arrival_time: int
    duration: int
    post_proc: int
    base_km: int
    maintenance_leg_km: int = 0

    @classmethod
    def of(cls, f: Trip) -> "ExtendedTrip":
        return cls(f.id, None, None, f.departure_station, f.departure_time,
                   f.arrival_station, f.arrival_time, f.duration, f.post_proc, f.distance)

    @property
    def has_maintenance(self) -> bool:
        return self.maintenance_type is not None


@dataclass(frozen=True)
class Weights:
    reward: Fraction = Fraction(100)
    penalty: Fraction = Fraction(1000)
    km: Fraction = Fraction(1)
    maintenance: Fraction = Fraction(40)

    def __post_init__(self):
        for name in ("reward", "penalty", "km", "maintenance"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))

    @classmethod
    def parse(cls, text: str) -> "Weights":
        """Parse ``reward=100,penalty=1000,...``; missing keys keep defaults."""
        vals = {}
        for part in filter(None, (p.strip() for p in text.split(","))):
            key, sep, val = part.partition("=")
            if not sep or key.strip() not in cls.__dataclass_fields__:
                raise ValueError(f"bad weight {part!r}")
            vals[key.strip()] = Fraction(val.strip())
        return cls(**vals)

    def for_tag(self, tag: str) -> Fraction:
        if tag == "reward":
            return self.reward
        if tag in HARD_TAGS:
            return self.penalty
        if tag == "km":
            return self.km
        return self.maintenance


def overlap(f1: ExtendedTrip, f2: ExtendedTrip, net: Network) -> bool:
    """True when ``f2`` cannot follow ``f1`` on the same train."""
    return f2.departure_time < f1.arrival_time + f1.post_proc + net.duration(f1.arrival_station, f2.departure_station)


def build_extended_trips(inst: Instance) -> tuple[ExtendedTrip, ...]:
    """Each trip, followed by its maintenance variants (type order, then station order)."""
    net = inst.network
    out = []
    for f in inst.trips:
        out.append(ExtendedTrip.of(f))
        for w in inst.maintenance_types:
            for s in w.stations:
                dep = f.departure_time - net.duration(s, f.departure_station) - w.duration
                if dep < 0:
                    continue
                out.append(ExtendedTrip(
                    f.id, w.id, s, s, dep, f.arrival_station, f.arrival_time,
                    f.arrival_time - dep, f.post_proc, f.distance, net.distance(s, f.departure_station),
                ))
    return tuple(out)


@dataclass(frozen=True)
class VariableIndex:
    """Dense numbering of the (slot, extended trip, train) triples kept."""

    q: int
    keys: tuple[tuple[int, int, int], ...]
    ids: Mapping[tuple[int, int, int], int] = field(repr=False)

    def __len__(self) -> int:
        return len(self.keys)

    def __contains__(self, key) -> bool:
        return key in self.ids

    def id(self, i: int, e: int, z: int) -> int:
        return self.ids[i, e, z]


def filter_variables(inst: Instance, F_all: Sequence[ExtendedTrip], q: int = DEFAULT_Q) -> VariableIndex:
    """Index X[i, e, z] in (slot, extended trip, train) order.

    Slot 0 skips trips a train cannot reach from its initial station in time.
    """
    if q < 1:
        raise ValueError("q must be at least 1")
    net = inst.network
    keys = []
    for i in range(q):
        for e, f in enumerate(F_all):
            for z in inst.trains:
                if i == 0 and f.departure_time < net.duration(z.initial_station, f.departure_station) + z.earliest_time:
                    continue
                keys.append((i, e, z.id))
    keys = tuple(keys)
    return VariableIndex(q, keys, {k: v for v, k in enumerate(keys)})


def alpha(limit: int, initial_km: int) -> float:
    """Maintenance urgency in (0, 1), 0.5 when ``limit - initial_km`` is 1300 km."""
    try:
        return 1.0 / (math.exp(ALPHA_STEEPNESS * (limit - ALPHA_OFFSET_KM - initial_km)) + 1.0)
    except OverflowError:
        return 0.0


def immediate_action(limit: int, initial_km: int) -> bool:
    return limit < initial_km + IMMEDIATE_MARGIN_KM


# -- the model ---------------------------------------------------------------

@dataclass(frozen=True)
class QuboModel:
    """Upper-triangular QUBO with exact integer numerators.

    ``terms[(a, b)] / denominator`` is the coefficient of ``x_a x_b``
    (``a <= b``; ``a == b`` is linear). ``tag_terms`` and ``tag_offsets``
    split the same numbers by the cost-function term that produced them,
    already multiplied by that term's weight.
    """

    n: int
    denominator: int
    offset: int
    terms: Mapping[tuple[int, int], int]
    weights: Weights = Weights()
    q: int | None = None
    tag_terms: Mapping[str, Mapping[tuple[int, int], int]] = field(default_factory=dict, repr=False)
    tag_offsets: Mapping[str, int] = field(default_factory=dict, repr=False)
    index: VariableIndex | None = field(default=None, repr=False)
    extended: tuple[ExtendedTrip, ...] | None = field(default=None, repr=False)

    @property
    def nonzeros(self) -> int:
        return len(self.terms)

    def coefficient(self, a: int, b: int) -> Fraction:
        if a > b:
            a, b = b, a
        return Fraction(self.terms.get((a, b), 0), self.denominator)

    @property
    def offset_value(self) -> Fraction:
        return Fraction(self.offset, self.denominator)

    def tag_weight(self, tag: str) -> Fraction:
        return self.weights.for_tag(tag)

    @classmethod
    def from_coefficients(cls, n: int, coeffs: Mapping[tuple[int, int], object], offset=0) -> "QuboModel":
        """Model from arbitrary rational coefficients (pairs are folded to a <= b)."""
        fr = {}
        for (a, b), c in coeffs.items():
            if not (0 <= a < n and 0 <= b < n):
                raise ValueError(f"index ({a}, {b}) out of range")
            key = (a, b) if a <= b else (b, a)
            fr[key] = fr.get(key, Fraction(0)) + Fraction(c)
        offset = Fraction(offset)
        D = math.lcm(offset.denominator, *(c.denominator for c in fr.values()))
        terms = {k: int(c * D) for k, c in sorted(fr.items()) if c != 0}
        return cls(n, D, int(offset * D), terms)

    def dense(self) -> np.ndarray:
        """Float upper-triangular matrix."""
        Q = np.zeros((self.n, self.n))
        for (a, b), v in self.terms.items():
            Q[a, b] = v / self.denominator
        return Q


class _Acc:
    """Per-tag accumulation of rational coefficients."""

    def __init__(self):
        self.terms = {t: defaultdict(Fraction) for t in TAGS}
        self.offsets = {t: Fraction(0) for t in TAGS}

    def add(self, tag: str, a: int, b: int, c) -> None:
        if a > b:
            a, b = b, a
        self.terms[tag][a, b] += c

    def add_int_pairs(self, tag: str, pairs: Iterable[tuple[int, int]], c: int = 1) -> None:
        d = self.terms[tag]
        for a, b in pairs:
            d[(a, b) if a <= b else (b, a)] += c


def assemble_qubo(inst: Instance, F_all: Sequence[ExtendedTrip], index: VariableIndex,
                  weights: Weights = Weights(), max_nonzeros: int | None = None) -> QuboModel:
    """Literal expansion of the weighted cost function into a QuboModel.

    Ordered-pair sums stay ordered, so an unordered pair of clashing
    variables collects the penalty twice. Squares are expanded with
    ``x*x = x``; their constants go to the offset.
    """
    net = inst.network
    q = index.q
    acc = _Acc()
    ids = index.ids

    by_slot_train: dict[tuple[int, int], list[tuple[int, int]]] = defaultdict(list)  # (i, z) -> [(e, var)]
    by_base: dict[int, list[int]] = defaultdict(list)
    for v, (i, e, z) in enumerate(index.keys):
        by_slot_train[i, z].append((e, v))
        by_base[F_all[e].base].append(v)

    c1 = acc.terms["c1"]
    for group in by_slot_train.values():
        for x in range(len(group)):
            for y in range(x + 1, len(group)):
                a, b = group[x][1], group[y][1]
                c1[a, b] += 2

    c2 = acc.terms["c2"]
    for vs in by_base.values():
        for x in range(len(vs)):
            for y in range(x + 1, len(vs)):
                c2[vs[x], vs[y]] += 2

    # c3: slots i1 < i2 of one train, f2 cannot follow f1 (includes f1 == f2)
    ov_cache: dict[tuple[int, int], bool] = {}

    def ov(e1: int, e2: int) -> bool:
        r = ov_cache.get((e1, e2))
        if r is None:
            r = ov_cache[e1, e2] = overlap(F_all[e1], F_all[e2], net)
        return r

    c3 = acc.terms["c3"]
    for z in inst.trains:
        for i1 in range(q):
            for i2 in range(i1 + 1, q):
                for e1, a in by_slot_train.get((i1, z.id), ()):
                    for e2, b in by_slot_train.get((i2, z.id), ()):
                        if ov(e1, e2):
                            c3[(a, b) if a <= b else (b, a)] += 1

    km = acc.terms["km"]
    reward = acc.terms["reward"]
    for z in inst.trains:
        for e, v in by_slot_train.get((0, z.id), ()):
            d = net.distance(z.initial_station, F_all[e].departure_station)
            if d:
                km[v, v] += d
            reward[v, v] -= 1
        for i in range(q - 1):
            for e1, a in by_slot_train.get((i, z.id), ()):
                for e2, b in by_slot_train.get((i + 1, z.id), ()):
                    if e1 == e2:
                        continue
                    key = (a, b) if a <= b else (b, a)
                    reward[key] -= 1
                    d = net.distance(F_all[e1].arrival_station, F_all[e2].departure_station)
                    if d:
                        km[key] += d

    # maintenance incentives, per train and type
    for z in inst.trains:
        for w in inst.maintenance_types:
            a_float = alpha(w.limit, z.initial_km[w.id])
            a = Fraction(a_float)
            if immediate_action(w.limit, z.initial_km[w.id]):
                tag, slots = "cm1", (0,)
            else:
                tag, slots = "cm2", range(q)
            chosen = [v for i in slots for e, v in by_slot_train.get((i, z.id), ()) if F_all[e].maintenance_type == w.id]
            # a * (sum x - 1)^2 = a * (-sum x + 2 sum_{x<y} x y + 1)
            for x, v in enumerate(chosen):
                acc.add(tag, v, v, -a)
                for u in chosen[x + 1:]:
                    acc.add(tag, v, u, 2 * a)
            acc.offsets[tag] += a
            for i in range(q):
                for e, v in by_slot_train.get((i, z.id), ()):
                    if F_all[e].maintenance_type == w.id:
                        acc.add("cm3", v, v, 1 - a)

    return _finish(acc, len(index), weights, q, index, tuple(F_all), max_nonzeros)


def _finish(acc: _Acc, n: int, weights: Weights, q, index, extended, max_nonzeros) -> QuboModel:
    weighted: dict[str, dict[tuple[int, int], Fraction]] = {}
    offsets: dict[str, Fraction] = {}
    denoms = set()
    for tag in TAGS:
        wgt = weights.for_tag(tag)
        weighted[tag] = {k: c * wgt for k, c in acc.terms[tag].items() if c != 0 and wgt != 0}
        offsets[tag] = acc.offsets[tag] * wgt
        denoms.add(offsets[tag].denominator)
        denoms.update(c.denominator for c in weighted[tag].values())
    D = math.lcm(*denoms) if denoms else 1

    tag_terms: dict[str, dict[tuple[int, int], int]] = {}
    total: dict[tuple[int, int], int] = defaultdict(int)
    for tag in TAGS:
        if D == 1:
            t = {k: int(c) for k, c in weighted[tag].items()}
        else:
            t = {k: c.numerator * (D // c.denominator) for k, c in weighted[tag].items()}
        tag_terms[tag] = t
        for k, c in t.items():
            total[k] += c
    terms = {k: total[k] for k in sorted(total) if total[k] != 0}
    if max_nonzeros is not None and len(terms) > max_nonzeros:
        raise QuboSizeError(len(terms), max_nonzeros)
    tag_offsets = {t: int(offsets[t] * D) for t in TAGS}
    return QuboModel(n, D, sum(tag_offsets.values()), terms, weights, q, tag_terms, tag_offsets, index, extended)


def build_qubo(inst: Instance, q: int = DEFAULT_Q, weights: Weights = Weights(),
               max_nonzeros: int | None = None) -> QuboModel:
    F_all = build_extended_trips(inst)
    return assemble_qubo(inst, F_all, filter_variables(inst, F_all, q), weights, max_nonzeros)


# -- evaluation --------------------------------------------------------------

def energy_numerator(model: QuboModel, bits, terms: Mapping[tuple[int, int], int] | None = None,
                     offset: int | None = None) -> int:
    terms = model.terms if terms is None else terms
    e = model.offset if offset is None else offset
    x = bits
    for (a, b), c in terms.items():
        if x[a] and x[b]:
            e += c
    return e


def evaluate_energy(model: QuboModel, bits) -> Fraction:
    """Exact ``x^T Q x + offset``."""
    if len(bits) != model.n:
        raise ValueError(f"expected {model.n} bits, got {len(bits)}")
    return Fraction(energy_numerator(model, bits), model.denominator)


def energy_by_tag(model: QuboModel, bits) -> dict[str, Fraction]:
    """Weighted contribution of each cost-function term."""
    if len(bits) != model.n:
        raise ValueError(f"expected {model.n} bits, got {len(bits)}")
    return {
        t: Fraction(energy_numerator(model, bits, model.tag_terms.get(t, {}), model.tag_offsets.get(t, 0)),
                    model.denominator)
        for t in TAGS
    }


def hard_energy(model: QuboModel, bits) -> Fraction:
    parts = energy_by_tag(model, bits)
    return sum((parts[t] for t in HARD_TAGS), Fraction(0))


def batch_energy_numerators(model: QuboModel, X: np.ndarray) -> np.ndarray:
    """Exact energy numerators for every row of a 0/1 matrix.

    Uses int64 arithmetic when the numerators provably fit, Python ints
    (object arrays) otherwise.
    """
    X = np.asarray(X, dtype=np.int64)
    if X.ndim != 2 or X.shape[1] != model.n:
        raise ValueError("expected a (k, n) bit matrix")
    bound = abs(model.offset) + sum(abs(c) for c in model.terms.values())
    if bound < 2**62:
        e = np.full(X.shape[0], model.offset, dtype=np.int64)
        for (a, b), c in model.terms.items():
            e += c * (X[:, a] & X[:, b])
        return e
    e = np.full(X.shape[0], model.offset, dtype=object)
    for (a, b), c in model.terms.items():
        e += (X[:, a] & X[:, b]).astype(object) * c
    return e


# -- text format -------------------------------------------------------------

def _fmt(num: int, den: int) -> str:
    fr = Fraction(num, den)
    n, d = fr.numerator, fr.denominator
    if d == 1:
        return str(n)
    twos = (d & -d).bit_length() - 1
    fives = 0
    rest = d >> twos
    while rest % 5 == 0:
        rest //= 5
        fives += 1
    if rest != 1:
        return f"{n}/{d}"
    k = max(twos, fives)
    scaled = abs(n) * 10**k // d
    sign = "-" if n < 0 else ""
    digits = str(scaled).rjust(k + 1, "0")
    return f"{sign}{digits[:-k]}.{digits[-k:]}"


def _parse_num(text: str) -> Fraction:
    return Fraction(text)


def export_qubo(model: QuboModel) -> str:
    """Coordinate-list text: ``n nnz offset`` then ``i j coefficient`` lines.

    Coefficients are exact: terminating decimals where possible,
    ``p/q`` otherwise.
    """
    D = model.denominator
    lines = [f"{model.n} {len(model.terms)} {_fmt(model.offset, D)}"]
    lines += [f"{a} {b} {_fmt(c, D)}" for (a, b), c in sorted(model.terms.items())]
    return "\n".join(lines) + "\n"


def parse_qubo(text: str) -> QuboModel:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or len(rows[0]) != 3:
        raise ValueError("missing QUBO header")
    try:
        n, nnz = int(rows[0][0]), int(rows[0][1])
        offset = _parse_num(rows[0][2])
        coeffs = {}
        for r in rows[1:]:
            if len(r) != 3:
                raise ValueError(f"bad coefficient line {' '.join(r)!r}")
            a, b = int(r[0]), int(r[1])
            if a > b or (a, b) in coeffs:
                raise ValueError(f"entry ({a}, {b}) not upper-triangular or repeated")
            coeffs[a, b] = _parse_num(r[2])
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"malformed QUBO file: {exc}") from None
    if len(coeffs) != nnz:
        raise ValueError(f"header announces {nnz} entries, found {len(coeffs)}")
    return QuboModel.from_coefficients(n, coeffs, offset)
