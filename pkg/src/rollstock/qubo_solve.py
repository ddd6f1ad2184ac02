"""Classical QUBO minimisers and decoding of bit vectors into schedules.

All solvers share :class:`EnergyTracker`: float local fields pick moves
quickly, while the energy of the current vector is maintained exactly as
an integer numerator, so reported energies never drift.
"""
from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np
from scipy import sparse

from .model import EmptyRide, Instance, MaintenanceTask, RegularTrip, Schedule
from .qubo import ExtendedTrip, QuboModel, VariableIndex

EXHAUSTIVE_CAP = 24


@dataclass
class SolverParams:
    variant: str = "tabu"
    time_limit: float | None = None
    max_iterations: int | None = None
    tenure: int | None = None
    restarts: int = 10
    patience: int | None = None
    t_start: float | None = None
    t_end: float | None = None
    cooling: float | None = None
    sweeps: int = 1000
    seed: int = 0
    workers: int = 1


@dataclass
class Trace:
    best: list[tuple[int, float]] = field(default_factory=list)  # (iteration, best energy)
    iterations: int = 0
    budget_exhausted: bool = False
    elapsed: float = 0.0


@dataclass
class SolveResult:
    bits: np.ndarray
    energy: Fraction
    trace: Trace


class EnergyTracker:
    """Current bit vector with float local fields and an exact energy."""

    def __init__(self, model: QuboModel, bits=None):
        n = model.n
        self.model = model
        self.n = n
        rows, cols, vals = [], [], []
        self.diag = np.zeros(n)
        self.diag_num = [0] * n
        for (a, b), c in model.terms.items():
            if a == b:
                self.diag[a] = c / model.denominator
                self.diag_num[a] = c
            else:
                rows += [a, b]
                cols += [b, a]
                vals += [c, c]
        W = sparse.csr_matrix(
            (np.asarray(vals, dtype=float) / model.denominator, (rows, cols)), shape=(n, n)
        )
        W.sum_duplicates()
        self.W = W
        nbr: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        for (a, b), c in model.terms.items():
            if a != b:
                nbr[a].append((b, c))
                nbr[b].append((a, c))
        self.nbr = nbr
        self.reset(np.zeros(n, dtype=np.int8) if bits is None else bits)

    def reset(self, bits) -> None:
        self.x = np.array(bits, dtype=np.int8).copy()
        if self.x.shape != (self.n,):
            raise ValueError(f"expected {self.n} bits")
        self.field = self.W @ self.x.astype(float)
        num = self.model.offset
        for (a, b), c in self.model.terms.items():
            if self.x[a] and self.x[b]:
                num += c
        self.num = num

    @property
    def energy(self) -> Fraction:
        return Fraction(self.num, self.model.denominator)

    def deltas(self) -> np.ndarray:
        """Float energy change of flipping each bit."""
        return (1 - 2 * self.x) * (self.diag + self.field)

    def exact_delta(self, i: int) -> int:
        x = self.x
        s = self.diag_num[i]
        for j, c in self.nbr[i]:
            if x[j]:
                s += c
        return s if x[i] == 0 else -s

    def flip(self, i: int) -> None:
        self.num += self.exact_delta(i)
        sign = 1.0 if self.x[i] == 0 else -1.0
        self.x[i] ^= 1
        lo, hi = self.W.indptr[i], self.W.indptr[i + 1]
        self.field[self.W.indices[lo:hi]] += sign * self.W.data[lo:hi]


def _check(model: QuboModel) -> None:
    if model.n == 0:
        raise ValueError("model has no variables")


def tabu_search(model: QuboModel, params: SolverParams = SolverParams(),
                on_flip: Callable[[int, int], None] | None = None) -> SolveResult:
    """Single-flip tabu search with recency memory and aspiration.

    Each restart begins from the all-zero vector (the first) or a random
    vector and runs until ``patience`` iterations pass without improving
    the restart's best. ``on_flip(i, numerator)`` is called after every
    flip with the exact energy numerator, for auditing.
    """
    _check(model)
    n = model.n
    rng = np.random.default_rng(params.seed)
    tenure = params.tenure if params.tenure is not None else 10 + math.ceil(math.sqrt(n))
    tenure = min(tenure, max(n - 1, 0))
    patience = params.patience if params.patience is not None else max(20 * n, 200)
    tr = EnergyTracker(model)
    trace = Trace()
    best_x = tr.x.copy()
    best_num = tr.num
    start = time.perf_counter()
    it = 0
    for r in range(max(params.restarts, 1)):
        if r:
            tr.reset(rng.integers(0, 2, n))
        tabu_until = np.zeros(n, dtype=np.int64)
        run_best = tr.num
        since = 0
        while since < patience:
            if params.max_iterations is not None and it >= params.max_iterations:
                trace.budget_exhausted = True
                break
            if params.time_limit is not None and it % 64 == 0 and time.perf_counter() - start >= params.time_limit:
                trace.budget_exhausted = True
                break
            d = tr.deltas()
            cur = tr.num / model.denominator
            allowed = (tabu_until <= it) | (cur + d < best_num / model.denominator - 1e-9)
            if not allowed.any():
                allowed = tabu_until == tabu_until.min()
            cand = np.where(allowed, d, np.inf)
            low = cand.min()
            choices = np.flatnonzero(cand <= low + 1e-9 * (1 + abs(low)))
            i = int(choices[rng.integers(len(choices))]) if len(choices) > 1 else int(choices[0])
            tr.flip(i)
            if on_flip is not None:
                on_flip(i, tr.num)
            tabu_until[i] = it + 1 + tenure
            it += 1
            since += 1
            if tr.num < run_best:
                run_best = tr.num
                since = 0
            if tr.num < best_num:
                best_num = tr.num
                best_x = tr.x.copy()
                trace.best.append((it, best_num / model.denominator))
        if trace.budget_exhausted:
            break
    trace.iterations = it
    trace.elapsed = time.perf_counter() - start
    return SolveResult(best_x, Fraction(best_num, model.denominator), trace)


def simulated_annealing(model: QuboModel, params: SolverParams = SolverParams(variant="annealing"),
                        on_flip: Callable[[int, int], None] | None = None) -> SolveResult:
    """Metropolis single-flip annealing with geometric cooling.

    The start and end temperatures default to scales derived from the
    coefficient magnitudes; ``t_start = 0`` gives greedy descent.
    """
    _check(model)
    n = model.n
    rng = np.random.default_rng(params.seed)
    tr = EnergyTracker(model)
    scale = float(np.abs(tr.diag).max() + np.abs(tr.W).sum(axis=1).max()) or 1.0
    t0 = params.t_start if params.t_start is not None else scale
    t1 = params.t_end if params.t_end is not None else 1e-3 * max(min(scale, 1.0), 1e-9)
    sweeps = max(params.sweeps, 1)
    cooling = params.cooling if params.cooling is not None else (
        (t1 / t0) ** (1.0 / max(sweeps - 1, 1)) if t0 > 0 else 0.0)
    trace = Trace()
    best_x = tr.x.copy()
    best_num = tr.num
    start = time.perf_counter()
    T = t0
    it = 0
    for sweep in range(sweeps):
        if params.time_limit is not None and time.perf_counter() - start >= params.time_limit:
            trace.budget_exhausted = True
            break
        order = rng.permutation(n)
        u = rng.random(n)
        for k in range(n):
            if params.max_iterations is not None and it >= params.max_iterations:
                trace.budget_exhausted = True
                break
            i = int(order[k])
            x_i = tr.x[i]
            d = (1 - 2 * x_i) * (tr.diag[i] + tr.field[i])
            it += 1
            if d <= 0 or (T > 0 and u[k] < math.exp(-d / T)):
                if d == 0 and T == 0:
                    continue
                tr.flip(i)
                if on_flip is not None:
                    on_flip(i, tr.num)
                if tr.num < best_num:
                    best_num = tr.num
                    best_x = tr.x.copy()
                    trace.best.append((it, best_num / model.denominator))
        if trace.budget_exhausted:
            break
        T *= cooling
    trace.iterations = it
    trace.elapsed = time.perf_counter() - start
    return SolveResult(best_x, Fraction(best_num, model.denominator), trace)


def exhaustive_solve(model: QuboModel) -> SolveResult:
    """Exact minimum by enumeration for at most 24 variables.

    Ties go to the vector with the smallest integer value of
    ``sum(x_i * 2**i)``, so bit 0 is the most significant for ties.
    """
    n = model.n
    if n > EXHAUSTIVE_CAP:
        raise ValueError(f"exhaustive search is limited to {EXHAUSTIVE_CAP} variables, model has {n}")
    trace = Trace(iterations=1 << n)
    if n == 0:
        return SolveResult(np.zeros(0, dtype=np.int8), model.offset_value, trace)
    start = time.perf_counter()
    Q = model.dense()
    lo = n // 2
    hi = n - lo

    def table(k: int) -> np.ndarray:
        codes = np.arange(1 << k, dtype=np.int64)
        return ((codes[:, None] >> np.arange(k)) & 1).astype(float)

    XL = table(lo)
    XH = table(hi)
    QL = Q[:lo, :lo]
    QH = Q[lo:, lo:]
    C = Q[:lo, lo:]
    eL = np.einsum("ka,ab,kb->k", XL, QL, XL)
    eH = np.einsum("ka,ab,kb->k", XH, QH, XH)
    E = eL[:, None] + eH[None, :] + (XL @ C) @ XH.T
    emin = E.min()
    tol = 1e-7 * (1.0 + np.abs(Q).sum())
    li, hj = np.nonzero(E <= emin + tol)
    codes = li.astype(np.int64) + (hj.astype(np.int64) << lo)
    best = None
    for code in sorted(codes.tolist()):
        x = [(code >> b) & 1 for b in range(n)]
        num = model.offset
        for (a, b), c in model.terms.items():
            if x[a] and x[b]:
                num += c
        if best is None or num < best[0]:
            best = (num, x)
    trace.elapsed = time.perf_counter() - start
    return SolveResult(np.array(best[1], dtype=np.int8), Fraction(best[0], model.denominator), trace)


_SOLVERS = {"tabu": tabu_search, "annealing": simulated_annealing, "sa": simulated_annealing}


def _run_one(model: QuboModel, params: SolverParams) -> SolveResult:
    return _SOLVERS[params.variant](model, params)


def solve(model: QuboModel, params: SolverParams = SolverParams()) -> SolveResult:
    """Dispatch on ``params.variant``; several workers run independent seeds.

    Worker seeds derive from ``params.seed``; the best energy wins and ties
    go to the lowest worker index.
    """
    if params.variant == "exhaustive":
        return exhaustive_solve(model)
    if params.variant not in _SOLVERS:
        raise ValueError(f"unknown solver variant {params.variant!r}")
    if params.workers <= 1:
        return _run_one(model, params)
    seeds = np.random.SeedSequence(params.seed).generate_state(params.workers)
    jobs = [SolverParams(**{**params.__dict__, "seed": int(s), "workers": 1}) for s in seeds]
    with ProcessPoolExecutor(max_workers=params.workers) as pool:
        results = list(pool.map(_run_one, [model] * len(jobs), jobs))
    return min(enumerate(results), key=lambda t: (t[1].energy, t[0]))[1]


# -- decoding ----------------------------------------------------------------

def decode_solution(inst: Instance, F_all: Sequence[ExtendedTrip], index: VariableIndex, bits) -> Schedule:
    """Turn selected X[i, e, z] into per-train activity lists, without judging feasibility.

    Selected variables are ordered by slot, then by variable id. Empty
    rides are inserted wherever the train is not already at the station
    the next activity starts from.
    """
    net = inst.network
    chosen: dict[int, list[tuple[int, int, int]]] = {}
    for v in np.flatnonzero(np.asarray(bits)):
        i, e, z = index.keys[v]
        chosen.setdefault(z, []).append((i, int(v), e))
    per_train = {}
    for z in sorted(chosen):
        pos = inst.trains[z].initial_station
        acts = []
        for i, _, e in sorted(chosen[z]):
            f = F_all[e]
            base = inst.trips[f.base]
            if f.has_maintenance:
                s = f.maintenance_station
                if pos != s:
                    acts.append(EmptyRide(pos, s, net.distance(pos, s)))
                acts.append(MaintenanceTask(f.maintenance_type, s))
                pos = s
            if pos != base.departure_station:
                acts.append(EmptyRide(pos, base.departure_station, net.distance(pos, base.departure_station)))
            acts.append(RegularTrip(base.id, i))
            pos = base.arrival_station
        per_train[z] = tuple(acts)
    return Schedule(per_train)


def encode_schedule(inst: Instance, F_all: Sequence[ExtendedTrip], index: VariableIndex, sched: Schedule) -> np.ndarray:
    """Inverse of :func:`decode_solution` for schedules the index can express."""
    lookup = {(f.base, f.maintenance_type, f.maintenance_station): e for e, f in enumerate(F_all)}
    x = np.zeros(len(index), dtype=np.int8)
    for z, acts in sched.per_train.items():
        pending = None
        for a in acts:
            if isinstance(a, MaintenanceTask):
                pending = (a.type, a.station)
            elif isinstance(a, RegularTrip):
                u, s = pending if pending else (None, None)
                e = lookup[a.trip, u, s]
                x[index.id(a.slot, e, z)] = 1
                pending = None
    return x
