"""Run the solvers on one instance and collect validated, comparable results."""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .cp_search import SearchConfig, branch_and_bound
from .model import Instance, Schedule
from .qubo import DEFAULT_Q, QuboModel, Weights, build_qubo
from .qubo_solve import SolverParams, decode_solution, solve
from .report import MetricsRow, ValidationReport, compute_metrics, validate_schedule

METHOD_NAMES = {
    "cp-first": "CP first",
    "cp": "CP improved",
    "tabu": "QUBO tabu",
    "sa": "QUBO SA",
    "exhaustive": "QUBO exhaustive",
}


@dataclass
class MethodOutcome:
    method: str
    schedule: Schedule
    report: ValidationReport
    runtime: float
    preprocessing: float | None = None
    details: dict = field(default_factory=dict)

    @property
    def label(self) -> str:
        return METHOD_NAMES.get(self.method, self.method)


@dataclass
class QuboOptions:
    q: int = DEFAULT_Q
    weights: Weights = field(default_factory=Weights)
    max_nonzeros: int | None = None
    seed: int = 0
    workers: int = 1
    restarts: int = 10


def run_cp(inst: Instance, time_limit: float | None, first_only: bool = False, **cfg) -> MethodOutcome:
    res = branch_and_bound(inst, SearchConfig(time_limit=time_limit, solution_limit=1 if first_only else None, **cfg))
    if res.schedule is None:
        raise RuntimeError("CP search found no schedule within its limits")
    runtime = res.stats.time_to_first if first_only else res.stats.elapsed
    return MethodOutcome(
        "cp-first" if first_only else "cp", res.schedule, validate_schedule(inst, res.schedule), runtime,
        details={
            "objective": res.objective,
            "nodes": res.stats.nodes,
            "complete": res.stats.complete,
            "improvements": [imp.__dict__ for imp in res.log],
        },
    )


def run_qubo(inst: Instance, variant: str, time_limit: float | None, opts: QuboOptions = QuboOptions(),
             model: QuboModel | None = None) -> MethodOutcome:
    t0 = time.perf_counter()
    if model is None:
        model = build_qubo(inst, opts.q, opts.weights, opts.max_nonzeros)
    pre = time.perf_counter() - t0
    t1 = time.perf_counter()
    if model.n == 0:
        bits = np.zeros(0, dtype=np.int8)
        energy = model.offset_value
    else:
        res = solve(model, SolverParams(variant=variant, time_limit=time_limit, seed=opts.seed,
                                        workers=opts.workers, restarts=opts.restarts))
        bits, energy = res.bits, res.energy
    runtime = time.perf_counter() - t1
    sched = decode_solution(inst, model.extended, model.index, bits)
    return MethodOutcome(
        variant, sched, validate_schedule(inst, sched), runtime, pre,
        details={"variables": model.n, "nonzeros": model.nonzeros, "energy": str(energy),
                 "bits": "".join(map(str, bits.tolist()))},
    )


def run_methods(inst: Instance, methods, time_limit: float | None = None,
                qubo: QuboOptions = QuboOptions()) -> list[MethodOutcome]:
    out = []
    for m in methods:
        if m in ("cp", "cp-first"):
            out.append(run_cp(inst, time_limit, first_only=m == "cp-first"))
        elif m in ("tabu", "sa", "exhaustive"):
            out.append(run_qubo(inst, "annealing" if m == "sa" else m, time_limit, qubo))
            out[-1].method = m
        else:
            raise ValueError(f"unknown method {m!r}")
    return out


def metrics_rows(inst: Instance, outcomes: list[MethodOutcome]) -> list[MetricsRow]:
    return compute_metrics(inst, [(o.label, o.report, o.runtime, o.preprocessing) for o in outcomes])
