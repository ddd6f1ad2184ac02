"""Command-line entry point: ``rollstock <command> ...``.

Exit status is 0 on success, 1 when a solve fails or input is rejected,
and 2 on usage errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import instance_io as io
from .cp_search import HorizonError
from .qubo import DEFAULT_Q, QuboSizeError, Weights, build_qubo, export_qubo, parse_qubo
from .qubo_solve import SolverParams, decode_solution, solve
from .pipeline import QuboOptions, metrics_rows, run_cp, run_methods
from .report import format_table, render_gantt, validate_schedule

log = logging.getLogger("rollstock")


class CliError(Exception):
    pass


def _read(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc.strerror}") from None


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _instance(path: str):
    return io.parse_instance(_read(path))


def _report_dict(rep) -> dict:
    return {
        "rawAllocatedTrips": rep.raw_allocated_trips,
        "correctedAllocatedTrips": rep.corrected_allocated_trips,
        "flaggedTrips": rep.flagged_trips,
        "emptyKm": rep.empty_km,
        "usedTrains": rep.used_trains,
        "violations": [{"train": z, "category": c, "message": m} for z, c, m in rep.violations],
    }


# -- commands ----------------------------------------------------------------

def cmd_generate(a) -> int:
    inst = io.generate_artificial(io.GeneratorConfig(trip_count=a.trips, train_count=a.trains, seed=a.seed))
    _write(a.out, io.write_instance(inst))
    return 0


def cmd_subset(a) -> int:
    _write(a.out, io.write_instance(io.subset_instance(_instance(a.inp), a.fraction, a.seed)))
    return 0


def cmd_solve_cp(a) -> int:
    inst = _instance(a.inp)
    out = run_cp(inst, a.time_limit, first_only=a.first, big_m=a.big_m,
                 stronger_maint_rule=a.stronger_maint_rule, node_limit=a.node_limit)
    d = out.details
    _write(a.out, io.write_schedule(out.schedule, objective=d["objective"], complete=d["complete"],
                                    trips=out.schedule.allocated_trips, emptyKm=out.schedule.empty_km))
    if a.log:
        _write(a.log, json.dumps({"nodes": d["nodes"], "improvements": d["improvements"]}, indent=2) + "\n")
    return 0


def cmd_build_qubo(a) -> int:
    inst = _instance(a.inp)
    model = build_qubo(inst, a.q, _weights(a), a.max_nonzeros)
    _write(a.out, export_qubo(model))
    log.info("%d variables, %d non-zero coefficients", model.n, model.nonzeros)
    return 0


def cmd_solve_qubo(a) -> int:
    params = SolverParams(variant=_variant(a.variant), time_limit=a.time_limit, seed=a.seed, workers=a.workers)
    if a.instance:
        inst = _instance(a.instance)
        model = build_qubo(inst, a.q, _weights(a), a.max_nonzeros)
    else:
        inst = None
        try:
            model = parse_qubo(_read(a.inp))
        except ValueError as exc:
            raise CliError(str(exc)) from None
    if model.n == 0:
        raise CliError("QUBO has no variables")
    res = solve(model, params)
    doc = {"variables": model.n, "energy": str(res.energy), "bits": "".join(map(str, res.bits.tolist())),
           "budgetExhausted": res.trace.budget_exhausted}
    if inst is not None:
        sched = decode_solution(inst, model.extended, model.index, res.bits)
        doc["report"] = _report_dict(validate_schedule(inst, sched))
        doc.update(io.schedule_to_dict(sched))
    _write(a.out, json.dumps(doc, indent=2) + "\n")
    return 0


def cmd_validate(a) -> int:
    inst = _instance(a.inp)
    sched = io.parse_schedule(_read(a.solution))
    _write(a.out, json.dumps(_report_dict(validate_schedule(inst, sched)), indent=2) + "\n")
    return 0


def cmd_report(a) -> int:
    inst = _instance(a.inp)
    methods = [m.strip() for m in a.methods.split(",") if m.strip()]
    opts = QuboOptions(q=a.q, weights=_weights(a), max_nonzeros=a.max_nonzeros, seed=a.seed, workers=a.workers)
    outcomes = run_methods(inst, methods, a.time_limit, opts)
    table = format_table(metrics_rows(inst, outcomes))
    out = Path(a.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.txt").write_text(table, encoding="utf-8")
    rows = []
    for o in outcomes:
        (out / f"{o.method}.solution.json").write_text(io.write_schedule(o.schedule), encoding="utf-8")
        (out / f"{o.method}.svg").write_text(render_gantt(inst, o.schedule, o.report, o.label), encoding="utf-8")
        rows.append({"method": o.method, "label": o.label, "runtime": o.runtime, "preprocessing": o.preprocessing,
                     **_report_dict(o.report),
                     **{k: v for k, v in o.details.items() if k != "bits"}})
    (out / "report.json").write_text(json.dumps({"methods": rows}, indent=2) + "\n", encoding="utf-8")
    sys.stdout.write(table)
    return 0


# -- argument parsing --------------------------------------------------------

def _weights(a) -> Weights:
    try:
        w = Weights.parse(a.weights)
    except (ValueError, ZeroDivisionError) as exc:
        raise CliError(str(exc)) from None
    if getattr(a, "ablate_km", False):
        w = Weights(w.reward, w.penalty, 0, w.maintenance)
    return w


def _variant(v: str) -> str:
    return {"sa": "annealing"}.get(v, v)


def _qubo_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--q", type=int, default=DEFAULT_Q, help="slots per train (default 3)")
    p.add_argument("--weights", default="", help="e.g. reward=100,penalty=1000,km=1,maintenance=40")
    p.add_argument("--ablate-km", action="store_true", help="set the empty-km weight to 0")
    p.add_argument("--max-nonzeros", type=int, default=None, help="refuse models with more non-zeros")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rollstock", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="artificial five-city instance")
    p.add_argument("--trips", type=int, default=72)
    p.add_argument("--trains", type=int, default=39)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("subset", help="random share of trips and trains")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--fraction", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    p.set_defaults(func=cmd_subset)

    p = sub.add_parser("solve-cp", help="branch and bound with the CP engine")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--time-limit", type=float)
    p.add_argument("--node-limit", type=int)
    p.add_argument("--first", action="store_true", help="stop at the first solution")
    p.add_argument("--big-m", type=int, default=1_000_000)
    p.add_argument("--stronger-maint-rule", action="store_true")
    p.add_argument("--out")
    p.add_argument("--log")
    p.set_defaults(func=cmd_solve_cp)

    p = sub.add_parser("build-qubo", help="write the QUBO coordinate list")
    p.add_argument("--in", dest="inp", required=True)
    _qubo_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_build_qubo)

    p = sub.add_parser("solve-qubo", help="minimise a QUBO file, or build, solve and decode an instance")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--in", dest="inp")
    src.add_argument("--instance")
    p.add_argument("--variant", choices=("tabu", "annealing", "sa", "exhaustive"), default="tabu")
    p.add_argument("--time-limit", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    _qubo_args(p)
    p.add_argument("--out")
    p.set_defaults(func=cmd_solve_qubo)

    p = sub.add_parser("validate", help="check a schedule against an instance")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--solution", required=True)
    p.add_argument("--out")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("report", help="solve, validate, tabulate and draw")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--methods", default="cp-first,cp")
    p.add_argument("--time-limit", type=float, default=60.0)
    p.add_argument("--out-dir", default="report")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)
    _qubo_args(p)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    a = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(a, "methods", None) is not None:
        bad = [m for m in a.methods.split(",") if m.strip() and m.strip() not in ("cp", "cp-first", "tabu", "sa", "exhaustive")]
        if bad:
            ap.error(f"unknown method(s): {', '.join(bad)}")
    try:
        return a.func(a)
    except QuboSizeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (CliError, io.InstanceFormatError, io.InstanceValidationError, io.GeneratorConfigError,
            HorizonError, RuntimeError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
