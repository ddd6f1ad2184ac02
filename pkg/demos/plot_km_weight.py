"""
What the empty-km weight buys
=============================

Solves small models exactly with and without the empty-kilometre term
and compares the empty kilometres of the decoded schedules.
"""

# %%
import random
import sys
from pathlib import Path

from rollstock.qubo import Weights, build_qubo
from rollstock.qubo_solve import decode_solution, exhaustive_solve
from rollstock.report import validate_schedule

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "tests"))
from oracle import random_instance  # noqa: E402

# %%
# Without the km term the solver is indifferent to detours, so the
# decoded schedules drive at least as many empty kilometres.
rng = random.Random(0)
rows = []
while len(rows) < 12:
    inst = random_instance(rng, max_trips=4, max_trains=2, max_types=1)
    base = build_qubo(inst, q=2)
    if not 0 < base.n <= 20:
        continue
    ablated = build_qubo(inst, q=2, weights=Weights(km=0))
    km = []
    for m in (base, ablated):
        sched = decode_solution(inst, m.extended, m.index, exhaustive_solve(m).bits)
        km.append(validate_schedule(inst, sched).empty_km)
    rows.append(km)

print(" km=1  km=0")
for a, b in rows:
    print(f"{a:5d} {b:5d}")
assert all(b >= a for a, b in rows)
