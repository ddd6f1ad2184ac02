"""
A QUBO for a handful of trips
=============================

Builds the binary model for a tiny two-train instance, minimises it
exactly and with tabu search, and decodes the result into a schedule.
"""

# %%
# Two cities, three trips, one periodic maintenance type. Train 0 is
# close to its limit, so the model pushes a maintenance at slot 0.
from rollstock.model import Instance, MaintenanceType, Network, Train, Trip
from rollstock.qubo import alpha, build_qubo, energy_by_tag, immediate_action
from rollstock.qubo_solve import SolverParams, decode_solution, exhaustive_solve, solve
from rollstock.report import validate_schedule

st = ("Hamburg", "Berlin")
net = Network(st, {(a, b): 0 if a == b else 289 for a in st for b in st},
              {(a, b): 0 if a == b else 110 for a in st for b in st})
trips = (
    Trip(0, "Hamburg", "Berlin", 480, 590, 289, 110),
    Trip(1, "Berlin", "Hamburg", 720, 830, 289, 110),
    Trip(2, "Hamburg", "Berlin", 1000, 1110, 289, 110),
)
service = MaintenanceType(0, ("Hamburg",), 90, True, 8000)
trains = (Train(0, "Hamburg", 0, {0: 7700}), Train(1, "Berlin", 0, {0: 1200}))
inst = Instance(1440, net, trips, trains, (service,))

for z in trains:
    print(f"train {z.id}: alpha={alpha(8000, z.initial_km[0]):.4f} immediate={immediate_action(8000, z.initial_km[0])}")

# %%
# With q=2 slots the model stays small enough to enumerate.
model = build_qubo(inst, q=2)
print(model.n, "variables,", model.nonzeros, "non-zeros")

best = exhaustive_solve(model)
tabu = solve(model, SolverParams(variant="tabu", seed=0))
print("exhaustive", float(best.energy), " tabu", float(tabu.energy))

# %%
# Energy broken down by cost term; the hard terms c1..c3 are zero.
for tag, value in energy_by_tag(model, best.bits).items():
    if value:
        print(f"{tag:>6} {float(value):10.2f}")

# %%
# Decoding gives an ordinary schedule that the validator can judge.
sched = decode_solution(inst, model.extended, model.index, best.bits)
for z, acts in sched.per_train.items():
    print(z, acts)
rep = validate_schedule(inst, sched)
print("raw", rep.raw_allocated_trips, "corrected", rep.corrected_allocated_trips, "empty km", rep.empty_km)
