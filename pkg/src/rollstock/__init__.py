"""Rolling stock scheduling with maintenance: a CP solver and a QUBO model."""
from .cp_search import SearchConfig, branch_and_bound
from .instance_io import generate_artificial, parse_instance, subset_instance, write_instance
from .model import Instance, Schedule, validate_instance
from .qubo import Weights, build_qubo
from .qubo_solve import SolverParams, decode_solution, solve
from .report import validate_schedule

__all__ = [
    "Instance",
    "Schedule",
    "SearchConfig",
    "SolverParams",
    "Weights",
    "branch_and_bound",
    "build_qubo",
    "decode_solution",
    "generate_artificial",
    "parse_instance",
    "solve",
    "subset_instance",
    "validate_instance",
    "validate_schedule",
    "write_instance",
]
