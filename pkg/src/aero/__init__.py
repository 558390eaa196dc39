"""Simulator for runtime-aware over-the-air updates of task DAGs running on
energy-harvesting devices."""

from .benchmarks import Metrics, Scenario, benchmark, run_experiment, scenario, simulate
from .dag import Dag, Task, TaskKind, TaskProfile, UpdateGroup, UpdateMember, UpdateOp, compute_affected_block
from .energy import EnergyState, HarvestTrace, bundled_trace, capacity_from_capacitor
from .packet import UpdateBundle, UpdatePacket, assemble_bundle, decode, encode
from .sim import Approach, RunResult, Simulator, offline_apply_oracle

__version__ = "0.1.0"

__all__ = [
    "Approach",
    "Dag",
    "EnergyState",
    "HarvestTrace",
    "Metrics",
    "RunResult",
    "Scenario",
    "Simulator",
    "Task",
    "TaskKind",
    "TaskProfile",
    "UpdateBundle",
    "UpdateGroup",
    "UpdateMember",
    "UpdateOp",
    "UpdatePacket",
    "assemble_bundle",
    "benchmark",
    "bundled_trace",
    "capacity_from_capacitor",
    "compute_affected_block",
    "decode",
    "encode",
    "offline_apply_oracle",
    "run_experiment",
    "scenario",
    "simulate",
]
