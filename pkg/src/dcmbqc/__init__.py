"""Distributed compilation for measurement-based quantum computing.

Pipeline: circuit -> program bundle (graph state + X-dependency DAG) ->
k-way partition -> per-QPU execution layers -> layer schedule with
synchronisation tasks -> photon lifetime report.
"""

from ._accel import NUMBA_AVAILABLE
from .frontend import Circuit, Gate, absorb_correction, gen_benchmark, translate
from .metrics import LifetimeReport, lifetime_distributed, lifetime_single, loss_probability
from .model import (
    BundleError,
    ComputationGraph,
    CycleError,
    DependencyGraph,
    ParseError,
    ProgramBundle,
    ValidationError,
    load_bundle,
    save_bundle,
    topo_sort,
)
from .partition import PartitionConfig, PartitionResult, adaptive_partition, kway_partition, modularity
from .pipeline import RunConfig, compile_bundle, run_distributed, sweep
from .qpu import ExecutionPlan, GridSpec, assemble_layers, default_grid
from .scheduler import LspInstance, Schedule, bdir, brute_force, build_instance, gbp_reduce, list_schedule, validate

__version__ = "0.1.0"

__all__ = [
    "NUMBA_AVAILABLE", "Circuit", "Gate", "absorb_correction", "gen_benchmark", "translate",
    "LifetimeReport", "lifetime_distributed", "lifetime_single", "loss_probability",
    "BundleError", "ComputationGraph", "CycleError", "DependencyGraph", "ParseError", "ProgramBundle",
    "ValidationError", "load_bundle", "save_bundle", "topo_sort",
    "PartitionConfig", "PartitionResult", "adaptive_partition", "kway_partition", "modularity",
    "RunConfig", "compile_bundle", "run_distributed", "sweep",
    "ExecutionPlan", "GridSpec", "assemble_layers", "default_grid",
    "LspInstance", "Schedule", "bdir", "brute_force", "build_instance", "gbp_reduce", "list_schedule", "validate",
]
