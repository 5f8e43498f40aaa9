"""End-to-end distributed compilation and its single-QPU baseline."""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

from .metrics import LifetimeReport, lifetime_distributed
from .model import ProgramBundle
from .partition import PartitionConfig, PartitionResult, adaptive_partition
from .qpu import ExecutionPlan, assemble_layers, default_grid
from .scheduler import LspInstance, Schedule, bdir, build_instance, list_schedule, validate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RunConfig:
    qpus: int = 4
    kmax: int = 4
    alpha_max: float = 1.5
    eps_q: float = 0.01
    gamma: float = 1.02
    sa_t0: float = 10.0
    sa_cooling: float = 0.95
    sa_iters: int = 20
    fill_factor: float = 0.5
    ordering: str = "cuthill_mckee"
    seed: int = 0
    clock_ns: float = 1.0
    bdir: bool = True

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_mapping(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - names)
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)


class StageError(RuntimeError):
    def __init__(self, stage: str, exc: Exception):
        self.stage = stage
        self.cause = exc
        super().__init__(f"{stage}: {exc}")


@dataclass
class DistributedRun:
    config: RunConfig
    partition: PartitionResult
    plans: list[ExecutionPlan]
    instance: LspInstance
    initial: Schedule
    schedule: Schedule
    initial_report: LifetimeReport
    report: LifetimeReport


def _stage(name):
    def wrap(fn):
        def inner(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except Exception as exc:
                raise StageError(name, exc) from exc
        return inner
    return wrap


def run_distributed(bundle: ProgramBundle, cfg: RunConfig) -> DistributedRun:
    graph, deps = bundle.graph, bundle.deps
    k = min(cfg.qpus, graph.num_nodes)

    partition = _stage("partition")(lambda: adaptive_partition(
        graph, PartitionConfig(k=k, eps_q=cfg.eps_q, gamma=cfg.gamma, alpha_max=cfg.alpha_max, seed=cfg.seed)
    ))()
    grid = default_grid(bundle.meta.get("qubits") or 1, cfg.fill_factor)
    cut_by_part = [[] for _ in range(k)]
    for u, v in partition.cut_edges.tolist():
        cut_by_part[partition.assignment[u]].append((u, v))
        cut_by_part[partition.assignment[v]].append((u, v))

    def compile_part(q):
        return assemble_layers(graph, partition.nodes_of(q), grid, q, cut_by_part[q], cfg.ordering, cfg.seed)

    with ThreadPoolExecutor() as pool:
        plans = _stage("qpu-compile")(lambda: list(pool.map(compile_part, range(k))))()

    inst = _stage("build-instance")(build_instance)(plans, partition, cfg.kmax, deps, graph.measuree_mask())
    initial = _stage("list-schedule")(list_schedule)(inst)
    final = initial
    if cfg.bdir:
        final = _stage("bdir")(bdir)(inst, initial, cfg.sa_t0, cfg.sa_cooling, cfg.sa_iters, cfg.seed)
    for sched in (initial, final):
        problems = validate(inst, sched)
        if problems:
            raise StageError("validate", RuntimeError(problems[0]))
    return DistributedRun(
        cfg, partition, plans, inst, initial, final,
        lifetime_distributed(inst, initial, clock_ns=cfg.clock_ns),
        lifetime_distributed(inst, final, clock_ns=cfg.clock_ns),
    )


def _ratio(a: float, b: float) -> float | None:
    if b == 0:
        return 1.0 if a == 0 else None
    return a / b


def run_summary(run: DistributedRun) -> dict:
    p = run.partition
    return {
        "qpus": p.k,
        "partition": {
            "cut": p.cut,
            "modularity": p.modularity,
            "alpha_used": p.imbalance_used,
            "part_sizes": p.part_sizes().tolist(),
        },
        "layers": [plan.num_layers for plan in run.plans],
        "sync_tasks": run.instance.n_sync,
        "list_schedule": run.initial_report.to_dict(),
        "report": run.report.to_dict(),
    }


def compile_bundle(bundle: ProgramBundle, cfg: RunConfig) -> dict:
    """Distributed run plus the same pipeline on one QPU, with improvement factors."""
    ours = run_distributed(bundle, cfg)
    base = ours if cfg.qpus == 1 else run_distributed(bundle, cfg.replace(qpus=1))
    return _report(bundle, cfg, ours, base)


def _report(bundle, cfg, ours, base) -> dict:
    return {
        "program": bundle.meta.get("name", ""),
        "nodes": bundle.graph.num_nodes,
        "edges": bundle.graph.num_edges,
        "config": dataclasses.asdict(cfg),
        "distributed": run_summary(ours),
        "baseline": run_summary(base),
        "improvement": {
            "exec_time": _ratio(base.report.exec_time, ours.report.exec_time),
            "tau_photon": _ratio(base.report.tau_photon, ours.report.tau_photon),
        },
    }


SWEEP_PARAMS = ("kmax", "alpha_max")
SWEEP_COLUMNS = (
    "param", "value", "exec_time", "tau_photon", "exec_improvement", "tau_improvement",
    "cut", "modularity", "error",
)


def sweep(bundle: ProgramBundle, param: str, values, cfg: RunConfig) -> list[dict]:
    """One pipeline run per value; failures become rows with ``error`` set."""
    if param not in SWEEP_PARAMS:
        raise ValueError(f"cannot sweep {param!r}; choose from {SWEEP_PARAMS}")
    values = list(values)
    if not values:
        raise ValueError("sweep needs at least one value")
    # neither parameter touches a one-QPU run, so the baseline is shared
    base = run_distributed(bundle, cfg.replace(qpus=1))
    rows = []
    for value in values:
        row = dict.fromkeys(SWEEP_COLUMNS, "")
        row.update(param=param, value=value)
        try:
            run = run_distributed(bundle, cfg.replace(**{param: value}))
        except Exception as exc:
            log.warning("sweep %s=%s failed: %s", param, value, exc)
            row["error"] = str(exc)
            rows.append(row)
            continue
        rep = run.report
        row.update(
            exec_time=rep.exec_time,
            tau_photon=rep.tau_photon,
            exec_improvement=_ratio(base.report.exec_time, rep.exec_time),
            tau_improvement=_ratio(base.report.tau_photon, rep.tau_photon),
            cut=run.partition.cut,
            modularity=run.partition.modularity,
        )
        rows.append(row)
    return rows
