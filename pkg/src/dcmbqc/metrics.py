"""Required photon lifetime, execution time and photon-loss probability."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .model import DependencyGraph, ValidationError

# rounded value; with the exact constant 5000 cycles at 100 ns falls just under 99% loss
SPEED_OF_LIGHT_KM_S = 3.0e5
FIBER_DB_PER_KM = 0.2
FIBER_SPEED_FRACTION = 2.0 / 3.0


@dataclass(frozen=True)
class LifetimeReport:
    tau_fusee: int
    tau_measuree: int
    tau_local: int
    tau_remote: int
    tau_photon: int
    exec_time: int
    clock_ns: float = 1.0

    @property
    def loss_probability(self) -> float:
        return loss_probability(self.tau_photon, self.clock_ns)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["loss_probability"] = self.loss_probability
        return out


def loss_probability(cycles: float, cycle_ns: float) -> float:
    """Loss after storing a photon ``cycles`` clock cycles in fibre.

    Attenuation 0.2 dB/km at 2/3 the vacuum speed of light, applied as a
    decibel loss: ``1 - 10**(-0.2 * km / 10)``.
    """
    if cycles < 0:
        raise ValueError("cycles must be non-negative")
    if not cycle_ns > 0:
        raise ValueError("cycle_ns must be positive")
    km = cycles * cycle_ns * 1e-9 * FIBER_SPEED_FRACTION * SPEED_OF_LIGHT_KM_S
    return 1.0 - 10.0 ** (-FIBER_DB_PER_KM * km / 10.0)


@dataclass(frozen=True)
class LifetimeTerms:
    """Raw cost terms of one evaluation; ``maxparent`` is per node."""

    tau_fusee: int
    tau_measuree: int
    tau_remote: int
    maxparent: np.ndarray

    @property
    def tau_local(self) -> int:
        return max(self.tau_fusee, self.tau_measuree)

    @property
    def tau_photon(self) -> int:
        return max(self.tau_local, self.tau_remote)


class DepArrays:
    """Flat arrays of a dependency graph, built once per graph."""

    def __init__(self, deps: DependencyGraph):
        self.num_nodes = deps.num_nodes
        self.order = deps.order()
        self.p_indptr, self.p_idx = deps.parents()
        self.c_indptr, self.c_idx = deps.children()
        self.rank = np.empty(deps.num_nodes, dtype=np.int64)
        self.rank[self.order] = np.arange(deps.num_nodes)


def evaluate(netindex, dep_arrays: DepArrays, measuree, fusee_pairs, start=None, n_main=0, sync_pairs=None):
    """Run the lifetime kernels on precomputed arrays."""
    fp = np.asarray(fusee_pairs, dtype=np.int64).reshape(-1, 2)
    mp = np.zeros(dep_arrays.num_nodes, dtype=np.int64)
    tau_f, tau_m = kernels.lifetime_kernel(
        np.asarray(netindex, dtype=np.int64),
        dep_arrays.order,
        dep_arrays.p_indptr,
        dep_arrays.p_idx,
        np.asarray(measuree, dtype=np.bool_),
        np.ascontiguousarray(fp[:, 0]),
        np.ascontiguousarray(fp[:, 1]),
        mp,
    )
    tau_r = 0
    if sync_pairs is not None and len(sync_pairs):
        tau_r = kernels.remote(start, n_main, sync_pairs[:, 0], sync_pairs[:, 1])
    return LifetimeTerms(int(tau_f), int(tau_m), int(tau_r), mp)


def lifetime_single(plan, deps: DependencyGraph, measuree=None, clock_ns: float = 1.0) -> LifetimeReport:
    """Required lifetime of one QPU's layer sequence.

    Layer indices stand in for generation times.  ``measuree`` masks the
    nodes that wait for a basis; removees contribute nothing.
    """
    n = deps.num_nodes
    netindex = np.full(n, -1, dtype=np.int64)
    for u, layer in plan.node_layer.items():
        if not 0 <= u < n:
            raise ValidationError(f"plan node {u} is outside the dependency graph")
        netindex[u] = layer
    missing = np.flatnonzero(netindex < 0)
    if len(missing):
        raise ValidationError(f"node {int(missing[0])} missing from plan")
    mask = np.ones(n, dtype=np.bool_) if measuree is None else np.asarray(measuree, dtype=np.bool_)
    pairs = np.array([(u, v) for u, v, _, _ in plan.fusee_pairs], dtype=np.int64).reshape(-1, 2)
    terms = evaluate(netindex, DepArrays(deps), mask, pairs)
    return LifetimeReport(
        terms.tau_fusee, terms.tau_measuree, terms.tau_local, 0, terms.tau_local,
        plan.num_layers, clock_ns,
    )


def lifetime_distributed(inst, sched, deps: DependencyGraph | None = None, clock_ns: float = 1.0) -> LifetimeReport:
    """Lifetime of a scheduled layer-scheduling instance.

    Main-task start times replace layer indices for every node, across QPUs;
    each synchronisation task adds ``|s_k - j|`` for both of its main tasks.
    """
    from .scheduler import validate

    problems = validate(inst, sched)
    if problems:
        raise ValidationError(f"invalid schedule: {problems[0]}")
    terms = inst.terms(sched.start, deps)
    exec_time = int(sched.start.max()) if len(sched.start) else 0
    return LifetimeReport(
        terms.tau_fusee, terms.tau_measuree, terms.tau_local, terms.tau_remote, terms.tau_photon,
        exec_time, clock_ns,
    )

