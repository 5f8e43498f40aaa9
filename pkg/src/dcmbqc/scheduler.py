"""Layer scheduling: main tasks (execution layers) and synchronisation tasks.

Task ids are global: main tasks first, QPU by QPU in plan order, then one
synchronisation task per cut edge.  Every task occupies one unit slot.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import kernels
from .metrics import DepArrays, LifetimeTerms, evaluate
from .model import ComputationGraph, DependencyGraph, ValidationError

MAIN_TIE, SYNC_TIE = 0, 1
BRUTE_MAX_TASKS = 10
BRUTE_MAX_SLOTS = 8


@dataclass(frozen=True, eq=False)
class LspInstance:
    """A layer scheduling problem together with the photons riding on its tasks.

    ``node_task[u]`` is the main task holding photon ``u``; ``fusee_pairs``
    lists same-QPU photon pairs that must meet at a fusion device;
    ``sync_pairs[k]`` holds the two main tasks bridged by sync task ``k``.
    """

    n_qpus: int
    main_qpu: np.ndarray
    main_index: np.ndarray
    sync_pairs: np.ndarray
    k_max: int
    horizon: int
    node_task: np.ndarray
    measuree: np.ndarray
    fusee_pairs: np.ndarray
    deps: DependencyGraph
    sync_edges: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.k_max < 1:
            raise ValidationError("k_max must be >= 1")
        sp = np.asarray(self.sync_pairs, dtype=np.int64).reshape(-1, 2)
        object.__setattr__(self, "sync_pairs", sp)
        M = len(self.main_qpu)
        if len(sp):
            if sp.min() < 0 or sp.max() >= M:
                raise ValidationError("sync task references an unknown main task")
            same = self.main_qpu[sp[:, 0]] == self.main_qpu[sp[:, 1]]
            if same.any():
                k = int(np.flatnonzero(same)[0])
                raise ValidationError(f"sync task {k} joins two main tasks of one QPU")
        if self.sync_edges is None:
            object.__setattr__(self, "sync_edges", np.zeros((len(sp), 2), dtype=np.int64))

    @classmethod
    def from_tasks(cls, main_counts, syncs=(), k_max=1, *, node_task=(), measuree=None,
                   fusee_pairs=(), deps=None, horizon=None):
        """Hand-built instance; ``syncs`` are ``((qpu, j), (qpu', j'))`` pairs, ``j`` 0-based."""
        main_counts = list(main_counts)
        offsets = np.concatenate([[0], np.cumsum(main_counts)]).astype(np.int64)
        main_qpu = np.repeat(np.arange(len(main_counts)), main_counts).astype(np.int64)
        main_index = np.concatenate([np.arange(c) for c in main_counts] or [[]]).astype(np.int64)
        sp = np.array([(offsets[a[0]] + a[1], offsets[b[0]] + b[1]) for a, b in syncs], dtype=np.int64)
        node_task = np.asarray(node_task, dtype=np.int64)
        n = len(node_task)
        if deps is None:
            deps = DependencyGraph(n, np.zeros((0, 2), dtype=np.int64))
        meas = np.ones(n, dtype=np.bool_) if measuree is None else np.asarray(measuree, dtype=np.bool_)
        M, K = int(offsets[-1]), len(sp)
        return cls(
            len(main_counts), main_qpu, main_index, sp, int(k_max),
            horizon if horizon is not None else max(1, 2 * (M + K)),
            node_task, meas, np.asarray(fusee_pairs, dtype=np.int64).reshape(-1, 2), deps,
        )

    @property
    def n_main(self) -> int:
        return len(self.main_qpu)

    @property
    def n_sync(self) -> int:
        return len(self.sync_pairs)

    @property
    def n_tasks(self) -> int:
        return self.n_main + self.n_sync

    def task_name(self, task: int) -> str:
        if task < self.n_main:
            return f"J[{int(self.main_qpu[task])},{int(self.main_index[task])}]"
        return f"S[{task - self.n_main}]"

    @cached_property
    def dep_arrays(self) -> DepArrays:
        return DepArrays(self.deps)

    @cached_property
    def task_qpus(self) -> tuple[np.ndarray, np.ndarray]:
        """``(qa, qb)`` per task; ``qb = -1`` for main tasks."""
        qa = np.concatenate([self.main_qpu, self.main_qpu[self.sync_pairs[:, 0]]]).astype(np.int64)
        qb = np.concatenate([np.full(self.n_main, -1), self.main_qpu[self.sync_pairs[:, 1]]]).astype(np.int64)
        return qa, qb

    @cached_property
    def local_index(self):
        """CSR tables used to price one task in isolation."""
        M, n = self.n_main, len(self.node_task)

        def csr(rows, cols, size):
            order = np.lexsort((cols, rows))
            indptr = np.zeros(size + 1, dtype=np.int64)
            np.add.at(indptr, rows + 1, 1)
            return np.cumsum(indptr), cols[order].astype(np.int64)

        tn = csr(self.node_task, np.arange(n, dtype=np.int64), M)
        fp = self.fusee_pairs
        fa = csr(np.concatenate([fp[:, 0], fp[:, 1]]), np.concatenate([fp[:, 1], fp[:, 0]]), n)
        sp = self.sync_pairs
        ks = np.arange(self.n_sync, dtype=np.int64)
        ts = csr(np.concatenate([sp[:, 0], sp[:, 1]]), np.concatenate([ks, ks]), M)
        return tn, fa, ts

    def terms(self, start, deps: DependencyGraph | None = None) -> LifetimeTerms:
        start = np.asarray(start, dtype=np.int64)
        arrays = self.dep_arrays if deps is None or deps is self.deps else DepArrays(deps)
        netindex = kernels.netindex_from(start, self.node_task) if len(self.node_task) else np.zeros(0, np.int64)
        return evaluate(netindex, arrays, self.measuree, self.fusee_pairs, start, self.n_main, self.sync_pairs)

    def cost(self, start) -> int:
        return self.terms(start).tau_photon


@dataclass(frozen=True, eq=False)
class Schedule:
    start: np.ndarray
    n_main: int

    @property
    def j(self) -> np.ndarray:
        return self.start[: self.n_main]

    @property
    def s(self) -> np.ndarray:
        return self.start[self.n_main:]

    @property
    def makespan(self) -> int:
        return int(self.start.max()) if len(self.start) else 0

    def __eq__(self, other):
        return isinstance(other, Schedule) and self.n_main == other.n_main and np.array_equal(self.start, other.start)

    __hash__ = None

    def to_dict(self, inst: LspInstance) -> dict:
        return {
            "main": [
                {"qpu": int(inst.main_qpu[t]), "index": int(inst.main_index[t]), "t": int(self.start[t])}
                for t in range(inst.n_main)
            ],
            "sync": [{"id": k, "t": int(self.start[inst.n_main + k])} for k in range(inst.n_sync)],
            "kmax": inst.k_max,
        }


# ---------------------------------------------------------------- construction


def build_instance(plans, partition, k_max: int, deps: DependencyGraph, measuree=None) -> LspInstance:
    """One main task per execution layer, one sync task per cut edge."""
    plans = sorted(plans, key=lambda p: p.qpu)
    if [p.qpu for p in plans] != list(range(partition.k)):
        raise ValidationError(f"plans cover QPUs {[p.qpu for p in plans]}, expected 0..{partition.k - 1}")
    n = deps.num_nodes
    offsets = np.concatenate([[0], np.cumsum([p.num_layers for p in plans])]).astype(np.int64)
    main_qpu = np.repeat(np.arange(len(plans)), [p.num_layers for p in plans]).astype(np.int64)
    main_index = np.concatenate([np.arange(p.num_layers) for p in plans]).astype(np.int64)
    node_task = np.full(n, -1, dtype=np.int64)
    fusees = []
    for p in plans:
        for u, layer in p.node_layer.items():
            node_task[u] = offsets[p.qpu] + layer
        fusees += [(u, v) for u, v, _, _ in p.fusee_pairs]
    if (node_task < 0).any():
        raise ValidationError(f"node {int(np.flatnonzero(node_task < 0)[0])} is in no plan")
    conn_map: dict[tuple[int, int], dict[int, tuple[int, int]]] = {}
    for p in plans:
        for c in p.connectors:
            conn_map.setdefault(tuple(c.edge), {})[p.qpu] = (c.local, c.layer)
    sync_pairs, sync_edges = [], []
    for edge in (tuple(int(x) for x in e) for e in partition.cut_edges):
        recs = conn_map.pop(edge, {})
        qa, qb = int(partition.assignment[edge[0]]), int(partition.assignment[edge[1]])
        if set(recs) != {qa, qb}:
            raise ValidationError(f"connector mismatch on cut edge {edge}: records from QPUs {sorted(recs)}")
        (la_node, la), (lb_node, lb) = recs[qa], recs[qb]
        if la_node != edge[0] or lb_node != edge[1]:
            raise ValidationError(f"connector mismatch on cut edge {edge}: wrong local endpoints")
        sync_pairs.append((offsets[qa] + la, offsets[qb] + lb))
        sync_edges.append(edge)
    if conn_map:
        raise ValidationError(f"connector mismatch: {next(iter(conn_map))} is not a cut edge")
    M, K = int(offsets[-1]), len(sync_pairs)
    meas = np.ones(n, dtype=np.bool_) if measuree is None else np.asarray(measuree, dtype=np.bool_)
    return LspInstance(
        partition.k, main_qpu, main_index,
        np.array(sync_pairs, dtype=np.int64).reshape(-1, 2), int(k_max), 2 * (M + K),
        node_task, meas, np.array(fusees, dtype=np.int64).reshape(-1, 2), deps,
        np.array(sync_edges, dtype=np.int64).reshape(-1, 2),
    )


def gbp_reduce(graph: ComputationGraph) -> LspInstance:
    """Single-QPU instance whose optimum equals the bandwidth of ``graph``.

    One main task per vertex; each edge puts a fusee photon on both endpoint
    tasks.  No measurees, no dependencies, no sync tasks.
    """
    n = graph.num_nodes
    e = graph.edges
    node_task = np.concatenate([e[:, 0], e[:, 1]]).astype(np.int64)
    m = len(e)
    pairs = np.stack([np.arange(m), np.arange(m) + m], axis=1)
    return LspInstance.from_tasks(
        [n], (), 1, node_task=node_task, measuree=np.zeros(2 * m, dtype=np.bool_), fusee_pairs=pairs
    )


# ---------------------------------------------------------------- feasibility


def validate(inst: LspInstance, sched: Schedule) -> list[str]:
    """All machine-exclusivity and range violations; empty means feasible."""
    out = []
    start = np.asarray(sched.start)
    if len(start) != inst.n_tasks:
        return [f"schedule has {len(start)} start times for {inst.n_tasks} tasks"]
    for task in np.flatnonzero((start < 1) | (start > inst.horizon)):
        out.append(f"{inst.task_name(int(task))} starts at {int(start[task])}, outside 1..{inst.horizon}")
    if out:
        return out
    T = inst.horizon
    mains = np.zeros((inst.n_qpus, T + 1), dtype=np.int64)
    syncs = np.zeros((inst.n_qpus, T + 1), dtype=np.int64)
    np.add.at(mains, (inst.main_qpu, start[: inst.n_main]), 1)
    s = start[inst.n_main:]
    for side in (0, 1):
        np.add.at(syncs, (inst.main_qpu[inst.sync_pairs[:, side]], s), 1)
    load = mains + -(-syncs // inst.k_max)
    for q, t in zip(*np.nonzero(load > 1)):
        out.append(
            f"QPU {int(q)} at t={int(t)}: {int(mains[q, t])} main + {int(syncs[q, t])} sync tasks "
            f"(k_max={inst.k_max})"
        )
    return out


# ---------------------------------------------------------------- list scheduling


def default_priorities(inst: LspInstance) -> np.ndarray:
    """Main ``J[i,j]`` gets ``j``; a sync between ``J[i,j]`` and ``J[i',j']`` gets ``(j+j')/2``."""
    j = inst.main_index.astype(np.float64) + 1.0
    sync = 0.5 * (j[inst.sync_pairs[:, 0]] + j[inst.sync_pairs[:, 1]]) if inst.n_sync else np.zeros(0)
    return np.concatenate([j, sync])


def _dispatch_order(inst: LspInstance, priority) -> np.ndarray:
    kind = np.concatenate([np.full(inst.n_main, MAIN_TIE), np.full(inst.n_sync, SYNC_TIE)])
    return np.lexsort((np.arange(inst.n_tasks), kind, np.asarray(priority, dtype=np.float64))).astype(np.int64)


def list_schedule(inst: LspInstance, priority=None, pin: tuple[int, int] | None = None) -> Schedule:
    """Earliest-slot list scheduling in ascending priority (main before sync on ties).

    ``pin=(task, t)`` fixes one task before the rest are dispatched.
    """
    if priority is None:
        priority = default_priorities(inst)
    order = _dispatch_order(inst, priority)
    qa, qb = inst.task_qpus
    pin_task, pin_time = pin if pin is not None else (-1, 0)
    start = np.zeros(inst.n_tasks, dtype=np.int64)
    # a greedy packing needs at most n_tasks + 1 slots, well inside the horizon
    if not kernels.pack(order, qa, qb, inst.n_qpus, inst.k_max, inst.horizon, pin_task, pin_time, start):
        raise RuntimeError(f"horizon {inst.horizon} exhausted by list scheduling")
    return Schedule(start, inst.n_main)


# ---------------------------------------------------------------- BDIR


def find_bottleneck(inst: LspInstance, start, terms: LifetimeTerms | None = None) -> int:
    """Lowest-id task responsible for a term attaining the current lifetime.

    A fusee pair blames the later-generated photon's task, a measuree its own
    task, and a remote term its sync task.
    """
    terms = terms or inst.terms(start)
    tau = terms.tau_photon
    start = np.asarray(start)
    blamed = []
    if len(inst.node_task):
        ni = start[inst.node_task]
        fp = inst.fusee_pairs
        if len(fp) and terms.tau_fusee == tau:
            a, b = ni[fp[:, 0]], ni[fp[:, 1]]
            hit = np.abs(a - b) == tau
            later = np.where(a[hit] > b[hit], fp[hit, 0], fp[hit, 1])
            blamed.append(inst.node_task[later])
        if terms.tau_measuree == tau:
            hit = inst.measuree & (terms.maxparent - ni == tau)
            blamed.append(inst.node_task[hit])
    if inst.n_sync and terms.tau_remote == tau:
        s = start[inst.n_main:]
        d = np.maximum(np.abs(s - start[inst.sync_pairs[:, 0]]), np.abs(s - start[inst.sync_pairs[:, 1]]))
        blamed.append(inst.n_main + np.flatnonzero(d == tau))
    blamed = np.concatenate(blamed) if blamed else np.zeros(0, dtype=np.int64)
    return int(blamed.min()) if len(blamed) else -1


def local_cost(inst: LspInstance, start, task: int, t: int, terms: LifetimeTerms) -> int:
    """Lifetime terms touching ``task`` if it moved to slot ``t``, all else fixed."""
    start = np.asarray(start, dtype=np.int64)
    if task >= inst.n_main:
        a, b = inst.sync_pairs[task - inst.n_main]
        return int(max(abs(t - start[a]), abs(t - start[b])))
    (tn_ptr, tn_idx), (fa_ptr, fa_idx), (ts_ptr, ts_idx) = inst.local_index
    da = inst.dep_arrays
    ni = kernels.netindex_from(start, inst.node_task) if len(inst.node_task) else np.zeros(0, np.int64)
    return int(kernels.main_local_cost(
        task, t, ni, terms.maxparent, da.rank,
        tn_ptr, tn_idx, inst.node_task,
        da.p_indptr, da.p_idx, da.c_indptr, da.c_idx,
        fa_ptr, fa_idx, inst.measuree,
        ts_ptr, ts_idx, start, inst.n_main,
    ))


def keeps_plan_order(inst: LspInstance, start) -> bool:
    """Main tasks of every QPU start in plan order."""
    j = np.asarray(start)[: inst.n_main]
    same = inst.main_qpu[1:] == inst.main_qpu[:-1]
    return bool(np.all(j[1:][same] > j[:-1][same]))


def _scan_range(inst: LspInstance, start, task: int, span: int) -> tuple[int, int]:
    cur = int(start[task])
    lo, hi = max(1, cur - span), min(inst.horizon, cur + span)
    if task < inst.n_main and inst.main_index[task] > 0:
        # a main task may not overtake its plan predecessor
        lo = max(lo, int(start[task - 1]) + 1)
    return lo, hi


def balance_point(inst: LspInstance, start, task: int, terms: LifetimeTerms) -> int:
    """Slot within ``current +- tau_photon`` minimising the task's own cost (earliest on ties)."""
    cur = int(start[task])
    lo, hi = _scan_range(inst, start, task, max(terms.tau_photon, 1))
    best_t, best_c = cur, None
    for t in range(lo, hi + 1):
        c = local_cost(inst, start, task, t, terms)
        if best_c is None or c < best_c:
            best_t, best_c = t, c
    return best_t


def generate_neighbor(inst: LspInstance, sched: Schedule, terms: LifetimeTerms | None = None) -> Schedule:
    terms = terms or inst.terms(sched.start)
    task = find_bottleneck(inst, sched.start, terms)
    if task < 0:
        return sched
    t = balance_point(inst, sched.start, task, terms)
    lo, hi = _scan_range(inst, sched.start, task, max(terms.tau_photon, 1))
    priority = sched.start.astype(np.float64)
    # a pin that cannot be packed in plan order moves to the nearest slot that can
    for cand in sorted(range(lo, hi + 1), key=lambda c: (abs(c - t), c)):
        try:
            new = list_schedule(inst, priority=priority, pin=(task, cand))
        except RuntimeError:
            continue
        if keeps_plan_order(inst, new.start):
            return new
    return sched


def bdir(inst: LspInstance, init: Schedule, t0: float = 10.0, cooling: float = 0.95,
         iters: int = 20, seed: int = 0, trace: list | None = None) -> Schedule:
    """Bottleneck-driven simulated annealing over list schedules.

    Returns the cheapest schedule seen, so the result never costs more than
    ``init``.  ``trace`` (optional list) receives ``(c_current, c_new, accepted)``
    per iteration.
    """
    rng = np.random.default_rng(seed)
    current, c_current = init, inst.cost(init.start)
    best, c_best = init, c_current
    temp = float(t0)
    for _ in range(int(iters)):
        terms = inst.terms(current.start)
        new = generate_neighbor(inst, current, terms)
        c_new = inst.cost(new.start)
        delta = c_new - c_current
        accept = delta <= 0 or rng.random() < math.exp(-delta / temp)
        if trace is not None:
            trace.append((c_current, c_new, bool(accept)))
        if accept:
            current, c_current = new, c_new
        if c_current < c_best:
            best, c_best = current, c_current
        temp *= cooling
    return best


# ---------------------------------------------------------------- exact oracle


class InstanceTooLarge(ValueError):
    pass


def brute_force(inst: LspInstance, t_cap: int) -> tuple[Schedule, int]:
    """Exhaustive minimum over start tuples in ``1..t_cap`` (desk-scale only)."""
    if inst.n_tasks > BRUTE_MAX_TASKS or t_cap > BRUTE_MAX_SLOTS:
        raise InstanceTooLarge(
            f"{inst.n_tasks} tasks x {t_cap} slots exceeds {BRUTE_MAX_TASKS} x {BRUTE_MAX_SLOTS}"
        )
    n_main, K = inst.n_main, inst.n_sync
    qa, qb = inst.task_qpus
    fp = inst.fusee_pairs
    pair_tasks = [(int(inst.node_task[u]), int(inst.node_task[v])) for u, v in fp]
    # bounding terms that are fully decided once their last task is placed
    closes: list[list[tuple[int, int]]] = [[] for _ in range(inst.n_tasks)]
    for a, b in pair_tasks:
        closes[max(a, b)].append((a, b))
    for k, (a, b) in enumerate(inst.sync_pairs):
        closes[n_main + k] += [(n_main + k, int(a)), (n_main + k, int(b))]
    mains = np.zeros((inst.n_qpus, t_cap + 1), dtype=np.int64)
    syncs = np.zeros((inst.n_qpus, t_cap + 1), dtype=np.int64)
    start = np.zeros(inst.n_tasks, dtype=np.int64)
    best = [math.inf, None]

    def fits(task, t):
        if qb[task] < 0:
            return mains[qa[task], t] == 0 and syncs[qa[task], t] == 0
        return all(mains[q, t] == 0 and syncs[q, t] < inst.k_max for q in (qa[task], qb[task]))

    def place(task, t, d):
        if qb[task] < 0:
            mains[qa[task], t] += d
        else:
            syncs[qa[task], t] += d
            syncs[qb[task], t] += d

    def rec(task, bound):
        if bound >= best[0]:
            return
        if task == inst.n_tasks:
            c = inst.cost(start)
            if c < best[0]:
                best[0], best[1] = c, start.copy()
            return
        for t in range(1, t_cap + 1):
            if not fits(task, t):
                continue
            start[task] = t
            b = bound
            for x, y in closes[task]:
                b = max(b, abs(int(start[x]) - int(start[y])))
            place(task, t, 1)
            rec(task + 1, b)
            place(task, t, -1)
        start[task] = 0

    rec(0, 0)
    if best[1] is None:
        raise ValidationError(f"no feasible schedule within {t_cap} slots")
    return Schedule(best[1], n_main), int(best[0])
