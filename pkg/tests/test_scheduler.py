import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcmbqc.model import ComputationGraph, DependencyGraph, ValidationError
from dcmbqc.partition import kway_partition
from dcmbqc.qpu import assemble_layers, default_grid
from dcmbqc.scheduler import (
    InstanceTooLarge,
    LspInstance,
    Schedule,
    bdir,
    brute_force,
    build_instance,
    default_priorities,
    find_bottleneck,
    gbp_reduce,
    keeps_plan_order,
    list_schedule,
    validate,
)
from oracles import bandwidth, exclusivity_ok


def random_instance(rng, max_qpus=4, max_layers=5, max_syncs=6, max_nodes=20):
    counts = [int(c) for c in rng.integers(1, max_layers + 1, size=int(rng.integers(1, max_qpus + 1)))]
    syncs = []
    if len(counts) > 1:
        for _ in range(int(rng.integers(0, max_syncs + 1))):
            a, b = rng.choice(len(counts), 2, replace=False)
            syncs.append(((int(a), int(rng.integers(counts[a]))), (int(b), int(rng.integers(counts[b])))))
    M = sum(counts)
    qpu_of = np.repeat(np.arange(len(counts)), counts)
    n = int(rng.integers(1, max_nodes + 1))
    node_task = rng.integers(0, M, n)
    perm = rng.permutation(n)
    deps = sorted({(int(perm[u]), int(perm[v])) for u, v in rng.integers(0, n, (n, 2)) if u < v})
    pairs = {tuple(sorted(map(int, p))) for p in rng.integers(0, n, (n, 2)) if p[0] != p[1]}
    fusees = sorted((u, v) for u, v in pairs if qpu_of[node_task[u]] == qpu_of[node_task[v]])
    return LspInstance.from_tasks(
        counts, syncs, int(rng.integers(1, 4)), node_task=node_task,
        fusee_pairs=fusees, deps=DependencyGraph(n, deps),
    )


def check_feasible(inst, sched):
    assert validate(inst, sched) == []
    assert keeps_plan_order(inst, sched.start)
    qa, qb = inst.task_qpus
    sync_qpus = list(zip(qa[inst.n_main:].tolist(), qb[inst.n_main:].tolist()))
    assert exclusivity_ok(inst.n_qpus, inst.main_qpu.tolist(), sync_qpus, sched.start.tolist(), inst.n_main, inst.k_max)


# ---------------------------------------------------------------- validate


def test_two_mains_same_slot():
    inst = LspInstance.from_tasks([2], (), 1)
    out = validate(inst, Schedule(np.array([1, 1]), 2))
    assert len(out) == 1 and "QPU 0 at t=1" in out[0]


def test_main_and_sync_clash():
    inst = LspInstance.from_tasks([1, 1], [((0, 0), (1, 0))], 4)
    assert validate(inst, Schedule(np.array([1, 2, 1]), 2))


def test_kmax_syncs_share_a_slot():
    syncs = [((0, 0), (1, 0))] * 3
    inst = LspInstance.from_tasks([1, 1], syncs, 3)
    assert validate(inst, Schedule(np.array([1, 1, 2, 2, 2]), 2)) == []
    tight = LspInstance.from_tasks([1, 1], syncs, 2)
    assert validate(tight, Schedule(np.array([1, 1, 2, 2, 2]), 2))


def test_out_of_range_and_length():
    inst = LspInstance.from_tasks([2], (), 1)
    assert "outside" in validate(inst, Schedule(np.array([0, 1]), 2))[0]
    assert "start times" in validate(inst, Schedule(np.array([1]), 1))[0]


def test_sync_on_one_qpu_rejected():
    with pytest.raises(ValidationError):
        LspInstance.from_tasks([2, 1], [((0, 0), (0, 1))], 1)
    with pytest.raises(ValidationError):
        LspInstance.from_tasks([2], (), 0)


# ---------------------------------------------------------------- list scheduling


def test_sequential_locality():
    inst = LspInstance.from_tasks([2], (), 1)
    s = list_schedule(inst)
    assert s.start.tolist() == [1, 2] and s.makespan == 2


def test_default_priorities():
    inst = LspInstance.from_tasks([2, 3], [((0, 0), (1, 2))], 1)
    assert default_priorities(inst).tolist() == [1, 2, 1, 2, 3, 2]


def test_small_sync_instance_against_brute_feasibility():
    inst = LspInstance.from_tasks([2, 2], [((0, 0), (1, 1))], 1)
    s = list_schedule(inst)
    check_feasible(inst, s)
    # every feasible tuple in 1..6 with the same relative main order is no shorter
    best = min(
        max(t) for t in itertools.product(range(1, 7), repeat=inst.n_tasks)
        if t[0] < t[1] and t[2] < t[3] and not validate(inst, Schedule(np.array(t), 4))
    )
    assert s.makespan == best
    assert s.start[4] > s.start[0]


def test_list_keeps_plan_order():
    rng = np.random.default_rng(0)
    for _ in range(50):
        inst = random_instance(rng)
        j = list_schedule(inst).j
        for q in range(inst.n_qpus):
            assert np.all(np.diff(j[inst.main_qpu == q]) > 0)


def test_pin_is_honoured():
    inst = LspInstance.from_tasks([3, 3], [((0, 1), (1, 1))], 1)
    s = list_schedule(inst, pin=(6, 2))
    check_feasible(inst, s)
    assert s.start[6] == 2


def test_pinned_main_pushes_successors():
    inst = LspInstance.from_tasks([3], (), 1)
    s = list_schedule(inst, priority=[1, 2, 3], pin=(0, 4))
    assert s.start.tolist() == [4, 5, 6]
    assert keeps_plan_order(inst, s.start)


def test_plan_order_check():
    inst = LspInstance.from_tasks([2, 1], (), 1)
    assert keeps_plan_order(inst, [1, 2, 1])
    assert not keeps_plan_order(inst, [2, 1, 1])


# ---------------------------------------------------------------- random instances


def test_500_random_instances_feasible_and_monotone():
    rng = np.random.default_rng(7)
    for i in range(500):
        inst = random_instance(rng)
        init = list_schedule(inst)
        check_feasible(inst, init)
        out = bdir(inst, init, seed=i)
        check_feasible(inst, out)
        assert inst.cost(out.start) <= inst.cost(init.start)


@settings(max_examples=40)
@given(st.integers(0, 2**32 - 1))
def test_bdir_deterministic(seed):
    inst = random_instance(np.random.default_rng(seed))
    init = list_schedule(inst)
    assert bdir(inst, init, seed=seed) == bdir(inst, init, seed=seed)


# ---------------------------------------------------------------- BDIR


def misplaced_sync_instance():
    # fusee photons between consecutive layers pin each QPU's mains close together
    counts = [3, 3]
    node_task = [0, 1, 1, 2, 3, 4, 4, 5]
    fusees = [(0, 1), (2, 3), (4, 5), (6, 7)]
    return LspInstance.from_tasks(counts, [((0, 1), (1, 1))], 1, node_task=node_task, fusee_pairs=fusees)


def test_misplaced_sync_reaches_optimum():
    inst = misplaced_sync_instance()
    init = Schedule(np.array([1, 2, 3, 1, 2, 3, 7]), 6)
    assert validate(inst, init) == []
    assert inst.terms(init.start).tau_remote == 5
    _, opt = brute_force(inst, 7)
    hits = sum(inst.cost(bdir(inst, init, seed=s).start) == opt for s in range(10))
    assert hits >= 9


def test_bdir_keeps_optimal_init():
    inst = misplaced_sync_instance()
    witness, opt = brute_force(inst, 7)
    assert inst.cost(bdir(inst, witness, seed=3).start) == opt


def test_bdir_trace_and_best_tracking():
    rng = np.random.default_rng(99)
    inst = random_instance(rng, max_syncs=8)
    init = list_schedule(inst)
    trace = []
    out = bdir(inst, init, iters=15, seed=1, trace=trace)
    assert len(trace) == 15
    seen = [inst.cost(init.start)] + [c_new for _, c_new, _ in trace]
    assert inst.cost(out.start) == min(seen)


def test_find_bottleneck_blames_sync():
    inst = LspInstance.from_tasks([2, 2], [((0, 0), (1, 0))], 1)
    start = np.array([1, 2, 1, 2, 6])
    assert find_bottleneck(inst, start) == 4


def test_find_bottleneck_blames_later_fusee():
    inst = LspInstance.from_tasks([3], (), 1, node_task=[0, 2], fusee_pairs=[(0, 1)])
    assert find_bottleneck(inst, np.array([1, 2, 5])) == 2


# ---------------------------------------------------------------- oracle and reduction


def test_single_main_task_brute():
    inst = LspInstance.from_tasks([1], (), 1, node_task=[0])
    sched, cost = brute_force(inst, 3)
    assert sched.start.tolist() == [1] and cost == 1


def test_brute_force_guard():
    with pytest.raises(InstanceTooLarge):
        brute_force(LspInstance.from_tasks([11], (), 1), 4)
    with pytest.raises(InstanceTooLarge):
        brute_force(LspInstance.from_tasks([2], (), 1), 9)


@pytest.mark.parametrize(
    "n, edges, tasks, pairs, cost",
    [
        (3, [(0, 1), (1, 2)], 3, 2, 1),
        (4, list(itertools.combinations(range(4), 2)), 4, 6, 3),
    ],
)
def test_gbp_examples(n, edges, tasks, pairs, cost):
    inst = gbp_reduce(ComputationGraph(n, edges))
    assert inst.n_main == tasks and len(inst.fusee_pairs) == pairs and inst.n_sync == 0
    assert inst.deps.num_deps == 0
    assert brute_force(inst, n)[1] == cost == bandwidth(n, edges)


@pytest.mark.parametrize("seed", range(5))
def test_gbp_random_graphs(seed):
    rng = np.random.default_rng(seed)
    n = 5
    edges = [e for e in itertools.combinations(range(n), 2) if rng.random() < 0.5] or [(0, 1)]
    assert brute_force(gbp_reduce(ComputationGraph(n, edges)), n)[1] == bandwidth(n, edges)


# ---------------------------------------------------------------- construction


def test_minimal_instance():
    g = ComputationGraph(2, [(0, 1)])
    part = kway_partition(g, 2)
    grid = default_grid(1)
    plans = [assemble_layers(g, part.nodes_of(q), grid, q, part.cut_edges) for q in range(2)]
    inst = build_instance(plans, part, 2, DependencyGraph(2, []))
    assert (inst.n_main, inst.n_sync, inst.k_max) == (2, 1, 2)
    assert inst.horizon == 2 * (2 + 1)


def test_single_qpu_no_syncs(get_bundle):
    b = get_bundle("QAOA", 16)
    part = kway_partition(b.graph, 1)
    plan = assemble_layers(b.graph, range(b.num_nodes), default_grid(16), 0)
    inst = build_instance([plan], part, 4, b.deps)
    assert inst.n_sync == 0 and inst.n_main == plan.num_layers


def test_qft16_sync_count_is_cut(get_bundle):
    b = get_bundle("QFT", 16)
    part = kway_partition(b.graph, 4, 1.2)
    cuts = [[tuple(e) for e in part.cut_edges.tolist() if part.assignment[e[0]] == q or part.assignment[e[1]] == q] for q in range(4)]
    plans = [assemble_layers(b.graph, part.nodes_of(q), default_grid(16), q, cuts[q]) for q in range(4)]
    inst = build_instance(plans, part, 4, b.deps)
    assert inst.n_sync == part.cut
    check_feasible(inst, list_schedule(inst))


def test_connector_mismatch(get_bundle):
    b = get_bundle("QFT", 16)
    part = kway_partition(b.graph, 2)
    plans = [assemble_layers(b.graph, part.nodes_of(q), default_grid(16), q) for q in range(2)]
    with pytest.raises(ValidationError, match="connector mismatch"):
        build_instance(plans, part, 4, b.deps)
