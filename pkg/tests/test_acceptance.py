"""Acceptance criteria, one test per criterion, each at its stated tolerance."""

import itertools
import math
import os
import subprocess
import sys
import time

import networkx as nx
import numpy as np
import pytest

from dcmbqc.frontend import gen_benchmark, translate
from dcmbqc.metrics import lifetime_single, loss_probability
from dcmbqc.model import ComputationGraph, DependencyGraph
from dcmbqc.partition import kway_partition, modularity
from dcmbqc.pipeline import RunConfig, compile_bundle, run_distributed
from dcmbqc.scheduler import bdir, brute_force, gbp_reduce, list_schedule, validate
from oracles import bandwidth, lifetime as oracle_lifetime, modularity_per_edge
from test_metrics import make_plan, random_case
from test_scheduler import random_instance

pytestmark = pytest.mark.acceptance

FAMILIES = ("QFT", "VQE", "QAOA", "RCA")
SIZES = (16, 36)
QPUS = (1, 4, 8)


@pytest.fixture(scope="module")
def benchmark_runs():
    runs = {}
    t = time.perf_counter()
    for fam, n, q in itertools.product(FAMILIES, SIZES, QPUS):
        b = translate(gen_benchmark(fam, n, 0))
        runs[fam, n, q] = (b, run_distributed(b, RunConfig(qpus=q)))
    return runs, time.perf_counter() - t


def test_01_photon_loss(verdict):
    p10, p1, p100 = (loss_probability(5000, ns) for ns in (10, 1, 100))
    ok = abs(p10 - 0.369) <= 0.005 and 0.040 <= p1 <= 0.055 and p100 >= 0.99
    assert verdict(1, ok, f"loss(5000 cycles) = {p1:.4f} @1ns, {p10:.4f} @10ns, {p100:.4f} @100ns")


def test_02_lifetime_oracle(verdict):
    rng = np.random.default_rng(11)
    t = time.perf_counter()
    mismatches = 0
    for _ in range(200):
        n = int(rng.integers(1, 26))
        layer_of, edges, deps, meas = random_case(rng, n)
        got = lifetime_single(make_plan(layer_of, edges), DependencyGraph(n, deps), measuree=meas)
        want = oracle_lifetime(n, edges, deps, [layer_of[u] for u in range(n)], meas)
        mismatches += (got.tau_fusee, got.tau_measuree) != want or got.tau_photon != max(want)
    dt = time.perf_counter() - t
    assert verdict(2, mismatches == 0 and dt < 10, f"{mismatches} mismatches over 200 instances in {dt:.2f}s")


def test_03_feasibility(verdict, benchmark_runs):
    runs, dt = benchmark_runs
    bad = [key for key, (_, r) in runs.items() if validate(r.instance, r.initial) or validate(r.instance, r.schedule)]
    ok = not bad and dt < 300
    assert verdict(3, ok, f"{2 * len(runs)} schedules over {len(runs)} runs, {len(bad)} infeasible, {dt:.1f}s")


def test_04_bdir_monotone(verdict, benchmark_runs):
    rng = np.random.default_rng(4)
    worse = 0
    for i in range(500):
        inst = random_instance(rng)
        init = list_schedule(inst)
        worse += inst.cost(bdir(inst, init, seed=i).start) > inst.cost(init.start)
    runs, _ = benchmark_runs
    worse_b = sum(r.report.tau_photon > r.initial_report.tau_photon for _, r in runs.values())
    ok = worse == 0 and worse_b == 0
    assert verdict(4, ok, f"bdir worse than list scheduling on {worse}/500 random, {worse_b}/{len(runs)} benchmarks")


def test_05_bdir_effective(verdict):
    b = translate(gen_benchmark("QFT", 36, 0))
    run = run_distributed(b, RunConfig(qpus=4))
    before, after = run.initial_report.tau_photon, run.report.tau_photon
    gain = 1 - after / before
    assert verdict(5, gain >= 0.01, f"QFT-36/4 QPUs tau_photon {before} -> {after} ({100 * gain:.2f}% reduction)")


def test_06_gbp_bandwidth(verdict):
    t = time.perf_counter()
    graphs = [g for g in nx.graph_atlas_g()[1:] if g.number_of_nodes() <= 6 and nx.is_connected(g)]
    wrong = 0
    for g in graphs:
        n, edges = g.number_of_nodes(), sorted(g.edges())
        _, cost = brute_force(gbp_reduce(ComputationGraph(n, edges)), n)
        wrong += cost != bandwidth(n, edges)
    dt = time.perf_counter() - t
    assert verdict(6, wrong == 0 and dt < 60, f"{len(graphs)} connected graphs, {wrong} mismatches, {dt:.2f}s")


def test_07_partition_contract(verdict, benchmark_runs):
    runs, _ = benchmark_runs
    bad = []
    for (fam, n, q), (b, r) in runs.items():
        k, cfg = r.partition.k, r.config
        base = kway_partition(b.graph, k, 1.0, cfg.seed)
        if r.partition.modularity < base.modularity:
            bad.append((fam, n, q, "modularity"))
        if r.partition.part_sizes().max() > cfg.alpha_max * math.ceil(b.num_nodes / k):
            bad.append((fam, n, q, "size"))
    assert verdict(7, not bad, f"{len(runs)} runs, violations: {bad or 'none'}")


def test_08_modularity(verdict):
    cliques = ComputationGraph(8, list(itertools.combinations(range(4), 2)) + list(itertools.combinations(range(4, 8), 2)))
    q_clique = modularity(cliques, [0] * 4 + [1] * 4)
    rng = np.random.default_rng(8)
    worst = 0.0
    for _ in range(50):
        n = int(rng.integers(2, 30))
        edges = [e for e in itertools.combinations(range(n), 2) if rng.random() < 0.3]
        part = rng.integers(0, int(rng.integers(1, 6)), n)
        g = ComputationGraph(n, edges)
        worst = max(worst, abs(modularity(g, part) - modularity_per_edge(n, edges, part.tolist())))
    ok = q_clique == 0.5 and worst <= 1e-12
    assert verdict(8, ok, f"clique split Q = {q_clique}, max oracle error {worst:.1e}")


def test_09_gate_counts(verdict):
    bad = []
    for fam, n in itertools.product(("QFT", "VQE"), (16, 36, 81, 100, 144)):
        got = gen_benchmark(fam, n, 0).two_qubit_count()
        if got != n * (n - 1) // 2:
            bad.append((fam, n, got))
    assert verdict(9, not bad, f"QFT/VQE two-qubit counts, mismatches: {bad or 'none'}")


def _longest_chain(deps):
    depth = np.zeros(deps.num_nodes, dtype=int)
    parents = [[] for _ in range(deps.num_nodes)]
    for u, v in deps.dep_edges.tolist():
        parents[v].append(u)
    for v in deps.order().tolist():
        depth[v] = max((depth[u] + 1 for u in parents[v]), default=0)
    return int(depth.max())


def test_10_distributed_gain(verdict):
    t = time.perf_counter()
    lines, ok = [], True
    for fam in ("QFT", "VQE"):
        b = translate(gen_benchmark(fam, 36, 0))
        f4 = compile_bundle(b, RunConfig(qpus=4))
        f8 = compile_bundle(b, RunConfig(qpus=8))
        i4, i8 = f4["improvement"], f8["improvement"]
        for key in ("exec_time", "tau_photon"):
            ok &= i4[key] > 1.5 and i8[key] > i4[key]
        base = f4["baseline"]["report"]
        lines.append(
            f"{fam}-36 exec x{i4['exec_time']:.2f}/x{i8['exec_time']:.2f} tau x{i4['tau_photon']:.2f}/x{i8['tau_photon']:.2f}"
            f" (4/8 QPUs; baseline T={base['exec_time']} tau={base['tau_photon']}, dependency depth {_longest_chain(b.deps)})"
        )
    dt = time.perf_counter() - t
    ok &= dt < 120
    detail = "; ".join(lines) + f"; {dt:.1f}s"
    verdict(10, ok, detail)
    assert ok, detail


def test_11_kmax_elbow(verdict):
    b = translate(gen_benchmark("QFT", 36, 0))
    f4 = compile_bundle(b, RunConfig(kmax=4))["improvement"]
    f16 = compile_bundle(b, RunConfig(kmax=16))["improvement"]
    ok = all(f16[k] <= 1.3 * f4[k] for k in f4)
    detail = ", ".join(f"{k} x{f4[k]:.3f} -> x{f16[k]:.3f}" for k in f4)
    assert verdict(11, ok, f"QFT-36 K_max 4 -> 16: {detail}")


def test_12_scalability(verdict):
    t = time.perf_counter()
    circuit = gen_benchmark("QFT", 100, 0)
    rep = compile_bundle(translate(circuit), RunConfig())
    dt = time.perf_counter() - t
    ok = dt < 60 and rep["distributed"]["report"]["tau_photon"] > 0
    assert verdict(12, ok, f"QFT-100 ({circuit.two_qubit_count()} two-qubit gates, {rep['nodes']} nodes) compiled in {dt:.1f}s")


def test_13_determinism(verdict, tmp_path):
    bundle = tmp_path / "qft36.json"
    cmd = [sys.executable, "-m", "dcmbqc.cli"]
    subprocess.run(cmd + ["gen", "QFT", "36", "--translate", "--out", str(tmp_path)], check=True)
    (tmp_path / "QFT-36.bundle.json").rename(bundle)
    outs = []
    for hashseed in ("1", "2"):
        env = {**os.environ, "PYTHONHASHSEED": hashseed}
        proc = subprocess.run(cmd + ["--seed", "7", "compile", str(bundle), "--qpus", "4"], capture_output=True, env=env, check=True)
        outs.append(proc.stdout)
    ok = outs[0] == outs[1] and len(outs[0]) > 0
    assert verdict(13, ok, f"two compile runs, {len(outs[0])} bytes each, identical={outs[0] == outs[1]}")
