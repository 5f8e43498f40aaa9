"""Compare the numba kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--qubits Q]

Each path runs in its own interpreter because the switch is read at import.
Timings are best-of-N after one warm-up call, so JIT compilation is excluded.
"""

import argparse
import json
import os
import subprocess
import sys
import time

WORKER = r"""
import json, sys, time
from dcmbqc import _accel
from dcmbqc.frontend import gen_benchmark, translate
from dcmbqc.metrics import lifetime_single
from dcmbqc.partition import kway_partition
from dcmbqc.pipeline import RunConfig, compile_bundle, run_distributed
from dcmbqc.qpu import assemble_layers, default_grid
from dcmbqc.scheduler import bdir, list_schedule

qubits, repeat = int(sys.argv[1]), int(sys.argv[2])
b = translate(gen_benchmark("QFT", qubits, 0))
plan = assemble_layers(b.graph, range(b.num_nodes), default_grid(qubits), 0)
run = run_distributed(b, RunConfig(qpus=4, bdir=False))
cfg = RunConfig(qpus=4)

cases = {
    "lifetime_single": lambda: lifetime_single(plan, b.deps),
    "kway_partition": lambda: kway_partition(b.graph, 4, 1.2),
    "list_schedule": lambda: list_schedule(run.instance),
    "bdir": lambda: bdir(run.instance, run.initial, iters=cfg.sa_iters),
    "compile": lambda: compile_bundle(b, cfg),
}
out = {"numba": _accel.NUMBA_AVAILABLE, "nodes": b.num_nodes}
for name, fn in cases.items():
    fn()
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    out[name] = best
print(json.dumps(out))
"""


def measure(disable: bool, qubits: int, repeat: int) -> dict:
    env = {**os.environ, "DCMBQC_DISABLE_NUMBA": "1" if disable else "0"}
    proc = subprocess.run(
        [sys.executable, "-c", WORKER, str(qubits), str(repeat)], capture_output=True, text=True, env=env, check=True
    )
    return json.loads(proc.stdout)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--qubits", type=int, default=36)
    args = ap.parse_args()

    fast = measure(False, args.qubits, args.repeat)
    slow = measure(True, args.qubits, args.repeat)
    print(f"QFT-{args.qubits}: {fast['nodes']} nodes, numba available: {fast['numba']}")
    print(f"{'case':<16}{'numba ms':>12}{'python ms':>12}{'speedup':>10}")
    for name in ("lifetime_single", "kway_partition", "list_schedule", "bdir", "compile"):
        a, b = fast[name] * 1e3, slow[name] * 1e3
        print(f"{name:<16}{a:>12.2f}{b:>12.2f}{b / a if a else float('nan'):>9.1f}x")


if __name__ == "__main__":
    main()
