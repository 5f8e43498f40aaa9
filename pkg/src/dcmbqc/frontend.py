"""Benchmark circuits and their translation into MBQC program bundles.

Circuits are rewritten into the ``{J(alpha), CZ}`` universal set.  Each
``J(alpha)`` teleports a wire onto a fresh node: the old node is measured at
angle ``-alpha`` and the new node receives an X byproduct, which is the only
real-time dependency kept once Z corrections are signal-shifted away.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import ComputationGraph, DependencyGraph, ParseError, ProgramBundle, ValidationError

FAMILIES = ("QFT", "QAOA", "VQE", "RCA")
GATE_ARITY = {"J": 1, "H": 1, "RZ": 1, "CZ": 2, "CNOT": 2, "CP": 2}
ANGLED = {"J", "RZ", "CP"}
_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class Gate:
    kind: str
    q: tuple[int, ...]
    angle: float | None = None

    def __post_init__(self):
        if self.kind not in GATE_ARITY:
            raise ValidationError(f"unknown gate kind {self.kind!r}")
        q = tuple(int(x) for x in self.q)
        if len(q) != GATE_ARITY[self.kind]:
            raise ValidationError(f"{self.kind} takes {GATE_ARITY[self.kind]} operand(s), got {len(q)}")
        if len(q) == 2 and q[0] == q[1]:
            raise ValidationError(f"{self.kind} operands must differ, got {q}")
        if (self.angle is None) == (self.kind in ANGLED):
            raise ValidationError(f"{self.kind}: angle {'required' if self.kind in ANGLED else 'not allowed'}")
        object.__setattr__(self, "q", q)
        if self.angle is not None:
            object.__setattr__(self, "angle", float(self.angle))


@dataclass(frozen=True)
class Circuit:
    qubits: int
    gates: tuple[Gate, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "gates", tuple(self.gates))
        for g in self.gates:
            if any(not 0 <= x < self.qubits for x in g.q):
                raise ValidationError(f"gate {g.kind}{g.q} outside {self.qubits} qubits")

    def two_qubit_count(self) -> int:
        return sum(1 for g in self.gates if len(g.q) == 2)


def absorb_correction(angle: float, s: int, t: int) -> float:
    """Measurement angle after absorbing ``X^s Z^t``, normalised to (-pi, pi]."""
    a = (-angle if s & 1 else angle) + (math.pi if t & 1 else 0.0)
    a = math.fmod(a, _TWO_PI)
    if a > math.pi:
        a -= _TWO_PI
    elif a <= -math.pi:
        a += _TWO_PI
    return a


# ---------------------------------------------------------------- generators


def _qft(n: int, rng) -> list[Gate]:
    gates = []
    for i in range(n):
        gates.append(Gate("H", (i,)))
        for j in range(i + 1, n):
            gates.append(Gate("CP", (j, i), math.pi / 2 ** (j - i)))
    return gates


def _rotation_layer(n: int, rng) -> list[Gate]:
    gates = []
    for q in range(n):
        a, b = rng.uniform(-math.pi, math.pi, size=2)
        gates += [Gate("RZ", (q,), a), Gate("H", (q,)), Gate("RZ", (q,), b), Gate("H", (q,))]
    return gates


def _vqe(n: int, rng) -> list[Gate]:
    gates = _rotation_layer(n, rng)
    for i in range(n):
        for j in range(i + 1, n):
            gates.append(Gate("CNOT", (i, j)))
    return gates + _rotation_layer(n, rng)


def maxcut_edges(n: int, seed: int) -> list[tuple[int, int]]:
    """Random Max-Cut instance: exactly half of all vertex pairs, rounded down."""
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    rng = np.random.default_rng(seed)
    keep = rng.permutation(len(pairs))[: len(pairs) // 2]
    return sorted(pairs[k] for k in keep)


def _qaoa(n: int, rng, seed: int) -> list[Gate]:
    gamma, beta = rng.uniform(0.1, math.pi - 0.1, size=2)
    gates = [Gate("H", (q,)) for q in range(n)]
    for u, v in maxcut_edges(n, seed):
        # exp(-i gamma Z Z) up to global phase
        gates += [
            Gate("CP", (u, v), -4.0 * gamma),
            Gate("RZ", (u,), 2.0 * gamma),
            Gate("RZ", (v,), 2.0 * gamma),
        ]
    for q in range(n):
        gates += [Gate("H", (q,)), Gate("RZ", (q,), 2.0 * beta), Gate("H", (q,))]
    return gates


def _toffoli(x: int, y: int, t: int) -> list[Gate]:
    T, Td = math.pi / 4, -math.pi / 4
    return [
        Gate("H", (t,)),
        Gate("CNOT", (y, t)), Gate("RZ", (t,), Td),
        Gate("CNOT", (x, t)), Gate("RZ", (t,), T),
        Gate("CNOT", (y, t)), Gate("RZ", (t,), Td),
        Gate("CNOT", (x, t)), Gate("RZ", (y,), T), Gate("RZ", (t,), T),
        Gate("H", (t,)),
        Gate("CNOT", (x, y)), Gate("RZ", (x,), T), Gate("RZ", (y,), Td),
        Gate("CNOT", (x, y)),
    ]


def rca_layout(qubits: int) -> tuple[int, bool]:
    """Operand width and carry-out flag for a ripple-carry adder on ``qubits`` wires.

    Wires are ``c0, b0, a0, b1, a1, ...`` followed by a carry-out wire when the
    count is even.
    """
    if qubits < 3:
        raise ValidationError(f"RCA needs at least 3 qubits, got {qubits}")
    return (qubits - 1) // 2, qubits % 2 == 0


def _rca(n_qubits: int) -> list[Gate]:
    width, carry_out = rca_layout(n_qubits)
    b = [1 + 2 * i for i in range(width)]
    a = [2 + 2 * i for i in range(width)]
    carry = [0] + a[:-1]
    gates = []
    for i in range(width):
        c, bi, ai = carry[i], b[i], a[i]
        gates += [Gate("CNOT", (ai, bi)), Gate("CNOT", (ai, c))] + _toffoli(c, bi, ai)
    if carry_out:
        gates.append(Gate("CNOT", (a[-1], n_qubits - 1)))
    for i in reversed(range(width)):
        c, bi, ai = carry[i], b[i], a[i]
        gates += _toffoli(c, bi, ai) + [Gate("CNOT", (ai, c)), Gate("CNOT", (c, bi))]
    return gates


def gen_benchmark(family: str, qubits: int, seed: int = 0) -> Circuit:
    family = family.upper()
    if family not in FAMILIES:
        raise ValidationError(f"unknown benchmark family {family!r}; choose from {FAMILIES}")
    if qubits < 2:
        raise ValidationError("benchmarks need at least 2 qubits")
    rng = np.random.default_rng(seed)
    if family == "QFT":
        gates = _qft(qubits, rng)
    elif family == "VQE":
        gates = _vqe(qubits, rng)
    elif family == "QAOA":
        gates = _qaoa(qubits, rng, seed)
    else:
        gates = _rca(qubits)
    meta = {
        "name": f"{family}-{qubits}",
        "qubits": qubits,
        "seed": seed,
        "generator": {"family": family, "qubits": qubits, "seed": seed},
    }
    return Circuit(qubits, gates, meta)


# ---------------------------------------------------------------- rewriting


def _expand(circuit: Circuit):
    """Yield gates over {H, RZ, J, CZ}."""
    for g in circuit.gates:
        if g.kind == "CNOT":
            c, t = g.q
            yield Gate("H", (t,))
            yield Gate("CZ", (c, t))
            yield Gate("H", (t,))
        elif g.kind == "CP":
            a, b = g.q
            yield from _expand(Circuit(circuit.qubits, [Gate("CNOT", (a, b))]))
            yield Gate("RZ", (b,), -g.angle / 2)
            yield from _expand(Circuit(circuit.qubits, [Gate("CNOT", (a, b))]))
            yield Gate("RZ", (a,), g.angle / 2)
            yield Gate("RZ", (b,), g.angle / 2)
        else:
            yield g


def _is_zero(angle: float) -> bool:
    r = math.fmod(angle, _TWO_PI)
    return min(abs(r), _TWO_PI - abs(r)) < 1e-12


def _flush(stack: list) -> list[tuple]:
    out = []
    for kind, angle in stack:
        if kind == "H":
            out.append(0.0)
        elif kind == "J":
            out.append(angle)
        else:  # bare phase: P(a) = J(0) J(a)
            out += [angle, 0.0]
    return out


def rewrite(circuit: Circuit) -> list[tuple]:
    """Rewrite into ``("J", q, alpha)`` and ``("CZ", a, b)`` ops.

    Single-qubit runs between entangling gates are simplified on the fly:
    ``H H`` cancels, adjacent phases merge, and a phase followed by ``H`` or
    ``J`` folds into one ``J``.
    """
    pending: list[list] = [[] for _ in range(circuit.qubits)]
    ops: list[tuple] = []

    def emit(q):
        ops.extend(("J", q, a) for a in _flush(pending[q]))
        pending[q] = []

    for g in _expand(circuit):
        if g.kind == "CZ":
            emit(g.q[0])
            emit(g.q[1])
            ops.append(("CZ", g.q[0], g.q[1]))
            continue
        q = g.q[0]
        st = pending[q]
        top = st[-1] if st else None
        if g.kind == "RZ":
            if _is_zero(g.angle):
                continue
            if top is not None and top[0] == "RZ":
                merged = top[1] + g.angle
                st.pop()
                if not _is_zero(merged):
                    st.append(("RZ", merged))
            else:
                st.append(("RZ", g.angle))
        elif g.kind == "H":
            if top is not None and top[0] == "H":
                st.pop()
            elif top is not None and top[0] == "RZ":
                st[-1] = ("J", top[1])
            else:
                st.append(("H", None))
        else:  # J
            if top is not None and top[0] == "RZ":
                st[-1] = ("J", top[1] + g.angle)
            elif top is not None and top[0] == "H" and _is_zero(g.angle):
                st.pop()  # J(0) H = I
            else:
                st.append(("J", g.angle))
    for q in range(circuit.qubits):
        emit(q)
    return ops


def translate(circuit: Circuit) -> ProgramBundle:
    """Build the graph state and X-dependency DAG for ``circuit``."""
    n = circuit.qubits
    heads = list(range(n))
    angles = [0.0] * n
    edges: dict[tuple[int, int], None] = {}
    deps = []
    for op in rewrite(circuit):
        if op[0] == "J":
            _, q, alpha = op
            new = len(angles)
            angles.append(0.0)
            angles[heads[q]] = -alpha
            edges[(heads[q], new)] = None
            deps.append((heads[q], new))
            heads[q] = new
        else:
            u, v = sorted((heads[op[1]], heads[op[2]]))
            # CZ is an involution on graph states
            if (u, v) in edges:
                del edges[(u, v)]
            else:
                edges[(u, v)] = None
    m = len(angles)
    graph = ComputationGraph(m, np.array(list(edges), dtype=np.int64).reshape(-1, 2))
    dep_graph = DependencyGraph(m, np.array(deps, dtype=np.int64).reshape(-1, 2), np.array(angles))
    meta = dict(circuit.meta) if circuit.meta else {}
    meta.setdefault("qubits", n)
    return ProgramBundle(graph, dep_graph, meta)


# ---------------------------------------------------------------- circuit JSON


def circuit_to_dict(circuit: Circuit) -> dict:
    gates = []
    for g in circuit.gates:
        rec = {"kind": g.kind, "q": list(g.q)}
        if g.angle is not None:
            rec["angle"] = g.angle
        gates.append(rec)
    out = {"qubits": circuit.qubits, "gates": gates}
    if circuit.meta:
        out["meta"] = circuit.meta
    return out


def circuit_from_dict(data) -> Circuit:
    try:
        gates = [Gate(g["kind"], tuple(g["q"]), g.get("angle")) for g in data["gates"]]
        return Circuit(int(data["qubits"]), gates, data.get("meta", {}))
    except (KeyError, TypeError) as exc:
        raise ParseError(f"malformed circuit: {exc}") from None


def save_circuit(circuit: Circuit, path) -> None:
    Path(path).write_text(json.dumps(circuit_to_dict(circuit), sort_keys=True) + "\n", encoding="utf-8")


def load_circuit(path) -> Circuit:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return circuit_from_dict(data)
