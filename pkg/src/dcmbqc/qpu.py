"""Single-QPU stage: pack one partition's subgraph into execution layers.

This is a capacity-only stand-in for a full placement/routing compiler.
Nodes are ordered (BFS or reverse Cuthill-McKee) and cut greedily into
layers of ``floor(fill_factor * side**2)`` nodes.  Routing overhead is folded
into the fill factor.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .model import ComputationGraph, ValidationError

ORDERINGS = ("bfs", "cuthill_mckee")


@dataclass(frozen=True)
class GridSpec:
    side: int
    fill_factor: float = 0.5

    def __post_init__(self):
        if self.side < 1:
            raise ValidationError("grid side must be >= 1")
        if not 0.0 < self.fill_factor <= 1.0:
            raise ValidationError("fill factor must lie in (0, 1]")

    @property
    def capacity(self) -> int:
        # a 1x1 grid at the default fill would otherwise hold nothing
        return max(1, int(math.floor(self.fill_factor * self.side * self.side + 1e-9)))


def default_grid(qubits: int, fill_factor: float = 0.5) -> GridSpec:
    """Grid side ``2*ceil(sqrt(qubits)) - 1`` (7x7 for 16 qubits)."""
    root = math.isqrt(max(int(qubits), 1))
    if root * root < qubits:
        root += 1
    return GridSpec(2 * root - 1, fill_factor)


@dataclass(frozen=True)
class Connector:
    edge: tuple[int, int]
    local: int
    layer: int


@dataclass(frozen=True)
class ExecutionPlan:
    qpu: int
    layers: tuple[tuple[int, ...], ...]
    node_layer: dict[int, int]
    fusee_pairs: tuple[tuple[int, int, int, int], ...]
    connectors: tuple[Connector, ...]

    @property
    def num_layers(self) -> int:
        return len(self.layers)

    def nodes(self) -> list[int]:
        return sorted(self.node_layer)

    def to_dict(self) -> dict:
        return {
            "qpu": self.qpu,
            "layers": [list(layer) for layer in self.layers],
            "fusees": [list(p) for p in self.fusee_pairs],
            "connectors": [
                {"edge": list(c.edge), "local": c.local, "layer": c.layer} for c in self.connectors
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExecutionPlan":
        layers = tuple(tuple(int(x) for x in layer) for layer in data["layers"])
        node_layer = {u: i for i, layer in enumerate(layers) for u in layer}
        return cls(
            int(data["qpu"]),
            layers,
            node_layer,
            tuple(tuple(int(x) for x in p) for p in data["fusees"]),
            tuple(Connector(tuple(c["edge"]), int(c["local"]), int(c["layer"])) for c in data["connectors"]),
        )


def _local_csr(nodes: np.ndarray, edges: np.ndarray) -> csr_matrix:
    m = len(nodes)
    if len(edges) == 0:
        return csr_matrix((m, m), dtype=np.int8)
    u = np.searchsorted(nodes, edges[:, 0])
    v = np.searchsorted(nodes, edges[:, 1])
    rows = np.concatenate([u, v])
    cols = np.concatenate([v, u])
    return csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(m, m))


def bfs_order(adj: csr_matrix) -> np.ndarray:
    """BFS from the lowest unvisited local index, neighbours ascending."""
    m = adj.shape[0]
    indptr, indices = adj.indptr, adj.indices
    seen = np.zeros(m, dtype=bool)
    out = []
    for root in range(m):
        if seen[root]:
            continue
        seen[root] = True
        queue = deque([root])
        while queue:
            u = queue.popleft()
            out.append(u)
            for w in np.sort(indices[indptr[u]:indptr[u + 1]]):
                if not seen[w]:
                    seen[w] = True
                    queue.append(int(w))
    return np.asarray(out, dtype=np.int64)


def order_nodes(nodes: np.ndarray, edges: np.ndarray, ordering: str) -> np.ndarray:
    """Return ``nodes`` (global ids) in layer-packing order."""
    if ordering not in ORDERINGS:
        raise ValidationError(f"unknown ordering {ordering!r}; choose from {ORDERINGS}")
    adj = _local_csr(nodes, edges)
    if ordering == "bfs":
        local = bfs_order(adj)
    else:
        local = reverse_cuthill_mckee(adj, symmetric_mode=True).astype(np.int64)
    return nodes[local]


def assemble_layers(
    graph: ComputationGraph,
    nodes,
    grid: GridSpec,
    qpu: int = 0,
    cut_edges=(),
    ordering: str = "cuthill_mckee",
    seed: int = 0,
) -> ExecutionPlan:
    """Pack the subgraph induced by ``nodes`` into capacity-bounded layers.

    ``cut_edges`` are graph edges with exactly one endpoint in ``nodes``; each
    becomes a connector on the layer holding its local endpoint.  ``seed`` is
    accepted for interface stability; both orderings are deterministic.
    """
    nodes = np.unique(np.asarray(list(nodes) if not isinstance(nodes, np.ndarray) else nodes, dtype=np.int64))
    inside = np.zeros(graph.num_nodes, dtype=bool)
    inside[nodes] = True
    e = graph.edges
    intra = e[inside[e[:, 0]] & inside[e[:, 1]]] if len(e) else e
    order = order_nodes(nodes, intra, ordering)

    cap = grid.capacity
    layers = tuple(tuple(int(x) for x in order[i:i + cap]) for i in range(0, len(order), cap))
    layer_of = np.full(graph.num_nodes, -1, dtype=np.int64)
    for i in range(0, len(order), cap):
        layer_of[order[i:i + cap]] = i // cap
    node_layer = {int(u): int(layer_of[u]) for u in nodes}

    lu = layer_of[intra[:, 0]]
    lv = layer_of[intra[:, 1]]
    span = lu != lv
    fusees = tuple(
        (int(u), int(v), int(a), int(b))
        for (u, v), a, b in zip(intra[span], lu[span], lv[span])
    )

    connectors = []
    for u, v in sorted(tuple(int(x) for x in edge) for edge in cut_edges):
        if inside[u] == inside[v]:
            raise ValidationError(f"cut edge ({u}, {v}) does not cross the boundary of QPU {qpu}")
        local = u if inside[u] else v
        connectors.append(Connector((u, v), local, int(layer_of[local])))
    return ExecutionPlan(qpu, layers, node_layer, fusees, tuple(connectors))
