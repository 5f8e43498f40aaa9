"""Graph and program data model shared by every compiler stage.

Node ids are dense integers ``0..n-1``.  Graph containers hold numpy arrays
that are marked read-only after validation, so instances can be shared
between worker threads without copying.
"""

from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

BUNDLE_VERSION = 1
MEASUREE = "measuree"
REMOVEE = "removee"
ROLES = (MEASUREE, REMOVEE)


class BundleError(ValueError):
    """Base class for invalid program data."""


class ParseError(BundleError):
    """The input is not well-formed JSON or misses required keys."""


class ValidationError(BundleError):
    """The input parses but violates a data-model invariant."""


class CycleError(ValidationError):
    def __init__(self, cycle: list[int]):
        self.cycle = list(cycle)
        path = " -> ".join(str(v) for v in self.cycle + self.cycle[:1])
        super().__init__(f"dependency cycle: {path}")


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.setflags(write=False)
    return arr


def _pairs(pairs, ordered: bool) -> np.ndarray:
    try:
        arr = np.asarray(list(pairs) if not isinstance(pairs, np.ndarray) else pairs, dtype=np.int64)
    except (TypeError, ValueError):
        raise ParseError("pairs must be integer [u, v] lists") from None
    if arr.size == 0:
        return np.zeros((0, 2), dtype=np.int64)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValidationError(f"expected a list of pairs, got shape {arr.shape}")
    if not ordered:
        arr = np.sort(arr, axis=1)
    order = np.lexsort((arr[:, 1], arr[:, 0]))
    return arr[order]


def _csr(n: int, src: np.ndarray, dst: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    return _frozen(indptr), _frozen(dst[order].astype(np.int64))


@dataclass(frozen=True, eq=False)
class ComputationGraph:
    """Undirected graph: nodes are photons/resource units, edges are fusions."""

    num_nodes: int
    edges: np.ndarray
    roles: tuple[str, ...] = ()

    def __post_init__(self):
        n = int(self.num_nodes)
        if n < 0:
            raise ValidationError("negative node count")
        edges = _pairs(self.edges, ordered=False)
        roles = tuple(self.roles) if self.roles else (MEASUREE,) * n
        if len(roles) != n:
            raise ValidationError(f"{len(roles)} roles for {n} nodes")
        for i, r in enumerate(roles):
            if r not in ROLES:
                raise ValidationError(f"node {i}: unknown role {r!r}")
        if len(edges):
            loops = edges[edges[:, 0] == edges[:, 1]]
            if len(loops):
                raise ValidationError(f"self-loop on node {int(loops[0, 0])}")
            bad = edges[(edges < 0).any(axis=1) | (edges >= n).any(axis=1)]
            if len(bad):
                u, v = (int(x) for x in bad[0])
                node = v if (v >= n or v < 0) else u
                raise ValidationError(f"edge ({u}, {v}) references undeclared node {node}")
            dup = np.all(edges[1:] == edges[:-1], axis=1)
            if dup.any():
                u, v = (int(x) for x in edges[1:][dup][0])
                raise ValidationError(f"duplicate edge ({u}, {v})")
        object.__setattr__(self, "num_nodes", n)
        object.__setattr__(self, "edges", _frozen(edges))
        object.__setattr__(self, "roles", roles)

    @property
    def num_edges(self) -> int:
        return int(len(self.edges))

    def __eq__(self, other):
        if not isinstance(other, ComputationGraph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and self.roles == other.roles
            and np.array_equal(self.edges, other.edges)
        )

    __hash__ = None

    def adjacency(self) -> tuple[np.ndarray, np.ndarray]:
        """Symmetric CSR adjacency ``(indptr, indices)``, neighbours ascending."""
        u, v = self.edges[:, 0], self.edges[:, 1]
        return _csr(self.num_nodes, np.concatenate([u, v]), np.concatenate([v, u]))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.num_nodes, dtype=np.int64)
        np.add.at(deg, self.edges.ravel(), 1)
        return deg

    def measuree_mask(self) -> np.ndarray:
        return np.array([r == MEASUREE for r in self.roles], dtype=np.bool_)


@dataclass(frozen=True, eq=False)
class DependencyGraph:
    """Real-time X-dependency DAG: edge ``(u, v)`` means v's basis waits on u."""

    num_nodes: int
    dep_edges: np.ndarray
    angles: np.ndarray = field(default=None)

    def __post_init__(self):
        n = int(self.num_nodes)
        deps = _pairs(self.dep_edges, ordered=True)
        angles = np.zeros(n) if self.angles is None else np.asarray(self.angles, dtype=np.float64)
        if angles.shape != (n,):
            raise ValidationError(f"{angles.shape[0]} angles for {n} nodes")
        if len(deps):
            bad = deps[(deps < 0).any(axis=1) | (deps >= n).any(axis=1)]
            if len(bad):
                u, v = (int(x) for x in bad[0])
                node = v if (v >= n or v < 0) else u
                raise ValidationError(f"dependency ({u}, {v}) references undeclared node {node}")
            loops = deps[deps[:, 0] == deps[:, 1]]
            if len(loops):
                raise CycleError([int(loops[0, 0])])
            dup = np.all(deps[1:] == deps[:-1], axis=1)
            if dup.any():
                u, v = (int(x) for x in deps[1:][dup][0])
                raise ValidationError(f"duplicate dependency ({u}, {v})")
        object.__setattr__(self, "num_nodes", n)
        object.__setattr__(self, "dep_edges", _frozen(deps))
        object.__setattr__(self, "angles", _frozen(angles))
        # raises CycleError with a witness
        object.__setattr__(self, "_order", _frozen(np.asarray(_kahn(self), dtype=np.int64)))

    def __eq__(self, other):
        if not isinstance(other, DependencyGraph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.dep_edges, other.dep_edges)
            and np.array_equal(self.angles, other.angles)
        )

    __hash__ = None

    @property
    def num_deps(self) -> int:
        return int(len(self.dep_edges))

    def parents(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR of incoming dependency edges: parents of v are ``indices[indptr[v]:indptr[v+1]]``."""
        return _csr(self.num_nodes, self.dep_edges[:, 1], self.dep_edges[:, 0])

    def children(self) -> tuple[np.ndarray, np.ndarray]:
        return _csr(self.num_nodes, self.dep_edges[:, 0], self.dep_edges[:, 1])

    def order(self) -> np.ndarray:
        return self._order


def _kahn(deps: DependencyGraph) -> list[int]:
    n = deps.num_nodes
    indeg = np.zeros(n, dtype=np.int64)
    if deps.num_deps:
        np.add.at(indeg, deps.dep_edges[:, 1], 1)
    indptr, indices = _csr(n, deps.dep_edges[:, 0], deps.dep_edges[:, 1])
    indeg = indeg.tolist()
    heap = [v for v in range(n) if indeg[v] == 0]
    heapq.heapify(heap)
    out = []
    while heap:
        u = heapq.heappop(heap)
        out.append(u)
        for v in indices[indptr[u]:indptr[u + 1]].tolist():
            indeg[v] -= 1
            if indeg[v] == 0:
                heapq.heappush(heap, v)
    if len(out) < n:
        raise CycleError(_find_cycle(n, indptr, indices, set(out)))
    return out


def _find_cycle(n, indptr, indices, done: set[int]) -> list[int]:
    # every remaining node has a remaining parent, so walking backwards must revisit
    parents: dict[int, int] = {}
    for u in range(n):
        if u in done:
            continue
        for v in indices[indptr[u]:indptr[u + 1]].tolist():
            if v not in done:
                parents.setdefault(v, u)
    start = min(parents)
    seen: dict[int, int] = {}
    walk = []
    v = start
    while v not in seen:
        seen[v] = len(walk)
        walk.append(v)
        v = parents[v]
    cycle = walk[seen[v]:]
    cycle.reverse()
    k = cycle.index(min(cycle))
    return cycle[k:] + cycle[:k]


def topo_sort(deps: DependencyGraph) -> list[int]:
    """Topological order with ties broken by ascending node id."""
    return deps.order().tolist()


@dataclass(frozen=True, eq=False)
class ProgramBundle:
    graph: ComputationGraph
    deps: DependencyGraph
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.graph.num_nodes != self.deps.num_nodes:
            raise ValidationError(
                f"graph has {self.graph.num_nodes} nodes but deps has {self.deps.num_nodes}"
            )
        removee = ~self.graph.measuree_mask()
        if self.deps.num_deps and removee.any():
            touched = removee[self.deps.dep_edges].any(axis=1)
            if touched.any():
                u, v = (int(x) for x in self.deps.dep_edges[touched][0])
                node = u if removee[u] else v
                raise ValidationError(f"removee node {node} appears in dependency ({u}, {v})")
        meta = {"name": "", "qubits": 0, "seed": 0, "generator": {}}
        meta.update(self.meta or {})
        object.__setattr__(self, "meta", meta)

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    def __eq__(self, other):
        if not isinstance(other, ProgramBundle):
            return NotImplemented
        return self.graph == other.graph and self.deps == other.deps and self.meta == other.meta

    __hash__ = None


def bundle_to_dict(bundle: ProgramBundle) -> dict:
    g, d = bundle.graph, bundle.deps
    nodes = [
        {"id": i, "role": g.roles[i], "angle": float(d.angles[i])} for i in range(g.num_nodes)
    ]
    meta = bundle.meta
    return {
        "version": BUNDLE_VERSION,
        "meta": {
            "name": meta["name"],
            "qubits": meta["qubits"],
            "seed": meta["seed"],
            "generator": meta["generator"],
        },
        "nodes": nodes,
        "edges": g.edges.tolist(),
        "deps": d.dep_edges.tolist(),
    }


def bundle_from_dict(data: Any) -> ProgramBundle:
    if not isinstance(data, dict):
        raise ParseError("bundle must be a JSON object")
    if data.get("version") != BUNDLE_VERSION:
        raise ParseError(f"unsupported bundle version {data.get('version')!r}")
    try:
        nodes = data["nodes"]
        edges = data["edges"]
        deps = data["deps"]
        meta = data.get("meta", {})
    except KeyError as exc:
        raise ParseError(f"missing key {exc.args[0]!r}") from None
    n = len(nodes)
    roles = [MEASUREE] * n
    angles = np.zeros(n)
    seen = set()
    for rec in nodes:
        try:
            i = int(rec["id"])
        except (KeyError, TypeError, ValueError):
            raise ParseError(f"bad node record {rec!r}") from None
        if not 0 <= i < n:
            raise ValidationError(f"node id {i} outside dense range 0..{n - 1}")
        if i in seen:
            raise ValidationError(f"node id {i} declared twice")
        seen.add(i)
        roles[i] = rec.get("role", MEASUREE)
        angle = rec.get("angle", 0.0)
        if not isinstance(angle, (int, float)) or not math.isfinite(angle):
            raise ValidationError(f"node {i}: angle must be a finite number")
        angles[i] = angle
    try:
        graph = ComputationGraph(n, _pairs(edges, ordered=False) if edges else np.zeros((0, 2)), tuple(roles))
        dep_graph = DependencyGraph(n, _pairs(deps, ordered=True) if deps else np.zeros((0, 2)), angles)
    except (TypeError, OverflowError) as exc:
        raise ParseError(str(exc)) from None
    return ProgramBundle(graph, dep_graph, meta)


def dumps_bundle(bundle: ProgramBundle) -> str:
    return json.dumps(bundle_to_dict(bundle), separators=(",", ":"), sort_keys=True)


def save_bundle(bundle: ProgramBundle, path) -> None:
    Path(path).write_text(dumps_bundle(bundle) + "\n", encoding="utf-8")


def load_bundle(path) -> ProgramBundle:
    text = Path(path).read_text(encoding="utf-8")
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from None
    return bundle_from_dict(data)
