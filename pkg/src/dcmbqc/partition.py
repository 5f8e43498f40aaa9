"""Balanced k-way partitioning and the adaptive imbalance/modularity search."""

from __future__ import annotations

import heapq
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ._accel import njit
from .model import ComputationGraph, ValidationError

log = logging.getLogger(__name__)

COARSEN_PER_PART = 20
MAX_PASSES = 10
STALL_MOVES = 64


@dataclass(frozen=True)
class PartitionConfig:
    k: int
    eps_q: float = 0.01
    gamma: float = 1.02
    alpha_max: float = 1.5
    seed: int = 0
    max_iter: int = 1000

    def __post_init__(self):
        if self.k < 1:
            raise ValidationError("k must be >= 1")
        if not self.gamma > 1:
            raise ValidationError("gamma must exceed 1")
        if not self.alpha_max >= 1:
            raise ValidationError("alpha_max must be >= 1")
        if not self.eps_q > 0:
            raise ValidationError("eps_q must be positive")


@dataclass(frozen=True, eq=False)
class PartitionResult:
    assignment: np.ndarray
    k: int
    imbalance_used: float
    cut_edges: np.ndarray
    modularity: float
    history: tuple = field(default=())

    @property
    def cut(self) -> int:
        return int(len(self.cut_edges))

    def part_sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k)

    def nodes_of(self, part: int) -> np.ndarray:
        return np.flatnonzero(self.assignment == part)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "assignment": self.assignment.tolist(),
            "cut": self.cut,
            "modularity": self.modularity,
            "alpha_used": self.imbalance_used,
        }


def balance_bound(n: int, k: int, alpha: float) -> int:
    # tolerance guards alpha values such as 1.02**k landing a hair under an integer
    return int(math.floor(alpha * math.ceil(n / k) + 1e-9))


def modularity(graph: ComputationGraph, assignment) -> float:
    """Newman modularity ``sum_c e_c/m - (d_c/2m)^2``; 0 for an edgeless graph."""
    m = graph.num_edges
    if m == 0:
        return 0.0
    part = np.asarray(assignment, dtype=np.int64)
    k = int(part.max()) + 1 if len(part) else 1
    pu = part[graph.edges[:, 0]]
    pv = part[graph.edges[:, 1]]
    intra = np.bincount(pu[pu == pv], minlength=k).astype(np.float64)
    deg = np.bincount(part, weights=graph.degrees(), minlength=k)
    return float(np.sum(intra / m - (deg / (2.0 * m)) ** 2))


def cut_edges(graph: ComputationGraph, assignment) -> np.ndarray:
    part = np.asarray(assignment)
    e = graph.edges
    if len(e) == 0:
        return e
    return e[part[e[:, 0]] != part[e[:, 1]]]


# ---------------------------------------------------------------- kernels


@njit(cache=True)
def _heavy_edge_matching(indptr, idx, ew, vw, visit, max_w):
    n = indptr.shape[0] - 1
    match = np.full(n, -1, dtype=np.int64)
    for k in range(n):
        u = visit[k]
        if match[u] >= 0:
            continue
        best = -1
        best_w = -1
        for e in range(indptr[u], indptr[u + 1]):
            v = idx[e]
            if v == u or match[v] >= 0 or vw[u] + vw[v] > max_w:
                continue
            if ew[e] > best_w or (ew[e] == best_w and v < best):
                best_w = ew[e]
                best = v
        if best >= 0:
            match[u] = best
            match[best] = u
        else:
            match[u] = u
    cmap = np.full(n, -1, dtype=np.int64)
    nc = 0
    for u in range(n):
        if cmap[u] < 0:
            cmap[u] = nc
            cmap[match[u]] = nc
            nc += 1
    return cmap, nc


@njit(cache=True)
def _connectivity(indptr, idx, ew, part, k):
    n = indptr.shape[0] - 1
    conn = np.zeros((n, k), dtype=np.int64)
    for u in range(n):
        for e in range(indptr[u], indptr[u + 1]):
            conn[u, part[idx[e]]] += ew[e]
    return conn


@njit(cache=True)
def _apply_move(indptr, idx, ew, vw, conn, pw, part, u, dst, log, nlog):
    src = part[u]
    part[u] = dst
    pw[src] -= vw[u]
    pw[dst] += vw[u]
    for e in range(indptr[u], indptr[u + 1]):
        conn[idx[e], src] -= ew[e]
        conn[idx[e], dst] += ew[e]
    if nlog < log.shape[0]:
        log[nlog, 0] = u
        log[nlog, 1] = src
        log[nlog, 2] = dst
    return nlog + 1


@njit(cache=True)
def _rebalance(indptr, idx, ew, vw, part, k, bound, conn, pw, log, nlog):
    """Move nodes out of overweight parts, cheapest cut increase first."""
    n = indptr.shape[0] - 1
    while True:
        h = -1
        for p in range(k):
            if pw[p] > bound and (h < 0 or pw[p] > pw[h]):
                h = p
        if h < 0:
            return nlog
        best_u = -1
        best_p = -1
        best_g = -(1 << 62)
        for u in range(n):
            if part[u] != h or pw[h] - vw[u] < 1:
                continue
            for p in range(k):
                if p == h or pw[p] + vw[u] > bound:
                    continue
                g = conn[u, p] - conn[u, h]
                if g > best_g or (g == best_g and best_p >= 0 and pw[p] < pw[best_p]):
                    best_g = g
                    best_u = u
                    best_p = p
        if best_u < 0:
            return nlog
        nlog = _apply_move(indptr, idx, ew, vw, conn, pw, part, best_u, best_p, log, nlog)


@njit(cache=True)
def _fm_refine(indptr, idx, ew, vw, part, k, bound, max_passes, stall, log, nlog):
    n = indptr.shape[0] - 1
    conn = _connectivity(indptr, idx, ew, part, k)
    pw = np.zeros(k, dtype=np.int64)
    for u in range(n):
        pw[part[u]] += vw[u]
    nlog = _rebalance(indptr, idx, ew, vw, part, k, bound, conn, pw, log, nlog)
    moved = np.empty(n, dtype=np.int64)
    moved_from = np.empty(n, dtype=np.int64)
    for _ in range(max_passes):
        keys = np.empty(n, dtype=np.int64)
        nb = 0
        cand = np.empty(n, dtype=np.int64)
        for u in range(n):
            own = part[u]
            ext = 0
            g = -(1 << 40)
            for p in range(k):
                if p != own and conn[u, p] > 0:
                    ext += conn[u, p]
                    if conn[u, p] - conn[u, own] > g:
                        g = conn[u, p] - conn[u, own]
            if ext > 0:
                cand[nb] = u
                keys[nb] = -g * (n + 1) + u
                nb += 1
        if nb == 0:
            break
        order = cand[:nb][np.argsort(keys[:nb])]
        locked = np.zeros(n, dtype=np.bool_)
        nm = 0
        cum = 0
        best = 0
        best_nm = 0
        since = 0
        for i in range(nb):
            u = order[i]
            if locked[u]:
                continue
            own = part[u]
            if pw[own] - vw[u] < 1:
                continue
            tgt = -1
            tg = -(1 << 62)
            for p in range(k):
                if p == own or conn[u, p] == 0 or pw[p] + vw[u] > bound:
                    continue
                g = conn[u, p] - conn[u, own]
                if g > tg or (g == tg and pw[p] < pw[tgt]):
                    tg = g
                    tgt = p
            if tgt < 0:
                continue
            moved[nm] = u
            moved_from[nm] = own
            nm += 1
            locked[u] = True
            nlog = _apply_move(indptr, idx, ew, vw, conn, pw, part, u, tgt, log, nlog)
            cum += tg
            if cum > best:
                best = cum
                best_nm = nm
                since = 0
            else:
                since += 1
                if since >= stall:
                    break
        for j in range(nm - 1, best_nm - 1, -1):
            nlog = _apply_move(indptr, idx, ew, vw, conn, pw, part, moved[j], moved_from[j], log, nlog)
        if best <= 0:
            break
    return nlog


# ---------------------------------------------------------------- multilevel


@dataclass
class _Level:
    indptr: np.ndarray
    idx: np.ndarray
    ew: np.ndarray
    vw: np.ndarray
    cmap: np.ndarray | None = None  # fine node -> node of the next coarser level


def _csr_from_pairs(n, u, v, w):
    if len(u) == 0:
        return np.zeros(n + 1, dtype=np.int64), np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64)
    src = np.concatenate([u, v])
    dst = np.concatenate([v, u])
    wt = np.concatenate([w, w])
    order = np.lexsort((dst, src))
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst[order].astype(np.int64), wt[order].astype(np.int64)


def build_hierarchy(graph: ComputationGraph, k: int, seed: int) -> list[_Level]:
    """Heavy-edge-matching coarsening down to about ``20*k`` nodes."""
    n = graph.num_nodes
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    levels = [_Level(*_csr_from_pairs(n, u, v, np.ones(len(u), dtype=np.int64)), np.ones(n, dtype=np.int64))]
    rng = np.random.default_rng(seed)
    target = COARSEN_PER_PART * k
    max_w = max(1, math.ceil(1.5 * n / target))
    while True:
        lv = levels[-1]
        nf = len(lv.vw)
        if nf <= target:
            break
        cmap, nc = _heavy_edge_matching(lv.indptr, lv.idx, lv.ew, lv.vw, rng.permutation(nf), max_w)
        if nc > 0.95 * nf:
            break
        lv.cmap = cmap
        src = np.repeat(np.arange(nf), np.diff(lv.indptr))
        cu, cv = cmap[src], cmap[lv.idx]
        keep = cu < cv
        key = cu[keep] * nc + cv[keep]
        uniq, inv = np.unique(key, return_inverse=True)
        w = np.bincount(inv, weights=lv.ew[keep]).astype(np.int64)
        vw = np.bincount(cmap, weights=lv.vw, minlength=nc).astype(np.int64)
        levels.append(_Level(*_csr_from_pairs(nc, uniq // nc, uniq % nc, w), vw))
    return levels


def _grow_regions(lv: _Level, k: int) -> np.ndarray:
    """Greedy graph growing: each part absorbs its most-connected frontier node."""
    n = len(lv.vw)
    part = np.full(n, -1, dtype=np.int64)
    remaining = int(lv.vw.sum())
    for p in range(k - 1):
        target = math.ceil(remaining / (k - p))
        weight = 0
        gain: dict[int, int] = {}
        heap: list = []
        while weight < target:
            if not heap:
                free = np.flatnonzero(part < 0)
                if len(free) == 0:
                    break
                u0 = int(free[0])
                gain[u0] = 0
                heap = [(0, u0)]
            g, u = heapq.heappop(heap)
            if part[u] >= 0 or gain[u] != -g:
                continue
            w_u = int(lv.vw[u])
            if weight > 0 and weight + w_u > target and weight + w_u - target > target - weight:
                break
            part[u] = p
            weight += w_u
            for e in range(lv.indptr[u], lv.indptr[u + 1]):
                w = int(lv.idx[e])
                if part[w] < 0:
                    gain[w] = gain.get(w, 0) + int(lv.ew[e])
                    heapq.heappush(heap, (-gain[w], w))
        remaining -= weight
    part[part < 0] = k - 1
    return part


def _partition_levels(levels: list[_Level], k: int, bound: int, log: np.ndarray):
    coarse = levels[-1]
    part = _grow_regions(coarse, k)
    nlog = 0
    for depth in range(len(levels) - 1, -1, -1):
        lv = levels[depth]
        if depth < len(levels) - 1:
            part = part[lv.cmap]
        part = part.copy()
        nlog = _fm_refine(lv.indptr, lv.idx, lv.ew, lv.vw, part, k, bound, MAX_PASSES, STALL_MOVES, log, nlog)
    return part, nlog


def _result(graph, part, k, alpha, history=()) -> PartitionResult:
    part = np.asarray(part, dtype=np.int64)
    part.setflags(write=False)
    cut = cut_edges(graph, part)
    return PartitionResult(part, k, float(alpha), cut, modularity(graph, part), tuple(history))


def kway_partition(
    graph: ComputationGraph, k: int, alpha: float = 1.0, seed: int = 0, *, levels=None, move_log=None
) -> PartitionResult:
    """Multilevel k-way partition with max part size ``floor(alpha*ceil(n/k))``.

    If ``move_log`` is a list, every refinement move is appended to it as a
    ``(node, from, to)`` tuple; on an uncoarsened graph these are moves on the
    input nodes.
    """
    n = graph.num_nodes
    if n == 0:
        raise ValidationError("cannot partition an empty graph")
    if not 1 <= k <= n:
        raise ValidationError(f"need 1 <= k <= n, got k={k}, n={n}")
    if alpha < 1:
        raise ValidationError("alpha must be >= 1")
    bound = balance_bound(n, k, alpha)
    if bound * k < n:
        raise ValidationError(f"balance bound {bound} x {k} parts cannot hold {n} nodes")
    if k == 1:
        return _result(graph, np.zeros(n, dtype=np.int64), 1, alpha)
    if levels is None:
        levels = build_hierarchy(graph, k, seed)
    buf = np.zeros((64 * n + 1024 if move_log is not None else 0, 3), dtype=np.int64)
    part, nlog = _partition_levels(levels, k, bound, buf)
    if move_log is not None:
        if nlog > len(buf):
            raise RuntimeError(f"move log overflow: {nlog} moves")
        move_log.extend(tuple(int(x) for x in row) for row in buf[:nlog])
    return _result(graph, part, k, alpha)


def adaptive_partition(graph: ComputationGraph, cfg: PartitionConfig) -> PartitionResult:
    """Search the imbalance factor for the highest-modularity partition.

    Starts perfectly balanced, relaxes by ``gamma`` while modularity keeps
    improving by more than ``eps_q``, backs off on a drop, stops on stagnation.
    The modularity of the previous probe is the reference for each step.
    """
    k = cfg.k
    if k == 1:
        return kway_partition(graph, 1)
    levels = build_hierarchy(graph, k, cfg.seed)
    exp = 0
    prev_q = -1.0
    best = None
    history = []
    for _ in range(cfg.max_iter):
        alpha = min(cfg.gamma ** exp, cfg.alpha_max)
        res = kway_partition(graph, k, alpha, cfg.seed, levels=levels)
        q = res.modularity
        history.append((alpha, q))
        if best is None or q > best.modularity:
            best = res
        dq = q - prev_q
        prev_q = q
        if dq > cfg.eps_q and alpha < cfg.alpha_max:
            exp += 1
        elif dq < -cfg.eps_q:
            exp = max(exp - 1, 0)
        else:
            break
    else:
        log.warning("adaptive partition stopped after %d iterations", cfg.max_iter)
    return PartitionResult(best.assignment, k, best.imbalance_used, best.cut_edges, best.modularity, tuple(history))
