"""Inner loops for lifetime evaluation and slot packing.

All functions take flat numpy arrays only so they compile under numba; with
``DCMBQC_DISABLE_NUMBA=1`` the same source runs as ordinary Python.
"""

import numpy as np

from ._accel import njit


@njit(cache=True)
def lifetime_kernel(netindex, order, p_indptr, p_idx, measuree, fu, fv, maxparent):
    """Fusee and measuree lifetimes; ``maxparent`` is filled in place."""
    tau_f = 0
    for k in range(fu.shape[0]):
        d = netindex[fu[k]] - netindex[fv[k]]
        if d < 0:
            d = -d
        if d > tau_f:
            tau_f = d
    tau_m = 0
    for k in range(order.shape[0]):
        u = order[k]
        best = netindex[u] + 1
        for e in range(p_indptr[u], p_indptr[u + 1]):
            cand = maxparent[p_idx[e]] + 1
            if cand > best:
                best = cand
        maxparent[u] = best
        if measuree[u]:
            tau = best - netindex[u]
            if tau > tau_m:
                tau_m = tau
    return tau_f, tau_m


@njit(cache=True)
def remote(start, n_main, sync_a, sync_b):
    tau = 0
    for k in range(sync_a.shape[0]):
        s = start[n_main + k]
        d1 = s - start[sync_a[k]]
        if d1 < 0:
            d1 = -d1
        d2 = s - start[sync_b[k]]
        if d2 < 0:
            d2 = -d2
        if d1 > tau:
            tau = d1
        if d2 > tau:
            tau = d2
    return tau


@njit(cache=True)
def netindex_from(start, node_task):
    out = np.empty(node_task.shape[0], dtype=np.int64)
    for u in range(node_task.shape[0]):
        out[u] = start[node_task[u]]
    return out


@njit(cache=True)
def pack(order, qa, qb, n_qpus, kmax, horizon, pin_task, pin_time, start):
    """Greedy earliest-slot packing in ``order``.

    ``qb[t] < 0`` marks a main task.  Slots are 1-based.  A main task never
    starts before the previous main task dispatched on its QPU; a pinned main
    task counts at its dispatch turn.  Returns False when the horizon is
    exhausted; ``start`` is then only partially filled.
    """
    main_occ = np.zeros((n_qpus, horizon + 2), dtype=np.bool_)
    sync_cnt = np.zeros((n_qpus, horizon + 2), dtype=np.int64)
    lo_main = np.ones(n_qpus, dtype=np.int64)
    lo_sync = np.ones(n_qpus, dtype=np.int64)
    last_main = np.zeros(n_qpus, dtype=np.int64)
    if pin_task >= 0:
        a = qa[pin_task]
        b = qb[pin_task]
        start[pin_task] = pin_time
        if b < 0:
            main_occ[a, pin_time] = True
        else:
            sync_cnt[a, pin_time] += 1
            sync_cnt[b, pin_time] += 1
    for k in range(order.shape[0]):
        task = order[k]
        a = qa[task]
        b = qb[task]
        if task == pin_task:
            if b < 0 and pin_time > last_main[a]:
                last_main[a] = pin_time
            continue
        if b < 0:
            t = max(lo_main[a], last_main[a] + 1)
            while t <= horizon and (main_occ[a, t] or sync_cnt[a, t] > 0):
                t += 1
            if t > horizon:
                return False
            if t == lo_main[a]:
                lo_main[a] = t + 1
            main_occ[a, t] = True
            last_main[a] = t
            start[task] = t
        else:
            # advance watermarks past slots that can never take a sync again
            while lo_sync[a] <= horizon and (main_occ[a, lo_sync[a]] or sync_cnt[a, lo_sync[a]] >= kmax):
                lo_sync[a] += 1
            while lo_sync[b] <= horizon and (main_occ[b, lo_sync[b]] or sync_cnt[b, lo_sync[b]] >= kmax):
                lo_sync[b] += 1
            t = max(lo_sync[a], lo_sync[b])
            while t <= horizon and (
                main_occ[a, t] or main_occ[b, t] or sync_cnt[a, t] >= kmax or sync_cnt[b, t] >= kmax
            ):
                t += 1
            if t > horizon:
                return False
            sync_cnt[a, t] += 1
            sync_cnt[b, t] += 1
            start[task] = t
            # a main can no longer use this slot on either side
            if t == lo_main[a]:
                lo_main[a] = t + 1
            if t == lo_main[b]:
                lo_main[b] = t + 1
    return True


@njit(cache=True)
def main_local_cost(
    task, t, netindex, maxparent, rank,
    tn_indptr, tn_idx, node_task,
    p_indptr, p_idx, c_indptr, c_idx,
    fa_indptr, fa_idx, measuree,
    ts_indptr, ts_idx, start, n_main,
):
    """Lifetime terms touching main ``task`` if it started at ``t``, all else fixed."""
    cost = 0
    lo = tn_indptr[task]
    hi = tn_indptr[task + 1]
    cnt = hi - lo
    # nodes of the task in topological rank order
    nodes = tn_idx[lo:hi].copy()
    keys = np.empty(cnt, dtype=np.int64)
    for i in range(cnt):
        keys[i] = rank[nodes[i]]
    nodes = nodes[np.argsort(keys)]
    local_mp = np.empty(cnt, dtype=np.int64)
    for i in range(cnt):
        u = nodes[i]
        for e in range(fa_indptr[u], fa_indptr[u + 1]):
            w = fa_idx[e]
            other = t if node_task[w] == task else netindex[w]
            d = t - other
            if d < 0:
                d = -d
            if d > cost:
                cost = d
        best = t + 1
        for e in range(p_indptr[u], p_indptr[u + 1]):
            p = p_idx[e]
            if node_task[p] == task:
                mp = -1
                for j in range(i):
                    if nodes[j] == p:
                        mp = local_mp[j]
                        break
            else:
                mp = maxparent[p]
            if mp + 1 > best:
                best = mp + 1
        local_mp[i] = best
        if measuree[u] and best - t > cost:
            cost = best - t
    # one hop into children hosted by other tasks
    for i in range(cnt):
        u = nodes[i]
        for e in range(c_indptr[u], c_indptr[u + 1]):
            v = c_idx[e]
            if node_task[v] == task or not measuree[v]:
                continue
            best = netindex[v] + 1
            for f in range(p_indptr[v], p_indptr[v + 1]):
                p = p_idx[f]
                if node_task[p] == task:
                    mp = -1
                    for j in range(cnt):
                        if nodes[j] == p:
                            mp = local_mp[j]
                            break
                else:
                    mp = maxparent[p]
                if mp + 1 > best:
                    best = mp + 1
            if best - netindex[v] > cost:
                cost = best - netindex[v]
    for e in range(ts_indptr[task], ts_indptr[task + 1]):
        d = start[n_main + ts_idx[e]] - t
        if d < 0:
            d = -d
        if d > cost:
            cost = d
    return cost
