"""Compiled union-find kernels for bulk percolation sampling.

Every kernel resets its forest lazily: a node whose ``stamp`` differs from
the current epoch is treated as a fresh singleton, so one allocation serves
a whole chunk of samples.
"""
import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _find(parent, rank, stamp, epoch, x):
    if stamp[x] != epoch:
        stamp[x] = epoch
        parent[x] = x
        rank[x] = 0
        return x
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True, nogil=True)
def _union(parent, rank, stamp, epoch, a, b):
    ra = _find(parent, rank, stamp, epoch, a)
    rb = _find(parent, rank, stamp, epoch, b)
    if ra == rb:
        return False
    if rank[ra] < rank[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    if rank[ra] == rank[rb]:
        rank[ra] += 1
    return True


@njit(cache=True, nogil=True)
def components(n_nodes, eu, ev, is_open, fu, fv):
    """Union-find forest of one realization; returns (labels, parent, rank)."""
    parent = np.empty(n_nodes, np.int64)
    rank = np.empty(n_nodes, np.int64)
    stamp = np.zeros(n_nodes, np.int64)
    for i in range(len(fu)):
        _union(parent, rank, stamp, 1, fu[i], fv[i])
    for i in range(len(eu)):
        if is_open[i]:
            _union(parent, rank, stamp, 1, eu[i], ev[i])
    labels = np.empty(n_nodes, np.int64)
    for x in range(n_nodes):
        labels[x] = _find(parent, rank, stamp, 1, x)
    return labels, parent, rank


@njit(cache=True, nogil=True)
def pair_hits(n_nodes, eu, ev, fu, fv, uniforms, p_values, pa, pb):
    """Connection counts ``hits[k, j]`` for pair ``j`` at ``p_values[k]``.

    ``p_values`` must be ascending; edges are added incrementally, so the
    realizations at different p are coupled through the same uniforms.
    """
    n_samples = uniforms.shape[0]
    n_p = len(p_values)
    hits = np.zeros((n_p, len(pa)), np.int64)
    parent = np.empty(n_nodes, np.int64)
    rank = np.empty(n_nodes, np.int64)
    stamp = np.zeros(n_nodes, np.int64)
    for s in range(n_samples):
        epoch = s + 1
        u = uniforms[s]
        for i in range(len(fu)):
            _union(parent, rank, stamp, epoch, fu[i], fv[i])
        lo = -1.0
        for k in range(n_p):
            hi = p_values[k]
            for i in range(len(eu)):
                if u[i] < hi and u[i] >= lo:
                    _union(parent, rank, stamp, epoch, eu[i], ev[i])
            lo = hi
            for j in range(len(pa)):
                if (_find(parent, rank, stamp, epoch, pa[j])
                        == _find(parent, rank, stamp, epoch, pb[j])):
                    hits[k, j] += 1
    return hits


@njit(cache=True, nogil=True)
def span_hits(n_nodes, eu, ev, fu, fv, uniforms, p_values, left, right):
    """Number of samples with an open crossing from ``left`` to ``right``."""
    n_samples = uniforms.shape[0]
    n_p = len(p_values)
    spans = np.zeros(n_p, np.int64)
    parent = np.empty(n_nodes, np.int64)
    rank = np.empty(n_nodes, np.int64)
    stamp = np.zeros(n_nodes, np.int64)
    mark = np.zeros(n_nodes, np.int64)
    tick = 0
    for s in range(n_samples):
        epoch = s + 1
        u = uniforms[s]
        for i in range(len(fu)):
            _union(parent, rank, stamp, epoch, fu[i], fv[i])
        lo = -1.0
        for k in range(n_p):
            hi = p_values[k]
            for i in range(len(eu)):
                if u[i] < hi and u[i] >= lo:
                    _union(parent, rank, stamp, epoch, eu[i], ev[i])
            lo = hi
            tick += 1
            for j in range(len(left)):
                mark[_find(parent, rank, stamp, epoch, left[j])] = tick
            for j in range(len(right)):
                if mark[_find(parent, rank, stamp, epoch, right[j])] == tick:
                    spans[k] += 1
                    break
    return spans


@njit(cache=True, nogil=True)
def max_cluster_sizes(n_nodes, eu, ev, fu, fv, uniforms, p):
    """Largest component size of each sample at open probability ``p``."""
    n_samples = uniforms.shape[0]
    out = np.zeros(n_samples, np.int64)
    parent = np.empty(n_nodes, np.int64)
    rank = np.empty(n_nodes, np.int64)
    stamp = np.zeros(n_nodes, np.int64)
    count = np.zeros(n_nodes, np.int64)
    for s in range(n_samples):
        epoch = s + 1
        u = uniforms[s]
        for i in range(len(fu)):
            _union(parent, rank, stamp, epoch, fu[i], fv[i])
        for i in range(len(eu)):
            if u[i] < p:
                _union(parent, rank, stamp, epoch, eu[i], ev[i])
        count[:] = 0
        best = 0
        for x in range(n_nodes):
            r = _find(parent, rank, stamp, epoch, x)
            count[r] += 1
            if count[r] > best:
                best = count[r]
        out[s] = best
    return out
