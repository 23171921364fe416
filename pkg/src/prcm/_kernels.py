"""Compiled inner loops shared by the graph algorithms."""

import numpy as np
from numba import njit


@njit(cache=True)
def _dist(loc, a, b, period):
    s = 0.0
    for k in range(loc.shape[1]):
        t = abs(loc[a, k] - loc[b, k])
        if period > 0.0 and t > period - t:
            t = period - t
        s += t * t
    return np.sqrt(s)


@njit(cache=True)
def common_counts(indptr, indices, loc, period, R, pi, pj):
    out = np.zeros(len(pi), dtype=np.int64)
    for p in range(len(pi)):
        i = pi[p]
        j = pj[p]
        a = indptr[i]
        ae = indptr[i + 1]
        b = indptr[j]
        be = indptr[j + 1]
        c = 0
        while a < ae and b < be:
            u = indices[a]
            v = indices[b]
            if u < v:
                a += 1
            elif v < u:
                b += 1
            else:
                if _dist(loc, u, i, period) < R and _dist(loc, u, j, period) < R:
                    c += 1
                a += 1
                b += 1
        out[p] = c
    return out


@njit(cache=True)
def cell_pairs(cell_ptr, cell_nodes, nbr):
    """All node pairs u < v whose cells are linked in ``nbr`` (self included)."""
    K = len(cell_ptr) - 1
    total = 0
    for c in range(K):
        m = cell_ptr[c + 1] - cell_ptr[c]
        for t in range(nbr.shape[1]):
            c2 = nbr[c, t]
            if c2 < 0 or c2 < c:
                continue
            if c2 == c:
                total += m * (m - 1) // 2
            else:
                total += m * (cell_ptr[c2 + 1] - cell_ptr[c2])
    pi = np.empty(total, dtype=np.int64)
    pj = np.empty(total, dtype=np.int64)
    q = 0
    for c in range(K):
        for t in range(nbr.shape[1]):
            c2 = nbr[c, t]
            if c2 < 0 or c2 < c:
                continue
            for x in range(cell_ptr[c], cell_ptr[c + 1]):
                u = cell_nodes[x]
                start = x + 1 if c2 == c else cell_ptr[c2]
                for y in range(start, cell_ptr[c2 + 1]):
                    v = cell_nodes[y]
                    if u < v:
                        pi[q] = u
                        pj[q] = v
                    else:
                        pi[q] = v
                        pj[q] = u
                    q += 1
    return pi, pj


@njit(cache=True)
def lookup(pptr, pidx, pval, u, v):
    lo = pptr[u]
    hi = pptr[u + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if pidx[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    if lo < pptr[u + 1] and pidx[lo] == v:
        return pval[lo]
    return 0


@njit(cache=True)
def cell_verdicts(cell_ptr, cell_nodes, nbr1, min_count, pptr, pidx, pval, truth, use_truth):
    """A-Good (or T-Good when ``use_truth``) flag for every occupied cell."""
    K = len(cell_ptr) - 1
    out = np.zeros(K, dtype=np.bool_)
    buf = np.empty(len(cell_nodes), dtype=np.int64)
    col = np.empty(len(cell_nodes), dtype=np.int64)
    for c in range(K):
        if cell_ptr[c + 1] - cell_ptr[c] < min_count:
            continue
        m = 0
        for t in range(nbr1.shape[1]):
            c2 = nbr1[c, t]
            if c2 < 0:
                continue
            for x in range(cell_ptr[c2], cell_ptr[c2 + 1]):
                buf[m] = cell_nodes[x]
                m += 1
        ok = True
        if use_truth:
            for a in range(m):
                for b in range(a + 1, m):
                    if lookup(pptr, pidx, pval, buf[a], buf[b]) != truth[buf[a]] * truth[buf[b]]:
                        ok = False
                        break
                if not ok:
                    break
        else:
            col[0] = 1
            for a in range(1, m):
                col[a] = lookup(pptr, pidx, pval, buf[0], buf[a])
            for a in range(1, m):
                for b in range(a + 1, m):
                    if lookup(pptr, pidx, pval, buf[a], buf[b]) != col[a] * col[b]:
                        ok = False
                        break
                if not ok:
                    break
        out[c] = ok
    return out


@njit(cache=True)
def propagate(good, nbr1, start_order, anchor, cell_ptr, cell_nodes, pptr, pidx, pval, n_nodes):
    """Breadth-first label propagation over A-Good cells."""
    K = len(good)
    est = np.ones(n_nodes, dtype=np.int8)
    comp_node = np.full(n_nodes, -1, dtype=np.int64)
    comp_cell = np.full(K, -1, dtype=np.int64)
    queue = np.empty(K, dtype=np.int64)
    n_comp = 0
    for s in start_order:
        if not good[s] or comp_cell[s] >= 0:
            continue
        head = 0
        tail = 1
        queue[0] = s
        comp_cell[s] = n_comp
        est[anchor[s]] = 1
        while head < tail:
            c = queue[head]
            head += 1
            a = anchor[c]
            for x in range(cell_ptr[c], cell_ptr[c + 1]):
                v = cell_nodes[x]
                comp_node[v] = n_comp
                if v != a:
                    est[v] = lookup(pptr, pidx, pval, a, v) * est[a]
            for t in range(nbr1.shape[1]):
                c2 = nbr1[c, t]
                if c2 < 0 or not good[c2] or comp_cell[c2] >= 0:
                    continue
                comp_cell[c2] = n_comp
                b = anchor[c2]
                est[b] = lookup(pptr, pidx, pval, a, b) * est[a]
                queue[tail] = c2
                tail += 1
        n_comp += 1
    return est, comp_node, comp_cell, n_comp


@njit(cache=True)
def uf_find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    while parent[x] != root:
        nxt = parent[x]
        parent[x] = root
        x = nxt
    return root


@njit(cache=True)
def union_find(n, ei, ej):
    parent = np.arange(n)
    size = np.ones(n, dtype=np.int64)
    for k in range(len(ei)):
        a = uf_find(parent, ei[k])
        b = uf_find(parent, ej[k])
        if a == b:
            continue
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
    for x in range(n):
        uf_find(parent, x)
    return parent


@njit(cache=True)
def ordered_triangles(indptr, indices, centres):
    """(i, j, k) for every centre i and ordered neighbour pair j != k with j ~ k."""
    total = 0
    for i in centres:
        for a in range(indptr[i], indptr[i + 1]):
            j = indices[a]
            for b in range(indptr[i], indptr[i + 1]):
                k = indices[b]
                if k != j and lookup_edge(indptr, indices, j, k):
                    total += 1
    out = np.empty((total, 3), dtype=np.int64)
    q = 0
    for i in centres:
        for a in range(indptr[i], indptr[i + 1]):
            j = indices[a]
            for b in range(indptr[i], indptr[i + 1]):
                k = indices[b]
                if k != j and lookup_edge(indptr, indices, j, k):
                    out[q, 0] = i
                    out[q, 1] = j
                    out[q, 2] = k
                    q += 1
    return out


@njit(cache=True)
def lookup_edge(indptr, indices, u, v):
    lo = indptr[u]
    hi = indptr[u + 1]
    while lo < hi:
        mid = (lo + hi) // 2
        if indices[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo < indptr[u + 1] and indices[lo] == v


@njit(cache=True)
def component_of(indptr, indices, start):
    """Nodes reachable from ``start`` and the BFS parent of each (-1 for the root)."""
    n = len(indptr) - 1
    parent = np.full(n, -2, dtype=np.int64)
    queue = np.empty(n, dtype=np.int64)
    queue[0] = start
    parent[start] = -1
    head = 0
    tail = 1
    while head < tail:
        u = queue[head]
        head += 1
        for a in range(indptr[u], indptr[u + 1]):
            v = indices[a]
            if parent[v] == -2:
                parent[v] = u
                queue[tail] = v
                tail += 1
    return queue[:tail], parent
