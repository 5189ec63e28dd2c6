"""Compiled inner loops for graph construction and traversal.

Distances are evaluated as sqrt(sum of squared minimal-image deltas) with the
sum taken coordinate by coordinate, matching ``torus.torus_norm`` exactly.
"""

import math

import numpy as np
from numba import njit

_CACHE = True


@njit(cache=_CACHE, inline="always")
def _dist(coords, i, j, n):
    acc = 0.0
    for k in range(coords.shape[1]):
        t = abs(coords[i, k] - coords[j, k])
        if n - t < t:
            t = n - t
        acc = acc + t * t
    return math.sqrt(acc)


@njit(cache=_CACHE)
def _visit_ball(i, coords, radii, n, m, cs, order, cell_start, out, pos):
    """Scan grid cells overlapping the ball of point i.

    With ``out`` empty only counts are returned; otherwise targets are
    written from ``pos`` onward.  Returns the number of targets found.
    """
    d = coords.shape[1]
    r = radii[i]
    npts = coords.shape[0]
    found = 0
    if r >= math.sqrt(d) * n / 2.0:
        for j in range(npts):
            if j != i:
                if out.shape[0] > 0:
                    out[pos + found] = j
                found += 1
        return found
    lo = np.empty(d, np.int64)
    span = np.empty(d, np.int64)
    slack = 1e-9 * n
    for k in range(d):
        # slack absorbs rounding between wrapped and unwrapped cell assignment
        a = int(math.floor((coords[i, k] - r - slack + n / 2.0) / cs))
        b = int(math.floor((coords[i, k] + r + slack + n / 2.0) / cs))
        if b - a + 1 >= m:
            lo[k] = 0
            span[k] = m
        else:
            lo[k] = a
            span[k] = b - a + 1
    ctr = np.zeros(d, np.int64)
    while True:
        cell = 0
        for k in range(d):
            c = (lo[k] + ctr[k]) % m
            cell = cell * m + c
        for q in range(cell_start[cell], cell_start[cell + 1]):
            j = order[q]
            if j != i and _dist(coords, i, j, n) <= r:
                if out.shape[0] > 0:
                    out[pos + found] = j
                found += 1
        k = d - 1
        while k >= 0:
            ctr[k] += 1
            if ctr[k] < span[k]:
                break
            ctr[k] = 0
            k -= 1
        if k < 0:
            break
    return found


@njit(cache=_CACHE)
def full_graph_csr(coords, radii, n, m, cs, order, cell_start):
    npts = coords.shape[0]
    deg = np.zeros(npts, np.int64)
    empty = np.empty(0, np.int64)
    for i in range(npts):
        deg[i] = _visit_ball(i, coords, radii, n, m, cs, order, cell_start, empty, 0)
    indptr = np.zeros(npts + 1, np.int64)
    for i in range(npts):
        indptr[i + 1] = indptr[i] + deg[i]
    indices = np.empty(indptr[npts], np.int64)
    for i in range(npts):
        _visit_ball(i, coords, radii, n, m, cs, order, cell_start, indices, indptr[i])
        indices[indptr[i] : indptr[i + 1]] = np.sort(indices[indptr[i] : indptr[i + 1]])
    return indptr, indices


@njit(cache=_CACHE)
def transpose_csr(indptr, indices, npts):
    cnt = np.zeros(npts + 1, np.int64)
    for e in range(indices.shape[0]):
        cnt[indices[e] + 1] += 1
    for i in range(npts):
        cnt[i + 1] += cnt[i]
    t_indices = np.empty(indices.shape[0], np.int64)
    fill = cnt[:-1].copy()
    for i in range(npts):
        for e in range(indptr[i], indptr[i + 1]):
            j = indices[e]
            t_indices[fill[j]] = i
            fill[j] += 1
    return cnt, t_indices


@njit(cache=_CACHE)
def thin_mask_by_target(t_indptr, t_indices, rank, coords, radii, n):
    """Keep-flags for every in-edge x -> y listed in the transposed adjacency.

    The edge survives iff rank[x] > rank[y] and no in-neighbor z of y with
    rank[y] < rank[z] < rank[x] lies in the closed ball of x.
    """
    npts = t_indptr.shape[0] - 1
    keep = np.zeros(t_indices.shape[0], np.bool_)
    for y in range(npts):
        a, b = t_indptr[y], t_indptr[y + 1]
        if a == b:
            continue
        ry = rank[y]
        cand = np.empty(b - a, np.int64)
        pos = np.empty(b - a, np.int64)
        k = 0
        for e in range(a, b):
            if rank[t_indices[e]] > ry:
                cand[k] = t_indices[e]
                pos[k] = e
                k += 1
        if k == 0:
            continue
        keys = np.empty(k, np.int64)
        for q in range(k):
            keys[q] = rank[cand[q]]
        srt = np.argsort(keys)
        for p in range(k):
            x = cand[srt[p]]
            rx = radii[x]
            blocked = False
            for q in range(p):
                z = cand[srt[q]]
                if _dist(coords, x, z, n) <= rx:
                    blocked = True
                    break
            if not blocked:
                keep[pos[srt[p]]] = True
    return keep


@njit(cache=_CACHE)
def bfs_pair(indptr, indices, src, dst, limit, parent, dist):
    """Hop distance from src to dst with early exit; -1 if unreachable within ``limit``.

    ``parent`` and ``dist`` are scratch arrays filled with -1 and restored on exit.
    The second return value is the reconstructed path (empty if unreachable).
    """
    if src == dst:
        return 0, np.array([src], np.int64)
    npts = indptr.shape[0] - 1
    queue = np.empty(npts, np.int64)
    head = 0
    tail = 0
    queue[tail] = src
    tail += 1
    dist[src] = 0
    found = -1
    while head < tail and found < 0:
        v = queue[head]
        head += 1
        if dist[v] >= limit:
            break
        for e in range(indptr[v], indptr[v + 1]):
            w = indices[e]
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                parent[w] = v
                queue[tail] = w
                tail += 1
                if w == dst:
                    found = dist[w]
                    break
    if found >= 0:
        path = np.empty(found + 1, np.int64)
        v = dst
        for k in range(found, -1, -1):
            path[k] = v
            v = parent[v]
    else:
        path = np.empty(0, np.int64)
    for q in range(tail):
        dist[queue[q]] = -1
        parent[queue[q]] = -1
    return found, path


@njit(cache=_CACHE)
def bfs_levels(indptr, indices, src):
    """Hop distances from src to all vertices (-1 where unreachable)."""
    npts = indptr.shape[0] - 1
    dist = -np.ones(npts, np.int64)
    queue = np.empty(npts, np.int64)
    head = 0
    tail = 1
    queue[0] = src
    dist[src] = 0
    while head < tail:
        v = queue[head]
        head += 1
        for e in range(indptr[v], indptr[v + 1]):
            w = indices[e]
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue[tail] = w
                tail += 1
    return dist


@njit(cache=_CACHE)
def eccentricities_csr(indptr, indices, sources):
    """Eccentricity of each source; -1 flags a source that does not reach every vertex."""
    npts = indptr.shape[0] - 1
    out = np.empty(sources.shape[0], np.int64)
    dist = -np.ones(npts, np.int64)
    queue = np.empty(npts, np.int64)
    for s_i in range(sources.shape[0]):
        src = sources[s_i]
        head = 0
        tail = 1
        queue[0] = src
        dist[src] = 0
        ecc = 0
        while head < tail:
            v = queue[head]
            head += 1
            dv = dist[v]
            if dv > ecc:
                ecc = dv
            for e in range(indptr[v], indptr[v + 1]):
                w = indices[e]
                if dist[w] < 0:
                    dist[w] = dv + 1
                    queue[tail] = w
                    tail += 1
        out[s_i] = ecc if tail == npts else -1
        for q in range(tail):
            dist[queue[q]] = -1
    return out


@njit(cache=_CACHE)
def _popcount64(x):
    x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
    x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
    x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
    return int((x * np.uint64(0x0101010101010101)) >> np.uint64(56))


@njit(cache=_CACHE)
def eccentricities_bitset(indptr, indices, sources):
    """Same contract as ``eccentricities_csr`` using bitset frontiers; suited to dense graphs."""
    npts = indptr.shape[0] - 1
    words = (npts + 63) // 64
    adj = np.zeros((npts, words), np.uint64)
    for v in range(npts):
        for e in range(indptr[v], indptr[v + 1]):
            w = indices[e]
            adj[v, w >> 6] |= np.uint64(1) << np.uint64(w & 63)
    out = np.empty(sources.shape[0], np.int64)
    visited = np.zeros(words, np.uint64)
    nxt = np.zeros(words, np.uint64)
    frontier = np.empty(npts, np.int64)
    for s_i in range(sources.shape[0]):
        src = sources[s_i]
        visited[:] = 0
        visited[src >> 6] |= np.uint64(1) << np.uint64(src & 63)
        nvis = 1
        frontier[0] = src
        fsize = 1
        ecc = 0
        while fsize > 0:
            nxt[:] = 0
            for q in range(fsize):
                v = frontier[q]
                for k in range(words):
                    nxt[k] |= adj[v, k]
            fsize = 0
            for k in range(words):
                bits = nxt[k] & ~visited[k]
                if bits:
                    visited[k] |= bits
                    nvis += _popcount64(bits)
                    while bits:
                        low = bits & (~bits + np.uint64(1))
                        frontier[fsize] = k * 64 + _popcount64(low - np.uint64(1))
                        fsize += 1
                        bits ^= low
            if fsize > 0:
                ecc += 1
        out[s_i] = ecc if nvis == npts else -1
    return out


@njit(cache=_CACHE)
def longest_chain_dp(indptr, indices, rank):
    """Longest descending chain ending anywhere, starting at each vertex.

    ``length[x]`` counts points in the longest chain starting at x along
    out-edges to strictly lower rank; ``nxt[x]`` is the next chain element.
    """
    npts = indptr.shape[0] - 1
    order = np.argsort(rank)
    length = np.ones(npts, np.int64)
    nxt = -np.ones(npts, np.int64)
    for q in range(npts):
        x = order[q]
        rx = rank[x]
        best = 0
        arg = -1
        for e in range(indptr[x], indptr[x + 1]):
            y = indices[e]
            if rank[y] < rx and length[y] > best:
                best = length[y]
                arg = y
        length[x] = best + 1
        nxt[x] = arg
    return length, nxt
