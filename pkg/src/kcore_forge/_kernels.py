"""numba kernels shared by the graph, forge and mc modules.

Graphs are held in CSR form: ``indptr``/``indices`` list the out-half-edges of
each vertex and ``rev[e]`` is the position of the reverse half-edge, so the
message ``v -> w`` stored at ``e`` pairs with ``w -> v`` at ``rev[e]``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def build_csr(n, us, vs):
    m = us.shape[0]
    deg = np.zeros(n + 1, np.int64)
    for i in range(m):
        deg[us[i] + 1] += 1
        deg[vs[i] + 1] += 1
    indptr = np.cumsum(deg)
    fill = indptr[:-1].copy()
    indices = np.empty(2 * m, np.int64)
    rev = np.empty(2 * m, np.int64)
    for i in range(m):
        u = us[i]
        v = vs[i]
        a = fill[u]
        fill[u] += 1
        b = fill[v]
        fill[v] += 1
        indices[a] = v
        indices[b] = u
        rev[a] = b
        rev[b] = a
    return indptr, indices, rev


@njit(cache=True)
def peel(indptr, indices, k):
    """Mask of the k-core by repeated removal of vertices of degree < k."""
    n = indptr.shape[0] - 1
    deg = np.empty(n, np.int64)
    alive = np.ones(n, np.bool_)
    queue = np.empty(n, np.int64)
    head = 0
    tail = 0
    for v in range(n):
        deg[v] = indptr[v + 1] - indptr[v]
        if deg[v] < k:
            alive[v] = False
            queue[tail] = v
            tail += 1
    while head < tail:
        v = queue[head]
        head += 1
        for e in range(indptr[v], indptr[v + 1]):
            w = indices[e]
            if alive[w]:
                deg[w] -= 1
                if deg[w] < k:
                    alive[w] = False
                    queue[tail] = w
                    tail += 1
    return alive


@njit(cache=True)
def wp_fixed_point(indptr, indices, rev, k):
    """Warning Propagation fixed point reached from the all-ones start.

    Event driven: a vertex is revisited only when its incoming count drops.
    Since the update is monotone this lands on the same (largest) fixed point
    as the synchronous schedule. Returns (messages, incoming-ones count).
    """
    n = indptr.shape[0] - 1
    msg = np.ones(indices.shape[0], np.int8)
    s = np.empty(n, np.int64)
    stack = np.empty(n, np.int64)
    inq = np.ones(n, np.bool_)
    for v in range(n):
        s[v] = indptr[v + 1] - indptr[v]
        stack[v] = v
    top = n
    while top > 0:
        top -= 1
        v = stack[top]
        inq[v] = False
        if s[v] >= k:
            continue
        for e in range(indptr[v], indptr[v + 1]):
            if msg[e] == 1 and s[v] - msg[rev[e]] < k - 1:
                msg[e] = 0
                w = indices[e]
                s[w] -= 1
                if not inq[w]:
                    inq[w] = True
                    stack[top] = w
                    top += 1
    return msg, s


@njit(cache=True)
def typed_counts(indptr, indices, rev, msg, s, k):
    """(n_0, n_star, n_1, m_00, m_01, m_10, m_11) of a WP fixed point."""
    n = indptr.shape[0] - 1
    out = np.zeros(7, np.int64)
    for v in range(n):
        if s[v] <= k - 2:
            out[0] += 1
        elif s[v] == k - 1:
            out[1] += 1
        else:
            out[2] += 1
        for e in range(indptr[v], indptr[v + 1]):
            out[3 + 2 * msg[rev[e]] + msg[e]] += 1
    return out


@njit(cache=True)
def decode_pairs(idx, us, vs):
    """Pair index -> (u, v), u < v, under idx = v (v - 1) / 2 + u."""
    for i in range(idx.shape[0]):
        t = idx[i]
        v = np.int64((1.0 + np.sqrt(1.0 + 8.0 * t)) / 2.0)
        while v * (v - 1) // 2 > t:
            v -= 1
        while (v + 1) * v // 2 <= t:
            v += 1
        us[i] = t - v * (v - 1) // 2
        vs[i] = v


@njit(cache=True)
def gnm_core_counts(n, idx, k):
    m = idx.shape[0]
    us = np.empty(m, np.int64)
    vs = np.empty(m, np.int64)
    decode_pairs(idx, us, vs)
    indptr, indices, rev = build_csr(n, us, vs)
    msg, s = wp_fixed_point(indptr, indices, rev, k)
    return typed_counts(indptr, indices, rev, msg, s, k)


@njit(cache=True)
def sparse_fisher_yates(total, draws):
    """First ``len(draws)`` entries of a Fisher-Yates shuffle of ``0..total-1``.

    ``draws[i]`` must be uniform on ``[0, total - i)``; position ``i`` swaps
    with ``i + draws[i]``. Positions below m live in a plain array, displaced
    entries above it in an open-addressing table, so memory is O(m) however
    large ``total`` is.
    """
    m = draws.shape[0]
    low = np.arange(m)
    size = 1
    while size < 2 * m + 2:
        size *= 2
    mask = size - 1
    keys = np.full(size, -1, np.int64)
    vals = np.empty(size, np.int64)
    out = np.empty(m, np.int64)
    for i in range(m):
        j = i + draws[i]
        vi = low[i]
        if j < m:
            out[i] = low[j]
            low[j] = vi
            continue
        h = (j * 0x9E3779B97F4A7C15) & mask
        while keys[h] != -1 and keys[h] != j:
            h = (h + 1) & mask
        if keys[h] == j:
            out[i] = vals[h]
        else:
            out[i] = j
            keys[h] = j
        vals[h] = vi
    return out


@njit(cache=True)
def gnm_observables(n, total, draws, k):
    """G(n, m) from Fisher-Yates draws straight to the seven WP counts (int32 CSR)."""
    idx = sparse_fisher_yates(total, draws)
    m = idx.shape[0]
    us = np.empty(m, np.int32)
    vs = np.empty(m, np.int32)
    for i in range(m):
        t = idx[i]
        v = np.int64((1.0 + np.sqrt(1.0 + 8.0 * t)) / 2.0)
        while v * (v - 1) // 2 > t:
            v -= 1
        while (v + 1) * v // 2 <= t:
            v += 1
        us[i] = t - v * (v - 1) // 2
        vs[i] = v
    deg = np.zeros(n + 1, np.int32)
    for i in range(m):
        deg[us[i] + 1] += 1
        deg[vs[i] + 1] += 1
    indptr = np.empty(n + 1, np.int32)
    acc = 0
    for v in range(n + 1):
        acc += deg[v]
        indptr[v] = acc
    fill = indptr[:-1].copy()
    indices = np.empty(2 * m, np.int32)
    rev = np.empty(2 * m, np.int32)
    for i in range(m):
        u = us[i]
        v = vs[i]
        a = fill[u]
        fill[u] += 1
        b = fill[v]
        fill[v] += 1
        indices[a] = v
        indices[b] = u
        rev[a] = b
        rev[b] = a
    msg, s = wp_fixed_point(indptr, indices, rev, k)
    return typed_counts(indptr, indices, rev, msg, s, k)


# ------------------------------------------------------------ tiny graphs
# Graphs on at most 62 vertices held as dense adjacency matrices; edges are
# keyed by the pair index v (v - 1) / 2 + u, u < v.

@njit(cache=True)
def dense_wp(adj, k):
    """Largest WP fixed point on a dense 0/1 adjacency matrix; returns msg[v, w]."""
    n = adj.shape[0]
    msg = adj.copy()
    changed = True
    while changed:
        changed = False
        inc = np.zeros(n, np.int64)
        for v in range(n):
            for u in range(n):
                inc[v] += msg[u, v]
        for v in range(n):
            for w in range(n):
                if msg[v, w] == 1 and inc[v] - msg[w, v] < k - 1:
                    msg[v, w] = 0
                    changed = True
    return msg


@njit(cache=True)
def dense_counts(adj, msg, k):
    """(n_star, n_1, m_10, m_11) from a dense fixed point."""
    n = adj.shape[0]
    ns = 0
    n1 = 0
    m10 = 0
    m11 = 0
    for v in range(n):
        s = 0
        for u in range(n):
            s += msg[u, v]
        if s == k - 1:
            ns += 1
        elif s >= k:
            n1 += 1
        for w in range(n):
            if adj[v, w]:
                if msg[w, v] == 1 and msg[v, w] == 0:
                    m10 += 1
                elif msg[w, v] == 1 and msg[v, w] == 1:
                    m11 += 1
    return ns, n1, m10, m11


@njit(cache=True)
def enumerate_classes(n, m, k):
    """Every m-subset of the C(n, 2) pairs in lexicographic order.

    Returns the edge bitmask of each graph and its (n_star, n_1, m_10, m_11).
    """
    P = n * (n - 1) // 2
    pu = np.empty(P, np.int64)
    pv = np.empty(P, np.int64)
    for v in range(n):
        for u in range(v):
            t = v * (v - 1) // 2 + u
            pu[t] = u
            pv[t] = v
    total = 1
    for i in range(m):
        total = total * (P - i) // (i + 1)
    keys = np.empty(total, np.int64)
    obs = np.empty((total, 4), np.int64)
    c = np.arange(m)
    adj = np.zeros((n, n), np.int8)
    for r in range(total):
        adj[:, :] = 0
        key = np.int64(0)
        for i in range(m):
            t = c[i]
            adj[pu[t], pv[t]] = 1
            adj[pv[t], pu[t]] = 1
            key |= np.int64(1) << t
        msg = dense_wp(adj, k)
        a, b, x, y = dense_counts(adj, msg, k)
        keys[r] = key
        obs[r, 0] = a
        obs[r, 1] = b
        obs[r, 2] = x
        obs[r, 3] = y
        # next combination
        i = m - 1
        while i >= 0 and c[i] == P - m + i:
            i -= 1
        if i < 0:
            break
        c[i] += 1
        for j in range(i + 1, m):
            c[j] = c[j - 1] + 1
    return keys, obs


@njit(cache=True)
def _draw_block(R, c, total, lo, out, pos):
    """Sequential exact draw of c counts in [lo, hi] with weights prod 1/x! and the given sum.

    ``R[j, t]`` is the total weight of j counts summing to t (hi is implied by
    the table: weights beyond it were left at zero when R was built).
    """
    t = total
    for i in range(c):
        j = c - i
        u = np.random.random() * R[j, t]
        acc = 0.0
        x = lo
        hi = t
        while x <= hi:
            if t - x < 0:
                break
            w = R[1, x] * R[j - 1, t - x]
            acc += w
            if acc >= u and w > 0:
                break
            x += 1
        if x > t:
            x = t
        out[pos[i]] = x
        t -= x


@njit(cache=True)
def _shuffle(a):
    for i in range(a.shape[0] - 1, 0, -1):
        j = np.random.randint(0, i + 1)
        tmp = a[i]
        a[i] = a[j]
        a[j] = tmp


@njit(cache=True)
def _fill(h, verts, deg):
    p = 0
    for i in range(verts.shape[0]):
        for _ in range(deg[verts[i]]):
            h[p] = verts[i]
            p += 1


@njit(cache=True)
def tiny_forge(n0, ns, n1, m00, m01, m10, m11, k, R10, R11, samples, seed, max_attempts):
    """Forge conditioned on the totals, repeated until ``samples`` successes.

    Returns (edge keys of the successes, attempts, not-simple count, WP-mismatch count).
    The degree blocks are drawn exactly from their conditional laws, so no
    totals rejection is needed; any step (5) or (7) failure starts over.
    """
    np.random.seed(seed)
    n = n0 + ns + n1
    keys = np.empty(samples, np.int64)
    got = 0
    attempts = 0
    not_simple = 0
    mismatch = 0
    types = np.empty(n, np.int64)
    d00 = np.zeros(n, np.int64)
    d01 = np.zeros(n, np.int64)
    d10 = np.zeros(n, np.int64)
    d11 = np.zeros(n, np.int64)
    h00 = np.empty(m00, np.int64)
    h10 = np.empty(m10, np.int64)
    h11 = np.empty(m11, np.int64)
    h01 = np.empty(m01, np.int64)
    cnt = np.zeros((n, n), np.int64)
    arc = np.zeros((n, n), np.int8)
    adj = np.zeros((n, n), np.int8)
    while got < samples and attempts < max_attempts:
        attempts += 1
        perm = np.random.permutation(n)
        V0 = perm[:n0]
        Vs = perm[n0:n0 + ns]
        V1 = perm[n0 + ns:]
        V01 = perm[n0:]
        d00[:] = 0
        d01[:] = 0
        d10[:] = 0
        d11[:] = 0
        for v in V0:
            types[v] = 0
        for v in Vs:
            types[v] = 1
            d10[v] = k - 1
        for v in V1:
            types[v] = 2
        for _ in range(m00):
            d00[V0[np.random.randint(0, n0)]] += 1
        for _ in range(m01):
            d01[V01[np.random.randint(0, ns + n1)]] += 1
        if n0 > 0:
            _draw_block(R10, n0, m10 - (k - 1) * ns, 0, d10, V0)
        if n1 > 0:
            _draw_block(R11, n1, m11, k, d11, V1)
        _fill(h00, V0, d00)
        _fill(h01, V01, d01)
        _fill(h10, perm[:n0 + ns], d10)
        _fill(h11, V1, d11)
        _shuffle(h00)
        _shuffle(h10)
        _shuffle(h11)
        cnt[:, :] = 0
        arc[:, :] = 0
        simple = True
        for i in range(m00 // 2):
            a = h00[2 * i]
            b = h00[2 * i + 1]
            cnt[a, b] += 1
            if a != b:
                cnt[b, a] += 1
        for i in range(m11 // 2):
            a = h11[2 * i]
            b = h11[2 * i + 1]
            cnt[a, b] += 1
            if a != b:
                cnt[b, a] += 1
        for i in range(m01):
            a = h01[i]
            b = h10[i]
            cnt[a, b] += 1
            if a != b:
                cnt[b, a] += 1
            arc[a, b] = 1
        for a in range(n):
            if cnt[a, a] > 0:
                simple = False
            for b in range(n):
                if cnt[a, b] > 1:
                    simple = False
        if not simple:
            not_simple += 1
            continue
        for a in range(n):
            for b in range(n):
                adj[a, b] = 1 if cnt[a, b] > 0 else 0
        msg = dense_wp(adj, k)
        ok = True
        for v in range(n):
            s = 0
            for w in range(n):
                if adj[v, w]:
                    s += msg[w, v]
                    hat = 1 if (types[v] == 2 or (types[v] == 1 and arc[v, w] == 1)) else 0
                    if msg[v, w] != hat:
                        ok = False
            if (s >= k) != (types[v] == 2):
                ok = False
        if not ok:
            mismatch += 1
            continue
        key = np.int64(0)
        for v in range(n):
            for u in range(v):
                if adj[u, v]:
                    key |= np.int64(1) << (v * (v - 1) // 2 + u)
        keys[got] = key
        got += 1
    return keys[:got], attempts, not_simple, mismatch
