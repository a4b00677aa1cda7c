"""Incremental nearest-neighbour index over a growing point configuration.

Three backends share one state layout so that the simulation kernels can
drive any of them:

* ``sorted``  -- 1D skip list ordered by coordinate; neighbours are the
  predecessor and successor in that order.
* ``grid``    -- adaptive dyadic grid in any dimension.  A cell whose
  occupancy exceeds :data:`BUCKET` is split into ``2**dim`` half-size cells.
  Every cell carries the maximum cached nearest distance of its points, which
  gives the maximal spacing at the root and prunes reverse-neighbour updates.
* ``brute``   -- O(n) per insertion reference.

Distances are computed by one routine (:func:`_dist`) in every backend, so
all backends agree bit for bit.  Cached nearest distances only ever decrease.
"""

from __future__ import annotations

from collections import namedtuple

import numpy as np
from numba import njit

SORTED, GRID, BRUTE = 0, 1, 2
BACKENDS = {"sorted": SORTED, "grid": GRID, "brute": BRUTE}

LMAX = 24
BUCKET = 8
# Root growth doubles the cell size, so it cannot happen more often than the
# binary64 exponent range allows; keep that many spare nodes plus one split.
_GROWTH_BOUND = 2100

# meta slots
M_KIND, M_DIM, M_N, M_NODES, M_ROOT, M_HEAP, M_DEPTH, M_GROWS = range(8)

IndexState = namedtuple(
    "IndexState",
    [
        "meta", "pts", "nn",
        # skip list
        "lvl", "off", "nxt", "prv", "heap_v", "heap_i",
        # grid
        "leaf_of", "pnext", "node_lo", "node_size", "child", "node_par",
        "head", "cnt", "is_leaf", "maxnn", "depth",
    ],
)


class IndexError_(ValueError):
    pass


class SingletonIndexError(IndexError_):
    """Raised when a nearest distance is requested with fewer than 2 points."""


# --------------------------------------------------------------------------
# shared helpers


@njit(cache=True, inline="always")
def _dist(pts, i, p):
    d = pts.shape[1]
    if d == 1:
        return abs(pts[i, 0] - p[0])
    s = 0.0
    for k in range(d):
        t = pts[i, k] - p[k]
        s += t * t
    return np.sqrt(s)


@njit(cache=True)
def _splitmix_level(node):
    z = np.uint64(node) + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    z = z ^ (z >> np.uint64(31))
    lv = 1
    while lv < LMAX and (z & np.uint64(3)) == np.uint64(0):
        lv += 1
        z = z >> np.uint64(2)
    return lv


@njit(cache=True)
def _fill_levels(lvl, off, start):
    for node in range(start, lvl.shape[0]):
        if node == 0:
            lvl[0] = LMAX
            off[0] = 0
        else:
            lvl[node] = _splitmix_level(node)
            off[node] = off[node - 1] + lvl[node - 1]


# --------------------------------------------------------------------------
# max-heap with lazy invalidation (sorted and brute backends)


@njit(cache=True)
def _heap_push(s, v, i):
    h = s.meta[M_HEAP]
    hv = s.heap_v
    hi = s.heap_i
    hv[h] = v
    hi[h] = i
    s.meta[M_HEAP] = h + 1
    while h > 0:
        up = (h - 1) >> 1
        if hv[up] >= hv[h]:
            break
        hv[up], hv[h] = hv[h], hv[up]
        hi[up], hi[h] = hi[h], hi[up]
        h = up


@njit(cache=True)
def _heap_pop(s):
    hv = s.heap_v
    hi = s.heap_i
    h = s.meta[M_HEAP] - 1
    s.meta[M_HEAP] = h
    hv[0] = hv[h]
    hi[0] = hi[h]
    j = 0
    while True:
        a = 2 * j + 1
        if a >= h:
            break
        b = a + 1
        c = a
        if b < h and hv[b] > hv[a]:
            c = b
        if hv[c] <= hv[j]:
            break
        hv[c], hv[j] = hv[j], hv[c]
        hi[c], hi[j] = hi[j], hi[c]
        j = c


@njit(cache=True)
def _heap_max(s):
    while s.meta[M_HEAP] > 0:
        i = s.heap_i[0]
        if s.heap_v[0] == s.nn[i]:
            return s.heap_v[0]
        _heap_pop(s)
    return np.inf


@njit(cache=True)
def _set_nn(s, i, v):
    # nn only decreases
    if v < s.nn[i]:
        s.nn[i] = v
        _heap_push(s, v, i)


# --------------------------------------------------------------------------
# sorted-1d: skip list.  Particle i is node i + 1, node 0 is the head.


@njit(cache=True, inline="always")
def _sk_x(s, node):
    return s.pts[node - 1, 0]


@njit(cache=True)
def _sk_preds_search(s, v, preds):
    node = 0
    for l in range(LMAX - 1, -1, -1):
        while True:
            nx = s.nxt[s.off[node] + l]
            if nx >= 1 and _sk_x(s, nx) <= v:
                node = nx
            else:
                break
        preds[l] = node


@njit(cache=True)
def _sk_preds_hint(s, v, hint, top, preds):
    node = hint
    if node != 0 and _sk_x(s, node) > v:
        while node != 0 and _sk_x(s, node) > v:
            node = s.prv[s.off[node]]
    else:
        # stop before equal values so repeated atoms insert in O(1)
        while True:
            nx = s.nxt[s.off[node]]
            if nx >= 1 and _sk_x(s, nx) < v:
                node = nx
            else:
                break
    preds[0] = node
    for l in range(1, top):
        node = preds[l - 1]
        while node != 0 and s.lvl[node] <= l:
            node = s.prv[s.off[node] + l - 1]
        preds[l] = node


@njit(cache=True)
def _sk_insert(s, p, hint):
    i = s.meta[M_N]
    new = i + 1
    v = p[0]
    s.pts[i, 0] = v
    s.nn[i] = np.inf
    top = s.lvl[new]
    preds = np.empty(LMAX, np.int64)
    if hint >= 0 and i > 0:
        _sk_preds_hint(s, v, hint + 1, top, preds)
    else:
        _sk_preds_search(s, v, preds)
    o = s.off[new]
    for l in range(top):
        pr = preds[l]
        nx = s.nxt[s.off[pr] + l]
        s.nxt[o + l] = nx
        s.prv[o + l] = pr
        s.nxt[s.off[pr] + l] = new
        if nx >= 1:
            s.prv[s.off[nx] + l] = new
    s.meta[M_N] = i + 1
    left = preds[0]
    right = s.nxt[o]
    best = np.inf
    if left != 0:
        dl = v - _sk_x(s, left)
        best = dl
        _set_nn(s, left - 1, dl)
    if right >= 1:
        dr = _sk_x(s, right) - v
        if dr < best:
            best = dr
        _set_nn(s, right - 1, dr)
    _set_nn(s, i, best)
    return i


@njit(cache=True)
def _sk_neighbors(s, i):
    o = s.off[i + 1]
    left = s.prv[o] - 1  # head -> -1
    right = s.nxt[o]
    right = right - 1 if right >= 1 else -1
    return left, right


@njit(cache=True)
def _sk_order(s):
    n = s.meta[M_N]
    out = np.empty(n, np.int64)
    node = s.nxt[0]
    k = 0
    while node >= 1:
        out[k] = node - 1
        k += 1
        node = s.nxt[s.off[node]]
    return out


@njit(cache=True)
def _sk_count_within(s, p, r):
    preds = np.empty(LMAX, np.int64)
    lo = p[0] - r
    hi = p[0] + r
    # last node with x < lo, then walk right
    node = 0
    for l in range(LMAX - 1, -1, -1):
        while True:
            nx = s.nxt[s.off[node] + l]
            if nx >= 1 and _sk_x(s, nx) < lo:
                node = nx
            else:
                break
        preds[l] = node
    c = 0
    node = s.nxt[s.off[preds[0]]]
    while node >= 1 and _sk_x(s, node) <= hi:
        if abs(_sk_x(s, node) - p[0]) <= r:
            c += 1
        node = s.nxt[s.off[node]]
    return c


# --------------------------------------------------------------------------
# brute force


@njit(cache=True)
def _bf_insert(s, p):
    i = s.meta[M_N]
    for k in range(p.shape[0]):
        s.pts[i, k] = p[k]
    s.nn[i] = np.inf
    best = np.inf
    for j in range(i):
        dj = _dist(s.pts, j, p)
        if dj < s.nn[j]:
            s.nn[j] = dj
        if dj < best:
            best = dj
    s.nn[i] = best
    s.meta[M_N] = i + 1
    return i


@njit(cache=True)
def _bf_count_within(s, p, r):
    c = 0
    for j in range(s.meta[M_N]):
        if _dist(s.pts, j, p) <= r:
            c += 1
    return c


# --------------------------------------------------------------------------
# adaptive dyadic grid


@njit(cache=True)
def _g_new_node(s, lo, size, par, depth):
    k = s.meta[M_NODES]
    s.meta[M_NODES] = k + 1
    for j in range(lo.shape[0]):
        s.node_lo[k, j] = lo[j]
    s.node_size[k] = size
    for c in range(s.child.shape[1]):
        s.child[k, c] = -1
    s.node_par[k] = par
    s.head[k] = -1
    s.cnt[k] = 0
    s.is_leaf[k] = True
    s.maxnn[k] = -1.0
    s.depth[k] = depth
    if depth > s.meta[M_DEPTH]:
        s.meta[M_DEPTH] = depth
    return k


@njit(cache=True)
def _g_mindist(s, node, p):
    d = p.shape[0]
    size = s.node_size[node]
    acc = 0.0
    for k in range(d):
        lo = s.node_lo[node, k]
        # slack absorbs rounding in derived cell bounds
        eps = 1e-10 * size + 4e-16 * abs(lo)
        g = lo - p[k]
        g2 = p[k] - (lo + size)
        if g2 > g:
            g = g2
        g -= eps
        if g > 0.0:
            acc += g * g
    return np.sqrt(acc)


@njit(cache=True)
def _g_child_index(s, node, p):
    half = 0.5 * s.node_size[node]
    c = 0
    for k in range(p.shape[0]):
        if p[k] >= s.node_lo[node, k] + half:
            c |= 1 << k
    return c


@njit(cache=True)
def _g_contains(s, node, p):
    size = s.node_size[node]
    for k in range(p.shape[0]):
        lo = s.node_lo[node, k]
        if p[k] < lo or p[k] >= lo + size:
            return False
    return True


@njit(cache=True)
def _g_grow_root(s, p):
    d = p.shape[0]
    while not _g_contains(s, s.meta[M_ROOT], p):
        old = s.meta[M_ROOT]
        size = s.node_size[old]
        lo = np.empty(d)
        c = 0
        for k in range(d):
            if p[k] < s.node_lo[old, k]:
                lo[k] = s.node_lo[old, k] - size
                c |= 1 << k
            else:
                lo[k] = s.node_lo[old, k]
        root = _g_new_node(s, lo, 2.0 * size, -1, 0)
        s.is_leaf[root] = False
        s.child[root, c] = old
        s.node_par[old] = root
        s.maxnn[root] = s.maxnn[old]
        s.cnt[root] = s.cnt[old]
        s.meta[M_ROOT] = root
        # stored depths are relative to the first root
        s.meta[M_GROWS] += 1


@njit(cache=True)
def _g_leaf_max(s, leaf):
    m = -1.0
    q = s.head[leaf]
    while q >= 0:
        if s.nn[q] > m:
            m = s.nn[q]
        q = s.pnext[q]
    return m


@njit(cache=True)
def _g_refresh_up(s, node):
    # recompute aggregates from node to the root, stopping once unchanged
    while node >= 0:
        if s.is_leaf[node]:
            m = _g_leaf_max(s, node)
        else:
            m = -1.0
            for c in range(s.child.shape[1]):
                ch = s.child[node, c]
                if ch >= 0 and s.maxnn[ch] > m:
                    m = s.maxnn[ch]
        if m == s.maxnn[node]:
            return
        s.maxnn[node] = m
        node = s.node_par[node]


@njit(cache=True)
def _g_stack(s):
    return np.empty((s.meta[M_DEPTH] + s.meta[M_GROWS] + 4) * s.child.shape[1] + 8, np.int64)


@njit(cache=True)
def _g_nearest(s, p, exclude):
    best = np.inf
    stack = _g_stack(s)
    sp = 0
    stack[sp] = s.meta[M_ROOT]
    sp += 1
    nch = s.child.shape[1]
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if _g_mindist(s, node, p) > best:
            continue
        if s.is_leaf[node]:
            q = s.head[node]
            while q >= 0:
                if q != exclude:
                    dq = _dist(s.pts, q, p)
                    if dq < best:
                        best = dq
                q = s.pnext[q]
        else:
            near = _g_child_index(s, node, p)
            for c in range(nch):
                ch = s.child[node, c]
                if ch >= 0 and c != near and s.cnt[ch] > 0:
                    stack[sp] = ch
                    sp += 1
            ch = s.child[node, near]
            if ch >= 0 and s.cnt[ch] > 0:
                stack[sp] = ch
                sp += 1
    return best


@njit(cache=True)
def _g_reverse_update(s, p):
    """Lower cached distances of points that have ``p`` as a new nearest."""
    stack = _g_stack(s)
    dirty = np.empty(64, np.int64)
    nd = 0
    sp = 0
    stack[sp] = s.meta[M_ROOT]
    sp += 1
    nch = s.child.shape[1]
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if s.cnt[node] == 0 or _g_mindist(s, node, p) > s.maxnn[node]:
            continue
        if s.is_leaf[node]:
            changed = False
            q = s.head[node]
            while q >= 0:
                dq = _dist(s.pts, q, p)
                if dq < s.nn[q]:
                    s.nn[q] = dq
                    changed = True
                q = s.pnext[q]
            if changed:
                if nd == dirty.shape[0]:
                    bigger = np.empty(2 * nd, np.int64)
                    bigger[:nd] = dirty
                    dirty = bigger
                dirty[nd] = node
                nd += 1
        else:
            for c in range(nch):
                ch = s.child[node, c]
                if ch >= 0:
                    stack[sp] = ch
                    sp += 1
    for k in range(nd):
        _g_refresh_up(s, dirty[k])


@njit(cache=True)
def _g_split(s, leaf):
    d = s.pts.shape[1]
    size = s.node_size[leaf]
    half = 0.5 * size
    # coincident points cannot be separated; also stop at resolution limit
    q0 = s.head[leaf]
    same = True
    q = s.pnext[q0]
    while q >= 0:
        for k in range(d):
            if s.pts[q, k] != s.pts[q0, k]:
                same = False
        q = s.pnext[q]
    if same:
        return
    for k in range(d):
        lo = s.node_lo[leaf, k]
        if lo + half == lo or lo + half == lo + size:
            return
    lo_c = np.empty(d)
    q = s.head[leaf]
    s.head[leaf] = -1
    s.is_leaf[leaf] = False
    while q >= 0:
        nxt = s.pnext[q]
        c = _g_child_index(s, leaf, s.pts[q])
        ch = s.child[leaf, c]
        if ch < 0:
            for k in range(d):
                lo_c[k] = s.node_lo[leaf, k] + (half if (c >> k) & 1 else 0.0)
            ch = _g_new_node(s, lo_c, half, leaf, s.depth[leaf] + 1)
            s.child[leaf, c] = ch
        s.pnext[q] = s.head[ch]
        s.head[ch] = q
        s.cnt[ch] += 1
        s.leaf_of[q] = ch
        if s.nn[q] > s.maxnn[ch]:
            s.maxnn[ch] = s.nn[q]
        q = nxt


@njit(cache=True)
def _g_insert(s, p):
    d = p.shape[0]
    i = s.meta[M_N]
    for k in range(d):
        s.pts[i, k] = p[k]
    if i == 0:
        lo = np.empty(d)
        for k in range(d):
            lo[k] = p[k] - 0.5
        root = _g_new_node(s, lo, 1.0, -1, 0)
        s.meta[M_ROOT] = root
    else:
        _g_grow_root(s, p)
    best = _g_nearest(s, p, -1)
    _g_reverse_update(s, p)
    s.nn[i] = best
    node = s.meta[M_ROOT]
    lo_c = np.empty(d)
    while True:
        s.cnt[node] += 1
        if best > s.maxnn[node]:
            s.maxnn[node] = best
        if s.is_leaf[node]:
            break
        c = _g_child_index(s, node, p)
        ch = s.child[node, c]
        if ch < 0:
            half = 0.5 * s.node_size[node]
            for k in range(d):
                lo_c[k] = s.node_lo[node, k] + (half if (c >> k) & 1 else 0.0)
            ch = _g_new_node(s, lo_c, half, node, s.depth[node] + 1)
            s.child[node, c] = ch
        node = ch
    s.pnext[i] = s.head[node]
    s.head[node] = i
    s.leaf_of[i] = node
    s.meta[M_N] = i + 1
    if s.cnt[node] > BUCKET:
        _g_split(s, node)
    return i


@njit(cache=True)
def _g_count_within(s, p, r):
    stack = _g_stack(s)
    sp = 0
    stack[sp] = s.meta[M_ROOT]
    sp += 1
    c = 0
    nch = s.child.shape[1]
    while sp > 0:
        sp -= 1
        node = stack[sp]
        if s.cnt[node] == 0 or _g_mindist(s, node, p) > r:
            continue
        if s.is_leaf[node]:
            q = s.head[node]
            while q >= 0:
                if _dist(s.pts, q, p) <= r:
                    c += 1
                q = s.pnext[q]
        else:
            for k in range(nch):
                ch = s.child[node, k]
                if ch >= 0:
                    stack[sp] = ch
                    sp += 1
    return c


# --------------------------------------------------------------------------
# dispatch used by the simulation kernels


@njit(cache=True)
def idx_insert(s, p, hint):
    """Insert ``p``; ``hint`` is an existing particle near ``p`` or -1."""
    kind = s.meta[M_KIND]
    if kind == SORTED:
        return _sk_insert(s, p, hint)
    if kind == GRID:
        return _g_insert(s, p)
    return _bf_insert(s, p)


@njit(cache=True)
def idx_room(s):
    """True when one more insertion fits without reallocation."""
    n = s.meta[M_N]
    if n >= s.pts.shape[0]:
        return False
    kind = s.meta[M_KIND]
    if kind == SORTED:
        return s.meta[M_HEAP] + 3 <= s.heap_v.shape[0]
    if kind == GRID:
        need = _GROWTH_BOUND + 2 * s.child.shape[1] + 2
        return s.meta[M_NODES] + need <= s.node_size.shape[0]
    return True


@njit(cache=True)
def idx_max_spacing(s):
    if s.meta[M_N] < 2:
        return np.inf
    kind = s.meta[M_KIND]
    if kind == GRID:
        return s.maxnn[s.meta[M_ROOT]]
    if kind == SORTED:
        return _heap_max(s)
    m = 0.0
    for i in range(s.meta[M_N]):
        if s.nn[i] > m:
            m = s.nn[i]
    return m


@njit(cache=True)
def idx_right_gap(s, i):
    """Distance to the next particle to the right (1D), ``inf`` if none."""
    kind = s.meta[M_KIND]
    x = s.pts[i, 0]
    if kind == SORTED:
        nx = s.nxt[s.off[i + 1]]
        if nx >= 1:
            return _sk_x(s, nx) - x
        return np.inf
    best = np.inf
    for j in range(s.meta[M_N]):
        if j != i and s.pts[j, 0] >= x and s.pts[j, 0] - x < best:
            best = s.pts[j, 0] - x
    return best


@njit(cache=True)
def idx_count_within(s, p, r):
    kind = s.meta[M_KIND]
    if kind == SORTED:
        return _sk_count_within(s, p, r)
    if kind == GRID:
        return _g_count_within(s, p, r)
    return _bf_count_within(s, p, r)


@njit(cache=True)
def idx_insert_many(s, pts):
    for k in range(pts.shape[0]):
        if not idx_room(s):
            return k
        idx_insert(s, pts[k], -1)
    return pts.shape[0]


# --------------------------------------------------------------------------
# allocation


def _empty_state(kind: int, dim: int, cap: int, node_cap: int = 0) -> IndexState:
    meta = np.zeros(8, np.int64)
    meta[M_KIND] = kind
    meta[M_DIM] = dim
    z_i = np.zeros(0, np.int64)
    z_f = np.zeros(0)
    pts = np.zeros((cap, dim))
    nn = np.full(cap, np.inf)
    lvl = off = nxt = prv = z_i
    heap_v, heap_i = z_f, z_i
    leaf_of = pnext = node_par = head = cnt = depth = z_i
    node_lo = np.zeros((0, dim))
    node_size = maxnn = z_f
    child = np.zeros((0, 1 << dim), np.int64)
    is_leaf = np.zeros(0, np.bool_)
    if kind == SORTED:
        if dim != 1:
            raise ValueError("sorted backend is one-dimensional")
        lvl = np.zeros(cap + 1, np.int64)
        off = np.zeros(cap + 1, np.int64)
        _fill_levels(lvl, off, 0)
        pool = int(off[-1] + lvl[-1])
        nxt = np.full(pool, -1, np.int64)
        prv = np.full(pool, -1, np.int64)
        heap_v = np.zeros(3 * cap + 8)
        heap_i = np.zeros(3 * cap + 8, np.int64)
    elif kind == GRID:
        node_cap = max(node_cap, _GROWTH_BOUND + 4 * (1 << dim) + cap // 2)
        leaf_of = np.full(cap, -1, np.int64)
        pnext = np.full(cap, -1, np.int64)
        node_lo = np.zeros((node_cap, dim))
        node_size = np.zeros(node_cap)
        child = np.full((node_cap, 1 << dim), -1, np.int64)
        node_par = np.full(node_cap, -1, np.int64)
        head = np.full(node_cap, -1, np.int64)
        cnt = np.zeros(node_cap, np.int64)
        is_leaf = np.ones(node_cap, np.bool_)
        maxnn = np.full(node_cap, -1.0)
        depth = np.zeros(node_cap, np.int64)
    return IndexState(meta, pts, nn, lvl, off, nxt, prv, heap_v, heap_i,
                      leaf_of, pnext, node_lo, node_size, child, node_par,
                      head, cnt, is_leaf, maxnn, depth)


def _grow_rows(a: np.ndarray, rows: int, fill) -> np.ndarray:
    if a.shape[0] >= rows:
        return a
    out = np.full((rows,) + a.shape[1:], fill, dtype=a.dtype)
    out[: a.shape[0]] = a
    return out


def grow_state(s: IndexState, cap: int) -> IndexState:
    """Return a state with room for ``cap`` points (arrays copied)."""
    kind = int(s.meta[M_KIND])
    old_cap = s.pts.shape[0]
    cap = max(cap, old_cap)
    pts = _grow_rows(s.pts, cap, 0.0)
    nn = _grow_rows(s.nn, cap, np.inf)
    fields = s._asdict()
    fields.update(pts=pts, nn=nn)
    if kind == SORTED and cap > old_cap:
        lvl = _grow_rows(s.lvl, cap + 1, 0)
        off = _grow_rows(s.off, cap + 1, 0)
        _fill_levels(lvl, off, old_cap + 1)
        pool = int(off[-1] + lvl[-1])
        fields.update(lvl=lvl, off=off,
                      nxt=_grow_rows(s.nxt, pool, -1),
                      prv=_grow_rows(s.prv, pool, -1),
                      heap_v=_grow_rows(s.heap_v, 3 * cap + 8, 0.0),
                      heap_i=_grow_rows(s.heap_i, 3 * cap + 8, 0))
    if kind == SORTED:
        used = int(s.meta[M_HEAP])
        if used + 3 > fields["heap_v"].shape[0] - 0:
            size = 2 * fields["heap_v"].shape[0]
            fields.update(heap_v=_grow_rows(fields["heap_v"], size, 0.0),
                          heap_i=_grow_rows(fields["heap_i"], size, 0))
    if kind == GRID:
        fields.update(leaf_of=_grow_rows(s.leaf_of, cap, -1),
                      pnext=_grow_rows(s.pnext, cap, -1))
        need = int(s.meta[M_NODES]) + _GROWTH_BOUND + 2 * s.child.shape[1] + 2
        ncap = s.node_size.shape[0]
        if need > ncap:
            ncap = max(2 * ncap, need)
            fields.update(
                node_lo=_grow_rows(s.node_lo, ncap, 0.0),
                node_size=_grow_rows(s.node_size, ncap, 0.0),
                child=_grow_rows(s.child, ncap, -1),
                node_par=_grow_rows(s.node_par, ncap, -1),
                head=_grow_rows(s.head, ncap, -1),
                cnt=_grow_rows(s.cnt, ncap, 0),
                is_leaf=_grow_rows(s.is_leaf, ncap, True),
                maxnn=_grow_rows(s.maxnn, ncap, -1.0),
                depth=_grow_rows(s.depth, ncap, 0),
            )
    return IndexState(**fields)


def copy_state(s: IndexState) -> IndexState:
    return IndexState(*(a.copy() for a in s))


def default_backend(dim: int) -> str:
    return "sorted" if dim == 1 else "grid"


class NeighborIndex:
    """Nearest-neighbour index with particle ids equal to insertion rank.

    >>> idx = NeighborIndex(1)
    >>> [idx.insert(x) for x in (0.0, 1.0, 3.0)]
    [1, 2, 3]
    >>> idx.nearest_excl(3), idx.max_spacing()
    (2.0, 2.0)
    """

    def __init__(self, dim: int, backend: str | None = None, capacity: int = 16):
        if dim < 1:
            raise ValueError("dimension must be >= 1")
        backend = backend or default_backend(dim)
        if backend not in BACKENDS:
            raise ValueError(f"unknown backend {backend!r}")
        self.dim = dim
        self.backend = backend
        self.state = _empty_state(BACKENDS[backend], dim, max(int(capacity), 2))

    def __len__(self) -> int:
        return int(self.state.meta[M_N])

    @property
    def points(self) -> np.ndarray:
        return self.state.pts[: len(self)]

    def reserve(self, extra: int) -> None:
        s = self.state
        cap = s.pts.shape[0]
        if len(self) + extra > cap:
            cap = max(2 * cap, len(self) + extra)
        if cap > s.pts.shape[0] or not idx_room(s):
            self.state = grow_state(s, cap)

    def _coerce(self, point) -> np.ndarray:
        p = np.atleast_1d(np.asarray(point, dtype=float))
        if p.shape != (self.dim,):
            raise ValueError(f"point dimension {p.shape} does not match index dimension {self.dim}")
        if not np.all(np.isfinite(p)):
            raise ValueError("non-finite coordinate")
        return p

    def insert(self, point, hint: int | None = None) -> int:
        p = self._coerce(point)
        self.reserve(1)
        h = -1 if hint is None else int(hint) - 1
        return int(idx_insert(self.state, p, h)) + 1

    def insert_many(self, points) -> list[int]:
        pts = np.asarray(points, dtype=float).reshape(-1, self.dim)
        if not np.all(np.isfinite(pts)):
            raise ValueError("non-finite coordinate")
        start = len(self)
        done = 0
        while done < len(pts):
            self.reserve(len(pts) - done)
            done += int(idx_insert_many(self.state, pts[done:]))
        return list(range(start + 1, start + len(pts) + 1))

    def _check_id(self, pid: int) -> int:
        if not 1 <= pid <= len(self):
            raise KeyError(f"no particle with id {pid}")
        return pid - 1

    def nearest_excl(self, pid: int) -> float:
        i = self._check_id(pid)
        if len(self) < 2:
            raise SingletonIndexError("nearest distance needs at least 2 points")
        return float(self.state.nn[i])

    def nearest_all(self) -> np.ndarray:
        if len(self) < 2:
            raise SingletonIndexError("nearest distance needs at least 2 points")
        return self.state.nn[: len(self)].copy()

    def max_spacing(self) -> float:
        if len(self) < 2:
            raise SingletonIndexError("maximal spacing needs at least 2 points")
        return float(idx_max_spacing(self.state))

    def count_within(self, point, radius: float) -> int:
        return int(idx_count_within(self.state, self._coerce(point), float(radius)))

    def sorted_ids(self) -> np.ndarray:
        """1-based ids in coordinate order (1D only)."""
        if self.dim != 1:
            raise ValueError("ordering is defined for 1D indices only")
        if self.backend == "sorted":
            return _sk_order(self.state) + 1
        return np.argsort(self.points[:, 0], kind="stable") + 1

    def copy(self) -> "NeighborIndex":
        other = object.__new__(NeighborIndex)
        other.dim = self.dim
        other.backend = self.backend
        other.state = copy_state(self.state)
        return other


def brute_nearest(points) -> np.ndarray:
    """Reference nearest-neighbour distances by a full pairwise scan."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    n = len(pts)
    out = np.empty(n)
    for i in range(n):
        if pts.shape[1] == 1:
            dd = np.abs(pts[:, 0] - pts[i, 0])
        else:
            diff = pts - pts[i]
            dd = np.sqrt(np.sum(diff * diff, axis=1))
        dd[i] = np.inf
        out[i] = dd.min()
    return out
