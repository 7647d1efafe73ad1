"""Compiled regression-tree builder shared by all ensemble kinds.

Trees are stored as parallel arrays (sklearn style). Randomness is passed in
as a pre-drawn array of uniforms so a tree depends only on its own substream.
Rows with ``x[f] <= threshold`` go left.
"""

import numpy as np
from numba import njit

LEAF = -1
RANDOM_SPLIT = 0
BEST_SPLIT = 1


@njit(cache=True)
def _better(score, f, thr, best_score, best_f, best_thr):
    if score > best_score:
        return True
    if score == best_score:
        if f < best_f:
            return True
        if f == best_f and thr < best_thr:
            return True
    return False


@njit(cache=True)
def _random_split(X, y, idx, start, end, f, lo, hi, u, min_leaf):
    thr = lo + u * (hi - lo)
    if thr <= lo or thr >= hi:
        thr = 0.5 * (lo + hi)
        if thr >= hi:
            thr = lo
    sl = 0.0
    nl = 0
    sr = 0.0
    for i in range(start, end):
        r = idx[i]
        if X[r, f] <= thr:
            sl += y[r]
            nl += 1
        else:
            sr += y[r]
    nr = end - start - nl
    if nl < min_leaf or nr < min_leaf:
        return -np.inf, thr
    return sl * sl / nl + sr * sr / nr, thr


@njit(cache=True)
def _best_split(X, y, idx, start, end, f, min_leaf):
    n = end - start
    vals = np.empty(n)
    ys = np.empty(n)
    for i in range(n):
        vals[i] = X[idx[start + i], f]
    order = np.argsort(vals, kind="mergesort")
    vs = vals[order]
    for i in range(n):
        ys[i] = y[idx[start + order[i]]]
    total = 0.0
    for i in range(n):
        total += ys[i]
    best = -np.inf
    best_thr = 0.0
    sl = 0.0
    for i in range(n - 1):
        sl += ys[i]
        nl = i + 1
        nr = n - nl
        if vs[i] == vs[i + 1] or nl < min_leaf or nr < min_leaf:
            continue
        sr = total - sl
        score = sl * sl / nl + sr * sr / nr
        if score > best:
            best = score
            thr = 0.5 * (vs[i] + vs[i + 1])
            if thr >= vs[i + 1]:
                thr = vs[i]
            best_thr = thr
    return best, best_thr


@njit(cache=True)
def build_tree(X, y, rows, mode, max_features, min_leaf, max_depth, rand):
    """Grow one tree over ``rows`` (indices into X, repeats allowed).

    Returns ``(feature, threshold, left, right, value, n_samples)`` trimmed to
    the node count. ``max_depth < 0`` means unlimited.
    """
    n = rows.shape[0]
    d = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, LEAF, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)
    count = np.zeros(cap, dtype=np.int64)

    idx = rows.copy()
    perm = np.arange(d)
    stack = np.empty((cap, 4), dtype=np.int64)  # node, start, end, depth
    stack[0, 0] = 0
    stack[0, 1] = 0
    stack[0, 2] = n
    stack[0, 3] = 0
    top = 1
    n_nodes = 1
    ptr = 0
    n_rand = rand.shape[0]

    while top > 0:
        top -= 1
        node = stack[top, 0]
        start = stack[top, 1]
        end = stack[top, 2]
        depth = stack[top, 3]
        size = end - start

        s = 0.0
        y_lo = np.inf
        y_hi = -np.inf
        for i in range(start, end):
            v = y[idx[i]]
            s += v
            if v < y_lo:
                y_lo = v
            if v > y_hi:
                y_hi = v
        value[node] = s / size
        count[node] = size
        if size < 2 * min_leaf or (max_depth >= 0 and depth >= max_depth) or y_lo == y_hi:
            continue

        best_score = -np.inf
        best_f = d
        best_thr = np.inf
        visited = 0
        for i in range(d):
            perm[i] = i
        for i in range(d):
            j = i + int(rand[ptr % n_rand] * (d - i))
            ptr += 1
            if j >= d:
                j = d - 1
            tmp = perm[i]
            perm[i] = perm[j]
            perm[j] = tmp
            f = perm[i]
            lo = np.inf
            hi = -np.inf
            for k in range(start, end):
                v = X[idx[k], f]
                if v < lo:
                    lo = v
                if v > hi:
                    hi = v
            if lo == hi:
                continue
            visited += 1
            if mode == RANDOM_SPLIT:
                score, thr = _random_split(X, y, idx, start, end, f, lo, hi, rand[ptr % n_rand], min_leaf)
                ptr += 1
            else:
                score, thr = _best_split(X, y, idx, start, end, f, min_leaf)
            if score > -np.inf and _better(score, f, thr, best_score, best_f, best_thr):
                best_score = score
                best_f = f
                best_thr = thr
            if visited >= max_features:
                break

        if best_f == d:
            continue

        # partition idx[start:end] so that left rows come first
        i = start
        j = end - 1
        while i <= j:
            if X[idx[i], best_f] <= best_thr:
                i += 1
            else:
                tmp = idx[i]
                idx[i] = idx[j]
                idx[j] = tmp
                j -= 1
        mid = i

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = n_nodes
        right[node] = n_nodes + 1
        n_nodes += 2
        stack[top, 0] = right[node]
        stack[top, 1] = mid
        stack[top, 2] = end
        stack[top, 3] = depth + 1
        top += 1
        stack[top, 0] = left[node]
        stack[top, 1] = start
        stack[top, 2] = mid
        stack[top, 3] = depth + 1
        top += 1

    return (
        feature[:n_nodes].copy(),
        threshold[:n_nodes].copy(),
        left[:n_nodes].copy(),
        right[:n_nodes].copy(),
        value[:n_nodes].copy(),
        count[:n_nodes].copy(),
    )


@njit(cache=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by every row of X."""
    out = np.empty(X.shape[0], dtype=np.int64)
    for r in range(X.shape[0]):
        node = 0
        while feature[node] != LEAF:
            if X[r, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out
