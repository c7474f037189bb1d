"""Compiled best-first regression tree growth.

Trees are stored as flat node arrays. Node 0 is the root; a node with
``left == -1`` is a leaf. Rows are routed left when ``x < threshold``.
"""

import numba
import numpy as np

LEAF = -1


@numba.njit(cache=True, nogil=True)
def _choose_features(p, mtry):
    feats = np.arange(p)
    if mtry >= p:
        return feats
    for i in range(mtry):
        j = i + np.random.randint(p - i)
        tmp = feats[i]
        feats[i] = feats[j]
        feats[j] = tmp
    return np.sort(feats[:mtry])


@numba.njit(cache=True, nogil=True)
def _node_split(XT, order, node_of, node, y, w, samples, start, end, feats,
                min_leaf, k_best, tol):
    """Best (feature, threshold, gain) for samples[start:end].

    Gain is the weighted reduction in the sum of squared errors. Features
    are scanned in ascending index order and thresholds in ascending order,
    and only a strictly larger gain replaces the incumbent, so ties resolve
    to the lowest feature index and then the lowest threshold.
    """
    n = end - start
    W = 0.0
    S = 0.0
    for i in range(start, end):
        r = samples[i]
        W += w[r]
        S += w[r] * y[r]
    mean = S / W
    best_f = -1
    best_thr = 0.0
    best_gain = tol
    xs = np.empty(n)
    rs = np.empty(n)
    ws = np.empty(n)
    n_cand = 0
    cap = n * feats.shape[0] if k_best > 1 else 1
    cand_gain = np.empty(cap)
    cand_f = np.empty(cap, dtype=np.int64)
    cand_thr = np.empty(cap)
    n_total = order.shape[1]
    scan = n * np.log2(n + 1.0) > n_total
    for fi in range(feats.shape[0]):
        f = feats[fi]
        xf = XT[f]
        if scan:
            # large node: walk the presorted column and keep this node's rows
            k = 0
            for i in range(n_total):
                r = order[f, i]
                if node_of[r] == node:
                    xs[k] = xf[r]
                    rs[k] = y[r] - mean
                    ws[k] = w[r]
                    k += 1
        else:
            for i in range(n):
                xs[i] = xf[samples[start + i]]
            perm = np.argsort(xs, kind="mergesort")
            tmp = xs.copy()
            for i in range(n):
                r = samples[start + perm[i]]
                xs[i] = tmp[perm[i]]
                rs[i] = y[r] - mean
                ws[i] = w[r]
        wl = 0.0
        sl = 0.0
        for j in range(n - 1):
            wl += ws[j]
            sl += ws[j] * rs[j]
            x0 = xs[j]
            x1 = xs[j + 1]
            if x1 <= x0:
                continue
            wr = W - wl
            if wl < min_leaf or wr < min_leaf:
                continue
            # centred sums: right sum is -sl
            gain = sl * sl * W / (wl * wr)
            thr = 0.5 * (x0 + x1)
            if thr <= x0:
                thr = x1
            if k_best > 1:
                if gain > tol:
                    cand_gain[n_cand] = gain
                    cand_f[n_cand] = f
                    cand_thr[n_cand] = thr
                    n_cand += 1
            elif gain > best_gain:
                best_gain = gain
                best_f = f
                best_thr = thr
    if k_best > 1 and n_cand > 0:
        rank = np.argsort(-cand_gain[:n_cand], kind="mergesort")
        k = min(k_best, n_cand)
        pick = rank[np.random.randint(k)]
        return cand_f[pick], cand_thr[pick], cand_gain[pick]
    if best_f < 0:
        return -1, 0.0, 0.0
    return best_f, best_thr, best_gain


@numba.njit(cache=True, nogil=True)
def grow_tree(XT, order, y, w, rows, mtry, min_leaf, max_leaves, k_best, seed):
    """Grow one tree on the rows with positive weight.

    Parameters
    ----------
    XT : (p, n) float64, features by rows
    order : (p, n) int64, per-feature argsort of XT over all rows
    y, w : (n,) float64
    rows : int64 indices of the rows to use
    mtry : candidate features drawn per node
    min_leaf : minimum total weight per child
    max_leaves : leaf budget, ``<= 0`` for unlimited
    k_best : pick uniformly among the k best splits when > 1
    seed : seed of the compiled random stream for this tree

    Returns
    -------
    feature, threshold, left, right, value, weight, gain, n_nodes
    """
    np.random.seed(seed)
    p = XT.shape[0]
    m = rows.shape[0]
    cap = 2 * m + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, LEAF, dtype=np.int64)
    right = np.full(cap, LEAF, dtype=np.int64)
    value = np.zeros(cap)
    weight = np.zeros(cap)
    gain = np.zeros(cap)
    start = np.zeros(cap, dtype=np.int64)
    end = np.zeros(cap, dtype=np.int64)
    cand_f = np.full(cap, -1, dtype=np.int64)
    cand_thr = np.zeros(cap)
    cand_gain = np.zeros(cap)

    samples = rows.copy()
    buf = np.empty(m, dtype=np.int64)
    node_of = np.full(XT.shape[1], -1, dtype=np.int64)
    for i in range(m):
        node_of[rows[i]] = 0

    scale = 0.0
    for i in range(m):
        r = rows[i]
        scale += w[r] * y[r] * y[r]
    tol = 1e-13 * scale

    n_nodes = 1
    start[0] = 0
    end[0] = m
    pending = np.zeros(cap, dtype=np.int64)
    n_pending = 0

    # evaluate node 0, then repeatedly split the pending node with largest gain
    node = 0
    n_leaves = 1
    while True:
        W = 0.0
        S = 0.0
        for i in range(start[node], end[node]):
            r = samples[i]
            W += w[r]
            S += w[r] * y[r]
        weight[node] = W
        value[node] = S / W
        if W >= 2 * min_leaf and end[node] - start[node] >= 2:
            feats = _choose_features(p, mtry)
            f, thr, g = _node_split(XT, order, node_of, node, y, w, samples,
                                    start[node], end[node], feats, min_leaf, k_best, tol)
            if f >= 0:
                cand_f[node] = f
                cand_thr[node] = thr
                cand_gain[node] = g
                pending[n_pending] = node
                n_pending += 1

        if node + 1 < n_nodes:
            node += 1
            continue
        if n_pending == 0 or (max_leaves > 0 and n_leaves >= max_leaves):
            break
        best = 0
        for i in range(1, n_pending):
            a = pending[i]
            b = pending[best]
            if cand_gain[a] > cand_gain[b] or (cand_gain[a] == cand_gain[b] and a < b):
                best = i
        parent = pending[best]
        pending[best] = pending[n_pending - 1]
        n_pending -= 1

        f = cand_f[parent]
        thr = cand_thr[parent]
        s0 = start[parent]
        s1 = end[parent]
        nl = 0
        nr = 0
        for i in range(s0, s1):
            r = samples[i]
            if XT[f, r] < thr:
                samples[s0 + nl] = r
                node_of[r] = n_nodes
                nl += 1
            else:
                buf[nr] = r
                node_of[r] = n_nodes + 1
                nr += 1
        for i in range(nr):
            samples[s0 + nl + i] = buf[i]
        feature[parent] = f
        threshold[parent] = thr
        gain[parent] = cand_gain[parent]
        left[parent] = n_nodes
        right[parent] = n_nodes + 1
        start[n_nodes] = s0
        end[n_nodes] = s0 + nl
        start[n_nodes + 1] = s0 + nl
        end[n_nodes + 1] = s1
        node = n_nodes
        n_nodes += 2
        n_leaves += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(), left[:n_nodes].copy(),
            right[:n_nodes].copy(), value[:n_nodes].copy(), weight[:n_nodes].copy(),
            gain[:n_nodes].copy(), n_nodes)


@numba.njit(cache=True, nogil=True)
def apply_tree(X, feature, threshold, left, right):
    """Leaf index reached by every row of X."""
    n = X.shape[0]
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        node = 0
        while left[node] != LEAF:
            if X[i, feature[node]] < threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
