"""Least-squares regression trees on flat node arrays (numba kernels).

A tree is five parallel arrays in preorder: ``feature`` (-1 for a leaf),
``threshold``, ``left``, ``right`` and ``gain`` (squared-error reduction of
the split, 0 for leaves). Rows with ``x[feature] <= threshold`` go left.
Child pointers are local to the tree.
"""
import numpy as np
from numba import njit


@njit(cache=True)
def _best_split(X, y, work, start, end, features, min_leaf):
    n = end - start
    best_gain = 0.0
    best_f = -1
    best_thr = 0.0
    total = 0.0
    total_sq = 0.0
    for i in range(start, end):
        v = y[work[i]]
        total += v
        total_sq += v * v
    parent_term = total * total / n
    eps = 1e-12 * (1.0 + total_sq)
    xs = np.empty(n)
    ys = np.empty(n)
    for f in features:
        for i in range(n):
            xs[i] = X[work[start + i], f]
        order = np.argsort(xs, kind="mergesort")
        for i in range(n):
            ys[i] = y[work[start + order[i]]]
        left_sum = 0.0
        for i in range(n - 1):
            left_sum += ys[i]
            n_left = i + 1
            if n_left < min_leaf:
                continue
            if n - n_left < min_leaf:
                break
            lo = xs[order[i]]
            hi = xs[order[i + 1]]
            if not lo < hi:
                continue
            right_sum = total - left_sum
            gain = (left_sum * left_sum / n_left
                    + right_sum * right_sum / (n - n_left) - parent_term)
            if gain > eps and gain > best_gain:
                best_gain = gain
                best_f = f
                thr = 0.5 * (lo + hi)
                if not thr < hi:
                    thr = lo
                best_thr = thr
    return best_f, best_thr, best_gain


@njit(cache=True)
def grow_tree(X, y, sample, max_depth, min_leaf, max_features, seed):
    """Greedy least-squares tree on rows ``sample`` (duplicates allowed).

    Returns the node arrays plus ``leaf_of``, the leaf reached by each
    entry of ``sample``. With ``max_features`` below the column count a
    fresh random subset of columns is drawn at every node.
    """
    if seed >= 0:
        np.random.seed(seed)
    n = sample.shape[0]
    p = X.shape[1]
    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    gain = np.zeros(cap)
    leaf_of_work = np.empty(n, dtype=np.int64)
    work = sample.copy()
    positions = np.arange(n)
    all_features = np.arange(p)

    # stack entries: start, end, depth, parent, is_left
    stack = np.empty((cap, 5), dtype=np.int64)
    top = 0
    stack[0, 0] = 0
    stack[0, 1] = n
    stack[0, 2] = 0
    stack[0, 3] = -1
    stack[0, 4] = 0
    top = 1
    n_nodes = 0
    scratch_w = np.empty(n, dtype=np.int64)
    scratch_p = np.empty(n, dtype=np.int64)
    while top > 0:
        top -= 1
        start = stack[top, 0]
        end = stack[top, 1]
        depth = stack[top, 2]
        parent = stack[top, 3]
        is_left = stack[top, 4]
        node = n_nodes
        n_nodes += 1
        if parent >= 0:
            if is_left == 1:
                left[parent] = node
            else:
                right[parent] = node
        f = -1
        thr = 0.0
        g = 0.0
        if depth < max_depth and end - start >= 2 * min_leaf:
            if max_features < p:
                feats = np.random.permutation(p)[:max_features]
            else:
                feats = all_features
            f, thr, g = _best_split(X, y, work, start, end, feats, min_leaf)
        if f < 0:
            for i in range(start, end):
                leaf_of_work[positions[i]] = node
            continue
        feature[node] = f
        threshold[node] = thr
        gain[node] = g
        # stable partition of work[start:end]
        k = 0
        for i in range(start, end):
            if X[work[i], f] <= thr:
                scratch_w[k] = work[i]
                scratch_p[k] = positions[i]
                k += 1
        mid = start + k
        for i in range(start, end):
            if X[work[i], f] > thr:
                scratch_w[k] = work[i]
                scratch_p[k] = positions[i]
                k += 1
        for i in range(end - start):
            work[start + i] = scratch_w[i]
            positions[start + i] = scratch_p[i]
        # right pushed first so the left subtree is numbered next (preorder)
        stack[top, 0] = mid
        stack[top, 1] = end
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 0
        top += 1
        stack[top, 0] = start
        stack[top, 1] = mid
        stack[top, 2] = depth + 1
        stack[top, 3] = node
        stack[top, 4] = 1
        top += 1
    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            gain[:n_nodes].copy(), leaf_of_work)


@njit(cache=True)
def apply_tree(feature, threshold, left, right, X, offset):
    """Leaf index (local to the tree) for every row of X."""
    m = X.shape[0]
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        node = 0
        while feature[offset + node] >= 0:
            if X[i, feature[offset + node]] <= threshold[offset + node]:
                node = left[offset + node]
            else:
                node = right[offset + node]
        out[i] = node
    return out


@njit(cache=True)
def leaf_quantiles(residuals, leaf_of, n_nodes, tau_rank_p):
    """Per-leaf lower-interpolation quantile of ``residuals``; NaN for non-leaves."""
    counts = np.zeros(n_nodes, dtype=np.int64)
    for i in range(leaf_of.shape[0]):
        counts[leaf_of[i]] += 1
    starts = np.zeros(n_nodes + 1, dtype=np.int64)
    for j in range(n_nodes):
        starts[j + 1] = starts[j] + counts[j]
    fill = starts[:-1].copy()
    grouped = np.empty(leaf_of.shape[0])
    for i in range(leaf_of.shape[0]):
        j = leaf_of[i]
        grouped[fill[j]] = residuals[i]
        fill[j] += 1
    out = np.full(n_nodes, np.nan)
    for j in range(n_nodes):
        m = counts[j]
        if m == 0:
            continue
        seg = np.sort(grouped[starts[j]:starts[j + 1]])
        x = tau_rank_p * m
        r = np.floor(x + 0.5)
        if abs(x - r) < 1e-9:
            k = int(r)
        else:
            k = int(np.ceil(x))
        if k < 1:
            k = 1
        if k > m:
            k = m
        out[j] = seg[k - 1]
    return out


@njit(cache=True)
def ensemble_predict(base, shrinkage, feature, threshold, left, right, value,
                     tree_ptr, n_iter, X):
    """base + shrinkage * tree outputs, accumulated tree by tree."""
    m = X.shape[0]
    out = np.full(m, base)
    for t in range(n_iter):
        off = tree_ptr[t]
        for i in range(m):
            node = 0
            while feature[off + node] >= 0:
                if X[i, feature[off + node]] <= threshold[off + node]:
                    node = left[off + node]
                else:
                    node = right[off + node]
            out[i] += shrinkage * value[off + node]
    return out
