"""Reference split-search and tree-routing kernels in plain numpy.

The compiled twin in ``_fast`` must match these bit for bit, so every
floating-point reduction here has a fixed, documented order: prefix sums are
sequential (cumulative sum), totals come from the last prefix entry, and
ties break toward the lower feature index, then the lower threshold.
"""

from __future__ import annotations

import numpy as np

NO_SPLIT = (-1, 0.0, float("-inf"))


def best_split(X: np.ndarray, y: np.ndarray, min_leaf: int):
    """Best axis-aligned split of (X, y) by the variance-reduction proxy
    sum_left^2/n_left + sum_right^2/n_right. Returns (feature, threshold,
    score), or (-1, 0.0, -inf) when no split leaves min_leaf rows per side.
    """
    n, d = X.shape
    if n < 2 * min_leaf or min_leaf < 1:
        return NO_SPLIT

    best_score = float("-inf")
    best_feature = -1
    best_threshold = 0.0

    counts_l = np.arange(1, n, dtype=np.float64)
    counts_r = np.arange(n - 1, 0, -1, dtype=np.float64)
    size_ok = (counts_l >= min_leaf) & (counts_r >= min_leaf)

    for j in range(d):
        col = X[:, j]
        order = np.argsort(col, kind="stable")
        xs = col[order]
        ys = y[order]
        prefix = np.cumsum(ys)
        total = prefix[-1]
        valid = (xs[1:] > xs[:-1]) & size_ok
        if not valid.any():
            continue
        l_sum = prefix[:-1]
        r_sum = total - l_sum
        with np.errstate(invalid="ignore"):
            score = np.where(
                valid,
                l_sum * l_sum / counts_l + r_sum * r_sum / counts_r,
                float("-inf"),
            )
        k = int(np.argmax(score))
        if score[k] > best_score:
            thr = 0.5 * (xs[k] + xs[k + 1])
            # midpoint can round up to the right value; keep splits exact
            if thr >= xs[k + 1]:
                thr = xs[k]
            best_score = float(score[k])
            best_feature = j
            best_threshold = float(thr)

    if best_feature < 0:
        return NO_SPLIT
    return (best_feature, best_threshold, best_score)


def apply_tree(
    X: np.ndarray,
    feature: np.ndarray,
    threshold: np.ndarray,
    left: np.ndarray,
    right: np.ndarray,
) -> np.ndarray:
    """Route rows through a tree stored as flat arrays; ``feature < 0`` marks
    a leaf and ``x <= threshold`` goes left. Returns the leaf node id per row.
    """
    n = X.shape[0]
    out = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    node = np.zeros(n, dtype=np.int64)
    while active.size:
        f = feature[node[active]]
        at_leaf = f < 0
        done = active[at_leaf]
        out[done] = node[done]
        live = active[~at_leaf]
        if live.size == 0:
            break
        fl = feature[node[live]]
        go_left = X[live, fl] <= threshold[node[live]]
        nxt = np.where(go_left, left[node[live]], right[node[live]])
        node[live] = nxt
        active = live
    return out
