# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
# cython: language_level=3
"""Compiled split-search and tree-routing kernels.

Must produce bit-identical results to the reference implementation in
``_ref``: same stable sort, same sequential summation order, same strict
tie-breaking, same threshold rounding guard.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

NO_SPLIT = (-1, 0.0, float("-inf"))


def best_split(double[:, ::1] X, double[::1] y, Py_ssize_t min_leaf):
    """Best axis-aligned split of (X, y) by the variance-reduction proxy
    sum_left^2/n_left + sum_right^2/n_right. Returns (feature, threshold,
    score), or (-1, 0.0, -inf) when no split leaves min_leaf rows per side.
    Ties break toward the lower feature index, then the lower threshold.
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t j, k, idx
    cdef double best_score = float("-inf")
    cdef Py_ssize_t best_feature = -1
    cdef double best_threshold = 0.0
    cdef double total, acc, l_sum, r_sum, score, thr
    cdef Py_ssize_t n_l, n_r

    if n < 2 * min_leaf or min_leaf < 1:
        return NO_SPLIT

    col_arr = np.empty(n, dtype=np.float64)
    xs_arr = np.empty(n, dtype=np.float64)
    ys_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] col = col_arr
    cdef double[::1] xs = xs_arr
    cdef double[::1] ys = ys_arr
    cdef cnp.int64_t[::1] order

    for j in range(d):
        for k in range(n):
            col[k] = X[k, j]
        order = np.argsort(col_arr, kind="stable").astype(np.int64, copy=False)
        for k in range(n):
            idx = <Py_ssize_t> order[k]
            xs[k] = col[idx]
            ys[k] = y[idx]
        # sequential sum, same addition order as the cumulative sum in _ref
        total = 0.0
        for k in range(n):
            total += ys[k]
        acc = 0.0
        for k in range(n - 1):
            acc += ys[k]
            if xs[k + 1] <= xs[k]:
                continue
            n_l = k + 1
            n_r = n - n_l
            if n_l < min_leaf or n_r < min_leaf:
                continue
            l_sum = acc
            r_sum = total - acc
            score = l_sum * l_sum / n_l + r_sum * r_sum / n_r
            if score > best_score:
                thr = 0.5 * (xs[k] + xs[k + 1])
                # midpoint can round up to the right value; keep splits exact
                if thr >= xs[k + 1]:
                    thr = xs[k]
                best_score = score
                best_feature = j
                best_threshold = thr

    if best_feature < 0:
        return NO_SPLIT
    return (int(best_feature), float(best_threshold), float(best_score))


def apply_tree(double[:, ::1] X,
               cnp.int64_t[::1] feature,
               double[::1] threshold,
               cnp.int64_t[::1] left,
               cnp.int64_t[::1] right):
    """Route rows through a tree stored as flat arrays; ``feature < 0`` marks
    a leaf and ``x <= threshold`` goes left. Returns the leaf node id per row.
    """
    cdef Py_ssize_t n = X.shape[0]
    cdef Py_ssize_t r
    cdef cnp.int64_t node

    out_arr = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] out = out_arr

    for r in range(n):
        node = 0
        while feature[node] >= 0:
            if X[r, <Py_ssize_t> feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[r] = node
    return out_arr
