# cython: language_level=3
"""Compiled inner loops: edit distance, nearest-centroid scan, labeled row sums.

Semantics must stay interchangeable with `_pykernels`; the backend is
selected once at import time in `dmlm.kernels`.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def levenshtein(cnp.int32_t[::1] a, cnp.int32_t[::1] b):
    """Unit-cost edit distance between two int32 sequences."""
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t m = b.shape[0]
    cdef Py_ssize_t i, j
    if n == 0:
        return m
    if m == 0:
        return n
    prev_arr = np.arange(m + 1, dtype=np.int64)
    cur_arr = np.empty(m + 1, dtype=np.int64)
    cdef cnp.int64_t[::1] prev = prev_arr
    cdef cnp.int64_t[::1] cur = cur_arr
    cdef cnp.int64_t[::1] tmp
    cdef cnp.int64_t best, cand
    for i in range(n):
        cur[0] = i + 1
        for j in range(m):
            best = prev[j] + (0 if a[i] == b[j] else 1)
            cand = prev[j + 1] + 1
            if cand < best:
                best = cand
            cand = cur[j] + 1
            if cand < best:
                best = cand
            cur[j + 1] = best
        tmp = prev
        prev = cur
        cur = tmp
    return int(prev[m])


def nearest_centroids(double[:, ::1] x, double[:, ::1] c):
    """For each row of x, the index of the nearest row of c (squared L2).

    Ties break toward the lowest centroid index. Returns (idx, d2).
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t k = c.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, j, t, best_j
    cdef double best, dist, diff
    if c.shape[1] != d:
        raise ValueError("dimension mismatch between points and centroids")
    if k == 0:
        raise ValueError("need at least one centroid")
    idx_arr = np.empty(n, dtype=np.int64)
    d2_arr = np.empty(n, dtype=np.float64)
    cdef cnp.int64_t[::1] idx = idx_arr
    cdef double[::1] d2 = d2_arr
    for i in range(n):
        best = INFINITY
        best_j = 0
        for j in range(k):
            dist = 0.0
            for t in range(d):
                diff = x[i, t] - c[j, t]
                dist += diff * diff
            if dist < best:
                best = dist
                best_j = j
        idx[i] = best_j
        d2[i] = best
    return idx_arr, d2_arr


def bincount_rows(double[:, ::1] x, cnp.int64_t[::1] labels, Py_ssize_t k):
    """Sum rows of x into k bins by label; also return per-bin counts.

    Rows are accumulated in input order, matching the fallback exactly.
    """
    cdef Py_ssize_t n = x.shape[0]
    cdef Py_ssize_t d = x.shape[1]
    cdef Py_ssize_t i, t
    cdef cnp.int64_t lab
    if labels.shape[0] != n:
        raise ValueError("labels length does not match row count")
    sums_arr = np.zeros((k, d), dtype=np.float64)
    counts_arr = np.zeros(k, dtype=np.int64)
    cdef double[:, ::1] sums = sums_arr
    cdef cnp.int64_t[::1] counts = counts_arr
    for i in range(n):
        lab = labels[i]
        if lab < 0 or lab >= k:
            raise ValueError("label out of range")
        counts[lab] += 1
        for t in range(d):
            sums[lab, t] += x[i, t]
    return sums_arr, counts_arr
