"""Pure-numpy fallbacks for the compiled kernels.

Same contracts as `_ckernels`; used when the extension is unavailable or
when DMLM_PURE_PYTHON=1 is set.
"""

import numpy as np


def levenshtein(a: np.ndarray, b: np.ndarray) -> int:
    """Unit-cost edit distance between two int32 sequences."""
    n, m = len(a), len(b)
    if n == 0:
        return m
    if m == 0:
        return n
    # Row-vectorized DP. The insertion recurrence cur[j] = min(cur[j], cur[j-1]+1)
    # is a prefix scan: min_{i<=j}(cur[i] + (j-i)) = min-accumulate(cur - j) + j.
    offsets = np.arange(m + 1, dtype=np.int64)
    prev = offsets.copy()
    for i in range(n):
        cur = np.empty(m + 1, dtype=np.int64)
        cur[0] = i + 1
        cur[1:] = np.minimum(prev[:-1] + (a[i] != b), prev[1:] + 1)
        cur = np.minimum(cur, np.minimum.accumulate(cur - offsets) + offsets)
        prev = cur
    return int(prev[m])


def nearest_centroids(x: np.ndarray, c: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """For each row of x, the index of the nearest row of c (squared L2).

    Ties break toward the lowest centroid index. Returns (idx, d2).
    """
    if c.shape[1] != x.shape[1]:
        raise ValueError("dimension mismatch between points and centroids")
    if c.shape[0] == 0:
        raise ValueError("need at least one centroid")
    n = x.shape[0]
    idx = np.empty(n, dtype=np.int64)
    d2 = np.empty(n, dtype=np.float64)
    # Chunked direct differences: exact per-pair arithmetic, no |x|^2-2xc
    # expansion, so genuine ties stay exact.
    chunk = max(1, 8_388_608 // max(1, c.shape[0] * c.shape[1]))
    for start in range(0, n, chunk):
        stop = min(n, start + chunk)
        diff = x[start:stop, None, :] - c[None, :, :]
        dist = np.einsum("nkd,nkd->nk", diff, diff)
        idx[start:stop] = np.argmin(dist, axis=1)
        d2[start:stop] = dist[np.arange(stop - start), idx[start:stop]]
    return idx, d2


def bincount_rows(
    x: np.ndarray, labels: np.ndarray, k: int
) -> tuple[np.ndarray, np.ndarray]:
    """Sum rows of x into k bins by label; also return per-bin counts."""
    if labels.shape[0] != x.shape[0]:
        raise ValueError("labels length does not match row count")
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise ValueError("label out of range")
    sums = np.zeros((k, x.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, x)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts
