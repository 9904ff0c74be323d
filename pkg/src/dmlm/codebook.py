"""Speech codebooks: mini-batch k-means over frame features.

Continuous frame vectors are discretized by nearest-centroid lookup
against a codebook fit with mini-batch k-means (k-means++ seeding,
per-centroid counts as step sizes). Distances are squared Euclidean,
computed in float64; centroids are stored as float32 so a fit/save/load
cycle is bit-identical.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import ChecksumError, InfeasibleK, InvalidArgument
from .kernels import bincount_rows, nearest_centroids

FEAT_MAGIC = b"FEAT"


# ---------------------------------------------------------------------------
# Feature files: magic, u32 rows, u32 dim, float32 row-major payload.


def write_features(path: str | Path, x: np.ndarray) -> None:
    x = np.ascontiguousarray(x, dtype=np.float32)
    if x.ndim != 2:
        raise InvalidArgument("feature array must be 2-dimensional")
    with open(path, "wb") as fh:
        fh.write(FEAT_MAGIC)
        fh.write(struct.pack("<II", x.shape[0], x.shape[1]))
        fh.write(x.tobytes())


def read_features(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 12 or raw[:4] != FEAT_MAGIC:
        raise InvalidArgument(f"{path} is not a feature file")
    rows, dim = struct.unpack("<II", raw[4:12])
    expect = 12 + rows * dim * 4
    if len(raw) != expect:
        raise ChecksumError(
            f"feature file {path} has {len(raw)} bytes, expected {expect}"
        )
    return np.frombuffer(raw[12:], dtype="<f4").reshape(rows, dim).copy()


# ---------------------------------------------------------------------------
# Codebook


@dataclass
class Codebook:
    """k centroids over d-dimensional frames, with fitting metadata."""

    centroids: np.ndarray  # (k, d) float32
    counts: np.ndarray  # (k,) int64, frames consumed per centroid
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.centroids = np.ascontiguousarray(self.centroids, dtype=np.float32)
        self.counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if self.centroids.ndim != 2:
            raise InvalidArgument("centroids must be a (k, d) array")
        if self.counts.shape != (self.centroids.shape[0],):
            raise InvalidArgument("counts must have one entry per centroid")

    @property
    def k(self) -> int:
        return self.centroids.shape[0]

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def assign(self, x: np.ndarray) -> np.ndarray:
        """Nearest-centroid index for each row of `x` (lowest id on ties)."""
        x64 = np.ascontiguousarray(x, dtype=np.float64)
        if x64.ndim != 2 or x64.shape[1] != self.dim:
            raise InvalidArgument(
                f"frames must be (n, {self.dim}), got {x64.shape}"
            )
        idx, _ = nearest_centroids(x64, self._centroids64)
        return idx

    def inertia(self, x: np.ndarray) -> float:
        """Sum of squared distances to the assigned centroids."""
        x64 = np.ascontiguousarray(x, dtype=np.float64)
        _, d2 = nearest_centroids(x64, self._centroids64)
        return float(d2.sum())

    @property
    def _centroids64(self) -> np.ndarray:
        # float32 -> float64 is exact, so assignments computed here match
        # assignments against the stored centroids bit for bit.
        return np.ascontiguousarray(self.centroids, dtype=np.float64)

    # -- persistence: FEAT payload + JSON sidecar in one file ----------

    def save(self, path: str | Path) -> None:
        sidecar = json.dumps(
            {
                "k": self.k,
                "dim": self.dim,
                "counts": self.counts.tolist(),
                "meta": self.meta,
            },
            sort_keys=True,
        ).encode()
        with open(path, "wb") as fh:
            fh.write(FEAT_MAGIC)
            fh.write(struct.pack("<II", self.k, self.dim))
            fh.write(self.centroids.tobytes())
            fh.write(struct.pack("<I", len(sidecar)))
            fh.write(sidecar)

    @classmethod
    def load(cls, path: str | Path) -> "Codebook":
        raw = Path(path).read_bytes()
        if len(raw) < 12 or raw[:4] != FEAT_MAGIC:
            raise InvalidArgument(f"{path} is not a codebook file")
        k, dim = struct.unpack("<II", raw[4:12])
        body = 12 + k * dim * 4
        if len(raw) < body + 4:
            raise ChecksumError(f"codebook file {path} is truncated")
        centroids = np.frombuffer(raw[12:body], dtype="<f4").reshape(k, dim).copy()
        (side_len,) = struct.unpack("<I", raw[body : body + 4])
        if len(raw) != body + 4 + side_len:
            raise ChecksumError(f"codebook file {path} is truncated")
        sidecar = json.loads(raw[body + 4 :].decode())
        if sidecar["k"] != k or sidecar["dim"] != dim:
            raise ChecksumError("codebook sidecar disagrees with the header")
        return cls(
            centroids=centroids,
            counts=np.asarray(sidecar["counts"], dtype=np.int64),
            meta=sidecar.get("meta", {}),
        )


# ---------------------------------------------------------------------------
# Fitting


def _kmeanspp_seed(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ initialization over the full float64 sample."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = ((x - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0.0:
            # All remaining mass sits on already-chosen points; any pick works.
            centers[j] = x[int(rng.integers(n))]
        else:
            probs = d2 / total
            pick = int(rng.choice(n, p=probs))
            centers[j] = x[pick]
        d2 = np.minimum(d2, ((x - centers[j]) ** 2).sum(axis=1))
    return centers


def fit_codebook(
    x: np.ndarray,
    k: int,
    batch_size: int = 1024,
    max_iters: int = 200,
    tol: float = 1e-6,
    seed: int = 0,
    meta: Mapping | None = None,
) -> Codebook:
    """Mini-batch k-means (per-centroid counts as learning rates).

    Each iteration samples a mini-batch, assigns it to the nearest
    centroids, and moves each hit centroid to the exact running mean of
    all frames it has ever consumed. Centroids that receive no frames for
    a full pass-equivalent are reseeded to the farthest frame of the
    current batch. Stops when the largest relative centroid movement
    falls below `tol` or after `max_iters` batches.
    """
    x64 = np.ascontiguousarray(x, dtype=np.float64)
    if x64.ndim != 2:
        raise InvalidArgument("frames must form a 2-dimensional array")
    n, dim = x64.shape
    if k < 1:
        raise InvalidArgument(f"k must be >= 1, got {k}")
    if k > n:
        raise InfeasibleK(f"cannot fit {k} centroids to {n} frames")
    uniq = np.unique(x64, axis=0).shape[0]
    if k > uniq:
        raise InfeasibleK(f"only {uniq} distinct frames for k={k}")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_seed(x64, k, rng)
    counts = np.zeros(k, dtype=np.int64)
    batch_size = min(batch_size, n)
    stale = np.zeros(k, dtype=np.int64)
    stale_limit = max(1, n // batch_size)
    iters_run = 0
    for it in range(max_iters):
        iters_run = it + 1
        batch = x64[rng.choice(n, size=batch_size, replace=False)]
        labels, _ = nearest_centroids(batch, centers)
        sums, hits = bincount_rows(batch, labels, k)
        prev = centers.copy()
        hit = hits > 0
        # Running-mean update: with v prior frames and m new ones,
        # c' = (c * v + sum_new) / (v + m), the exact mean over v + m.
        denom = (counts[hit] + hits[hit]).astype(np.float64)
        centers[hit] = (centers[hit] * counts[hit, None] + sums[hit]) / denom[:, None]
        counts += hits
        stale[hit] = 0
        stale[~hit] += 1
        dead = stale > stale_limit
        if dead.any():
            _, d2 = nearest_centroids(batch, centers)
            order = np.argsort(-d2, kind="stable")
            for slot, frame_i in zip(np.flatnonzero(dead), order):
                centers[slot] = batch[frame_i]
                counts[slot] = 1
                stale[slot] = 0
        move = np.sqrt(((centers - prev) ** 2).sum(axis=1))
        scale = np.sqrt((prev**2).sum(axis=1))
        rel = move / np.maximum(scale, 1e-12)
        if rel.max() < tol:
            break
    info = dict(meta or {})
    info.update(
        {
            "algorithm": "minibatch-kmeans",
            "batch_size": batch_size,
            "iters": iters_run,
            "seed": seed,
            "tol": tol,
        }
    )
    return Codebook(
        centroids=centers.astype(np.float32),
        counts=counts,
        meta=info,
    )


def lloyd_reference(
    x: np.ndarray, k: int, seed: int = 0, max_iters: int = 300, tol: float = 0.0
) -> Codebook:
    """Full-batch Lloyd iterations from a k-means++ seed.

    Slower but monotone in inertia; used as the quality yardstick for the
    mini-batch fit.
    """
    x64 = np.ascontiguousarray(x, dtype=np.float64)
    n = x64.shape[0]
    if k > n:
        raise InfeasibleK(f"cannot fit {k} centroids to {n} frames")
    rng = np.random.default_rng(seed)
    centers = _kmeanspp_seed(x64, k, rng)
    labels = None
    for _ in range(max_iters):
        new_labels, _ = nearest_centroids(x64, centers)
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        sums, hits = bincount_rows(x64, labels, k)
        empty = hits == 0
        hit = ~empty
        centers[hit] = sums[hit] / hits[hit, None]
        if empty.any():
            _, d2 = nearest_centroids(x64, centers)
            order = np.argsort(-d2, kind="stable")
            for slot, frame_i in zip(np.flatnonzero(empty), order):
                centers[slot] = x64[frame_i]
    labels, _ = nearest_centroids(x64, centers)
    _, hits = bincount_rows(x64, labels, k)
    return Codebook(centroids=centers.astype(np.float32), counts=hits, meta={"algorithm": "lloyd"})
