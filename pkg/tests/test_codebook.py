"""Mini-batch k-means fitting, nearest-centroid assignment, feature files."""

import numpy as np
import pytest
from numpy.testing import assert_allclose, assert_array_equal

from dmlm import (
    ChecksumError,
    Codebook,
    InfeasibleK,
    InvalidArgument,
    fit_codebook,
    lloyd_reference,
    read_features,
    write_features,
)


def three_blobs(n_per=200, dim=4, spread=0.15, seed=0):
    rng = np.random.default_rng(seed)
    centers = np.asarray(
        [[3.0] + [0.0] * (dim - 1), [-3.0] + [0.0] * (dim - 1), [0.0, 3.0] + [0.0] * (dim - 2)]
    )
    parts = [c + spread * rng.standard_normal((n_per, dim)) for c in centers]
    return np.concatenate(parts).astype(np.float64)


def oracle_assign(x, centroids):
    """Exhaustive nearest centroid, lowest index on ties."""
    idx = np.empty(len(x), dtype=np.int64)
    d2 = np.empty(len(x))
    for i, row in enumerate(x):
        dists = ((centroids - row) ** 2).sum(axis=1)
        idx[i] = int(np.argmin(dists))
        d2[i] = dists[idx[i]]
    return idx, d2


class TestFeatureFiles:
    def test_roundtrip(self, tmp_path, rng):
        x = rng.standard_normal((17, 5)).astype(np.float32)
        path = tmp_path / "frames.feat"
        write_features(path, x)
        back = read_features(path)
        assert back.dtype == np.float32
        assert_array_equal(back, x)

    def test_empty_rows_roundtrip(self, tmp_path):
        x = np.zeros((0, 7), dtype=np.float32)
        path = tmp_path / "empty.feat"
        write_features(path, x)
        assert read_features(path).shape == (0, 7)

    def test_truncated_file_rejected(self, tmp_path, rng):
        path = tmp_path / "frames.feat"
        write_features(path, rng.standard_normal((8, 3)))
        raw = path.read_bytes()
        path.write_bytes(raw[:-5])
        with pytest.raises(ChecksumError):
            read_features(path)

    def test_wrong_magic_rejected(self, tmp_path):
        path = tmp_path / "junk.feat"
        path.write_bytes(b"NOPE" + b"\x00" * 20)
        with pytest.raises(InvalidArgument):
            read_features(path)


class TestAssignment:
    def test_matches_oracle_on_random_frames(self, rng):
        centroids = rng.standard_normal((13, 6))
        cb = Codebook(centroids.astype(np.float32), np.ones(13, dtype=np.int64))
        x = rng.standard_normal((500, 6))
        got = cb.assign(x)
        want, want_d2 = oracle_assign(x, cb.centroids.astype(np.float64))
        assert_array_equal(got, want)
        # inertia agrees with the summed oracle distances
        assert_allclose(cb.inertia(x), want_d2.sum(), rtol=1e-12)

    def test_tie_breaks_to_lowest_index(self):
        centroids = np.asarray([[1.0, 0.0], [-1.0, 0.0], [1.0, 0.0]], dtype=np.float32)
        cb = Codebook(centroids, np.ones(3, dtype=np.int64))
        idx = cb.assign(np.asarray([[0.0, 0.0], [1.0, 0.0]]))
        assert_array_equal(idx, [0, 0])

    def test_dimension_mismatch(self):
        cb = Codebook(np.zeros((2, 3), dtype=np.float32), np.zeros(2, dtype=np.int64))
        with pytest.raises(InvalidArgument):
            cb.assign(np.zeros((4, 5)))


class TestFit:
    def test_three_blobs_recovered(self):
        x = three_blobs()
        cb = fit_codebook(x, 3, batch_size=128, seed=1)
        # every blob center should have one centroid within the noise scale
        true = np.asarray([[3.0, 0, 0, 0], [-3.0, 0, 0, 0], [0.0, 3.0, 0, 0]])
        d = ((true[:, None, :] - cb.centroids[None].astype(np.float64)) ** 2).sum(-1)
        assert (d.min(axis=1) < 0.05).all()
        labels = cb.assign(x)
        assert len(np.unique(labels)) == 3

    def test_counts_total_frames_consumed(self):
        x = three_blobs(n_per=50)
        cb = fit_codebook(x, 3, batch_size=32, max_iters=20, seed=0)
        assert cb.counts.sum() == 32 * cb.meta["iters"]

    def test_determinism(self):
        x = three_blobs(n_per=80, seed=3)
        a = fit_codebook(x, 5, batch_size=64, seed=42)
        b = fit_codebook(x, 5, batch_size=64, seed=42)
        assert_array_equal(a.centroids, b.centroids)
        assert_array_equal(a.counts, b.counts)

    def test_running_mean_matches_sequential_mean(self, rng):
        # One centroid consuming every batch must land on the global mean.
        x = rng.standard_normal((256, 3))
        cb = fit_codebook(x, 1, batch_size=256, max_iters=1, seed=0)
        assert_allclose(cb.centroids[0], x.mean(axis=0).astype(np.float32), rtol=1e-6)

    def test_k_larger_than_n_rejected(self, rng):
        with pytest.raises(InfeasibleK):
            fit_codebook(rng.standard_normal((4, 2)), 5)

    def test_k_larger_than_distinct_rejected(self):
        x = np.repeat(np.asarray([[1.0, 2.0], [3.0, 4.0]]), 10, axis=0)
        with pytest.raises(InfeasibleK):
            fit_codebook(x, 3)

    def test_k_equal_distinct_succeeds(self):
        x = np.repeat(np.asarray([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]), 4, axis=0)
        cb = fit_codebook(x, 3, batch_size=12, seed=0)
        assert cb.inertia(x) < 1e-12

    def test_invalid_k(self, rng):
        with pytest.raises(InvalidArgument):
            fit_codebook(rng.standard_normal((10, 2)), 0)

    def test_quality_close_to_lloyd(self):
        x = three_blobs(n_per=300, seed=9)
        mini = fit_codebook(x, 3, batch_size=128, seed=4)
        full = lloyd_reference(x, 3, seed=4)
        assert mini.inertia(x) <= 1.10 * full.inertia(x)

    def test_empty_cluster_reseeded(self):
        # Two tight blobs, k=3: one centroid must starve and be reseeded,
        # after which all three earn assignments on the full data.
        rng = np.random.default_rng(5)
        a = rng.standard_normal((150, 2)) * 0.05 + [5.0, 0.0]
        b = rng.standard_normal((150, 2)) * 0.05 - [5.0, 0.0]
        x = np.concatenate([a, b])
        cb = fit_codebook(x, 3, batch_size=64, max_iters=60, seed=2)
        assert len(np.unique(cb.assign(x))) == 3


class TestLloydReference:
    def test_inertia_decreases_monotonically(self):
        # Lloyd guarantees non-increasing inertia; spot-check via reruns at
        # increasing iteration caps.
        x = three_blobs(n_per=100, seed=7)
        prev = np.inf
        for iters in (1, 2, 4, 8):
            cb = lloyd_reference(x, 3, seed=1, max_iters=iters)
            val = cb.inertia(x)
            assert val <= prev + 1e-9
            prev = val


class TestPersistence:
    def test_roundtrip_bit_identical(self, tmp_path):
        x = three_blobs(n_per=40, seed=11)
        cb = fit_codebook(x, 3, batch_size=64, seed=6, meta={"source": "unit"})
        path = tmp_path / "book.cbk"
        cb.save(path)
        loaded = Codebook.load(path)
        assert_array_equal(loaded.centroids, cb.centroids)
        assert_array_equal(loaded.counts, cb.counts)
        assert loaded.meta == cb.meta
        assert_array_equal(loaded.assign(x), cb.assign(x))

    def test_truncation_detected(self, tmp_path):
        cb = Codebook(np.ones((2, 2), dtype=np.float32), np.ones(2, dtype=np.int64))
        path = tmp_path / "book.cbk"
        cb.save(path)
        raw = path.read_bytes()
        path.write_bytes(raw[:-1])
        with pytest.raises(ChecksumError):
            Codebook.load(path)
