import numpy as np
import pytest

from ctsforge.data import DenseSeries
from ctsforge.errors import DataError
from ctsforge.symbolize import (
    SymbolSpace,
    assign,
    build_block_store,
    kmeans,
    lloyd_centroids,
    random_centroids,
    segment,
    symbolize,
)


def make_series(t=48, f=2, seed=0, stay="s"):
    rng = np.random.default_rng(seed)
    mask = (rng.random((t, f)) < 0.8).astype(np.int8)
    values = rng.normal(size=(t, f)) * mask
    return DenseSeries(stay, values, mask, [f"f{i}" for i in range(f)])


class TestSegment:
    def test_48_hours_delta_3(self):
        blocks = segment(make_series(48), 3)
        assert len(blocks) == 16
        assert blocks[5].block_index == 5
        assert blocks[5].data.shape == (3, 2)

    def test_whole_series_single_block(self):
        s = make_series(6)
        blocks = segment(s, 6)
        assert len(blocks) == 1
        assert np.array_equal(blocks[0].data, s.values)

    def test_indivisible_horizon_errors(self):
        with pytest.raises(DataError, match="divisible"):
            segment(make_series(6), 4)

    def test_nonpositive_delta_errors(self):
        with pytest.raises(DataError):
            segment(make_series(6), 0)

    def test_blocks_tile_series(self):
        s = make_series(12)
        blocks = segment(s, 3)
        rebuilt = np.concatenate([b.data for b in blocks])
        assert np.array_equal(rebuilt, s.values)


class TestRandomCentroids:
    def blocks(self, n_series=4, seed=0):
        return [b for i in range(n_series) for b in segment(make_series(12, seed=seed + i, stay=f"s{i}"), 3)]

    def test_every_block_when_k_equals_count(self):
        blocks = self.blocks()
        space = random_centroids(blocks, len(blocks), seed=1)
        vectors = {tuple(b.flatten()) for b in blocks}
        assert {tuple(c) for c in space.centroids} == vectors

    def test_same_seed_same_centroids(self):
        blocks = self.blocks()
        a = random_centroids(blocks, 5, seed=9)
        b = random_centroids(blocks, 5, seed=9)
        assert np.array_equal(a.centroids, b.centroids)

    def test_distinct_centroids_at_k_160(self):
        blocks = [b for i in range(20) for b in segment(make_series(48, seed=i, stay=f"s{i}"), 3)]
        space = random_centroids(blocks, 160, seed=0)
        assert len(np.unique(space.centroids, axis=0)) == 160

    def test_too_few_blocks_errors(self):
        with pytest.raises(DataError):
            random_centroids(self.blocks(1), 50, seed=0)


class TestKmeans:
    def test_two_point_exact_fit(self):
        space = kmeans([[0.0], [10.0]], k=2, seed=0)
        assert sorted(space.centroids.ravel().tolist()) == [0.0, 10.0]
        assert space.inertia_history[-1] == pytest.approx(0.0)

    def test_k1_centroid_is_mean(self):
        points = np.array([[1.0], [2.0], [6.0]])
        centroids, _ = lloyd_centroids(points, k=1, seed=0)
        assert centroids[0, 0] == pytest.approx(points.mean())

    def test_all_identical_points_error(self):
        with pytest.raises(DataError, match="distinct"):
            lloyd_centroids(np.ones((10, 2)), k=2, seed=0)

    def test_separated_gaussians_recovered(self):
        # oracle: the true means of the sampled points (per-cluster sample means)
        for seed in range(20):
            rng = np.random.default_rng(seed)
            a = rng.normal((0, 0), 1.0, (50, 2))
            b = rng.normal((100, 100), 1.0, (50, 2))
            space = kmeans(np.vstack([a, b]), k=2, seed=seed)
            targets = np.array([a.mean(axis=0), b.mean(axis=0)])
            for target in targets:
                nearest = min(np.linalg.norm(space.centroids - target, axis=1))
                assert nearest < 3.0

    def test_inertia_monotone(self):
        rng = np.random.default_rng(4)
        points = rng.normal(size=(300, 4))
        space = kmeans(points, k=7, seed=2)
        hist = space.inertia_history
        assert len(hist) >= 2
        for before, after in zip(hist, hist[1:]):
            assert after <= before + 1e-9

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        points = rng.normal(size=(100, 3))
        a = kmeans(points, k=5, seed=11)
        b = kmeans(points, k=5, seed=11)
        assert np.array_equal(a.centroids, b.centroids)


class TestAssign:
    def space(self):
        return SymbolSpace("input", 2, 0, np.array([[0.0], [10.0]]))

    def test_nearest(self):
        assert assign([3.0], self.space()) == 0
        assert assign([10.0], self.space()) == 1

    def test_tie_breaks_to_lowest_index(self):
        assert assign([5.0], self.space()) == 0

    def test_dimension_mismatch(self):
        with pytest.raises(DataError, match="dim"):
            assign([1.0, 2.0], self.space())

    def test_partition(self):
        # every vector maps to exactly one symbol
        rng = np.random.default_rng(0)
        space = SymbolSpace("input", 4, 0, rng.normal(size=(4, 3)))
        for _ in range(100):
            v = rng.normal(size=3)
            sym = assign(v, space)
            assert 0 <= sym < 4


class TestSymbolize:
    def test_blocks_equal_to_centroids(self):
        s = make_series(9, f=2, seed=1)
        blocks = segment(s, 3)
        centroids = np.stack([blocks[2].flatten(), blocks[0].flatten(), blocks[1].flatten()])
        space = SymbolSpace("input", 3, 0, centroids)
        seq = symbolize(s, space, 3)
        assert seq.symbols == [1, 2, 0]

    def test_sequence_length(self):
        s = make_series(48, seed=2)
        space = random_centroids(segment(s, 3), 4, seed=0)
        assert len(symbolize(s, space, 3)) == 48 // 3

    def test_provenance_resolves(self):
        s = make_series(12, seed=3)
        space = random_centroids(segment(s, 3), 2, seed=0)
        seq = symbolize(s, space, 3)
        store = build_block_store([s], 3)
        for i, (stay, bi) in enumerate(seq.provenance):
            assert stay == s.stay_id and bi == i
            assert store[stay][bi].block_index == bi

    def test_permuting_blocks_permutes_symbols(self):
        s = make_series(12, f=2, seed=4)
        space = random_centroids(segment(s, 3), 4, seed=0)
        base = symbolize(s, space, 3).symbols
        perm = [2, 0, 3, 1]
        shuffled = DenseSeries(
            "p",
            np.concatenate([s.values[i * 3:(i + 1) * 3] for i in perm]),
            np.concatenate([s.mask[i * 3:(i + 1) * 3] for i in perm]),
            s.features,
        )
        assert symbolize(shuffled, space, 3).symbols == [base[i] for i in perm]

    def test_embd_mode_requires_embedder(self):
        s = make_series(12, seed=5)
        space = SymbolSpace("embd", 2, 0, np.array([[0.0], [1.0]]), embedding_dim=1)
        with pytest.raises(DataError, match="embedder"):
            symbolize(s, space, 3)

    def test_embd_mode_with_embedder(self):
        s = make_series(12, seed=6)
        space = SymbolSpace("embd", 2, 0, np.array([[0.0], [1.0]]), embedding_dim=1)
        seq = symbolize(s, space, 3, embedder=lambda b: np.array([b.data.mean()]))
        assert len(seq) == 4

    def test_deterministic_pipeline(self):
        corpus = [make_series(12, seed=i, stay=f"s{i}") for i in range(5)]
        results = []
        for _ in range(2):
            blocks = [b for s in corpus for b in segment(s, 3)]
            space = random_centroids(blocks, 6, seed=3)
            results.append([symbolize(s, space, 3).symbols for s in corpus])
        assert results[0] == results[1]


class TestSymbolSpaceValidation:
    def test_duplicate_centroids_rejected(self):
        with pytest.raises(DataError, match="distinct"):
            SymbolSpace("input", 2, 0, np.zeros((2, 3)))

    def test_k_below_two_rejected(self):
        with pytest.raises(DataError):
            SymbolSpace("input", 1, 0, np.zeros((1, 3)))

    def test_json_roundtrip(self, tmp_path):
        space = SymbolSpace("input", 2, 7, np.array([[0.0, 1.0], [2.0, 3.0]]))
        path = tmp_path / "space.json"
        space.save(path)
        back = SymbolSpace.load(path)
        assert back.k == 2 and back.seed == 7
        assert np.array_equal(back.centroids, space.centroids)
