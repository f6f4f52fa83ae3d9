"""Blockwise symbolization of dense series.

A series is cut into consecutive non-overlapping blocks of ``delta`` hours;
each block maps to the nearest of k centroids (Euclidean, ties to the lowest
centroid index). Centroids come either from sampling distinct blocks in input
space ("input" mode) or from k-means over learned block embeddings ("embd"
mode). Symbolization is index-preserving: position i of the symbol string
always refers back to block i of the source stay.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from .data import DenseSeries
from .errors import DataError
from .seeding import spawn_rng


@dataclass
class Block:
    stay_id: str
    block_index: int
    data: np.ndarray  # delta x F
    mask: np.ndarray  # delta x F

    def flatten(self) -> np.ndarray:
        """Standardized values concatenated with mask bits."""
        return np.concatenate([self.data.ravel(), self.mask.ravel().astype(float)])


@dataclass
class SymbolSpace:
    """Nearest-centroid partition of block (or embedding) space."""

    mode: str  # "input" | "embd"
    k: int
    seed: int
    centroids: np.ndarray  # k x dim
    embedding_dim: int | None = None
    inertia_history: list = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.centroids = np.asarray(self.centroids, dtype=float)
        if self.mode not in ("input", "embd"):
            raise DataError(f"unknown symbol space mode {self.mode!r}")
        if self.k < 2:
            raise DataError("symbol space needs k >= 2")
        if self.centroids.shape[0] != self.k:
            raise DataError("centroid count does not match k")
        if len(np.unique(self.centroids, axis=0)) != self.k:
            raise DataError("centroids must be pairwise distinct")

    @property
    def dim(self) -> int:
        return self.centroids.shape[1]

    def to_jsonable(self) -> dict:
        obj = {
            "mode": self.mode,
            "k": int(self.k),
            "seed": int(self.seed),
            "centroids": [[float(v) for v in row] for row in self.centroids],
        }
        if self.embedding_dim is not None:
            obj["embedding_dim"] = int(self.embedding_dim)
        return obj

    @classmethod
    def from_jsonable(cls, obj: dict) -> "SymbolSpace":
        return cls(
            mode=obj["mode"],
            k=int(obj["k"]),
            seed=int(obj["seed"]),
            centroids=np.array(obj["centroids"], dtype=float),
            embedding_dim=obj.get("embedding_dim"),
        )

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_jsonable(), fh, separators=(",", ":"))

    @classmethod
    def load(cls, path) -> "SymbolSpace":
        with open(path, encoding="utf-8") as fh:
            return cls.from_jsonable(json.load(fh))


@dataclass
class SymbolSequence:
    stay_id: str
    symbols: list
    delta: int
    provenance: list  # per position: (stay_id, block_index)

    def __post_init__(self):
        if len(self.symbols) != len(self.provenance):
            raise DataError(f"stay {self.stay_id}: provenance length mismatch")

    def __len__(self):
        return len(self.symbols)

    def to_jsonable(self) -> dict:
        return {
            "stay_id": self.stay_id,
            "delta": int(self.delta),
            "symbols": list(self.symbols),
            "provenance": [[s, int(b)] for s, b in self.provenance],
        }

    @classmethod
    def from_jsonable(cls, obj: dict) -> "SymbolSequence":
        return cls(
            stay_id=str(obj["stay_id"]),
            symbols=list(obj["symbols"]),
            delta=int(obj["delta"]),
            provenance=[(p[0], int(p[1])) for p in obj["provenance"]],
        )


def segment(series: DenseSeries, delta: int) -> list:
    """Cut a series into T/delta consecutive non-overlapping blocks."""
    if delta <= 0:
        raise DataError("block length must be positive")
    t = series.horizon
    if t % delta != 0:
        raise DataError(f"stay {series.stay_id}: horizon {t} not divisible by {delta}")
    blocks = []
    for i in range(t // delta):
        sl = slice(i * delta, (i + 1) * delta)
        blocks.append(Block(series.stay_id, i, series.values[sl], series.mask[sl]))
    return blocks


def build_block_store(corpus, delta: int) -> dict:
    """stay_id -> list of blocks, for provenance-based reconstruction."""
    return {s.stay_id: segment(s, delta) for s in corpus}


def random_centroids(blocks: list, k: int, seed: int) -> SymbolSpace:
    """Sample k distinct block vectors from the input domain as centroids."""
    if len(blocks) < k:
        raise DataError(f"need at least {k} blocks, got {len(blocks)}")
    vectors = np.stack([b.flatten() for b in blocks])
    unique = np.unique(vectors, axis=0)
    if unique.shape[0] < k:
        raise DataError(
            f"only {unique.shape[0]} distinct block vectors available for k={k}"
        )
    rng = spawn_rng(seed, "random-centroids")
    idx = rng.choice(unique.shape[0], size=k, replace=False)
    return SymbolSpace(mode="input", k=k, seed=seed, centroids=unique[np.sort(idx)])


def _nearest(points: np.ndarray, centroids: np.ndarray):
    # |p - c|^2 via the expansion trick; argmin ties go to the lowest index
    d2 = (
        (points * points).sum(axis=1)[:, None]
        + (centroids * centroids).sum(axis=1)[None, :]
        - 2.0 * points @ centroids.T
    )
    np.maximum(d2, 0.0, out=d2)
    labels = np.argmin(d2, axis=1)
    return labels, d2[np.arange(points.shape[0]), labels]


def lloyd_centroids(points, k: int, seed: int, max_iter: int = 100, tol: float = 1e-6):
    """Lloyd iterations from greedy distance-weighted seeding.

    Seeding picks the first centroid uniformly and each next one with
    probability proportional to the squared distance to the nearest chosen
    centroid. Empty clusters are re-seeded to the point currently farthest
    from its assigned centroid. Stops when the largest centroid shift falls
    below ``tol`` or after ``max_iter`` iterations. Returns (centroids,
    inertia history), inertia recorded after every assignment step.
    """
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    n_distinct = len(np.unique(points, axis=0))
    if n_distinct < max(k, 2):
        raise DataError(f"need at least {max(k, 2)} distinct points, got {n_distinct}")
    rng = spawn_rng(seed, "kmeans")

    centroids = np.empty((k, points.shape[1]))
    centroids[0] = points[rng.integers(n)]
    d2 = ((points - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        probs = d2 / d2.sum()
        centroids[j] = points[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((points - centroids[j]) ** 2).sum(axis=1))

    history = []
    for _ in range(max_iter):
        labels, dist2 = _nearest(points, centroids)
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts == 0):
            centroids[j] = points[int(np.argmax(dist2))]
            labels, dist2 = _nearest(points, centroids)
            counts = np.bincount(labels, minlength=k)
        history.append(float(dist2.sum()))
        sums = np.zeros_like(centroids)
        np.add.at(sums, labels, points)
        new_centroids = sums / counts[:, None]
        shift = np.max(np.linalg.norm(new_centroids - centroids, axis=1))
        centroids = new_centroids
        if shift < tol:
            break
    _, dist2 = _nearest(points, centroids)
    history.append(float(dist2.sum()))
    return centroids, history


def kmeans(embeddings, k: int, seed: int, max_iter: int = 100, tol: float = 1e-6) -> SymbolSpace:
    """Fit an embd-mode symbol space with k-means (see lloyd_centroids)."""
    centroids, history = lloyd_centroids(embeddings, k, seed, max_iter, tol)
    space = SymbolSpace(mode="embd", k=k, seed=seed, centroids=centroids,
                        embedding_dim=centroids.shape[1])
    space.inertia_history = history
    return space


def assign(vector, space: SymbolSpace) -> int:
    """Symbol id of the nearest centroid (ties to the lowest index)."""
    v = np.asarray(vector, dtype=float).ravel()
    if v.shape[0] != space.dim:
        raise DataError(f"vector dim {v.shape[0]} != centroid dim {space.dim}")
    d2 = ((space.centroids - v) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def symbolize(series: DenseSeries, space: SymbolSpace, delta: int, embedder=None) -> SymbolSequence:
    """Map each block of a series to its symbol, preserving block order."""
    if space.mode == "embd" and embedder is None:
        raise DataError("embd-mode symbol space requires an embedder")
    blocks = segment(series, delta)
    symbols, provenance = [], []
    for b in blocks:
        vec = embedder(b) if space.mode == "embd" else b.flatten()
        symbols.append(assign(vec, space))
        provenance.append((b.stay_id, b.block_index))
    return SymbolSequence(series.stay_id, symbols, delta, provenance)


def symbolize_corpus(corpus, space: SymbolSpace, delta: int, embedder=None) -> list:
    return [symbolize(s, space, delta, embedder) for s in corpus]


def write_symbols_ndjson(seqs, path):
    with open(path, "w", encoding="utf-8") as fh:
        for s in seqs:
            fh.write(json.dumps(s.to_jsonable(), separators=(",", ":")) + "\n")


def read_symbols_ndjson(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(SymbolSequence.from_jsonable(json.loads(line)))
    if not out:
        raise DataError(f"{path}: no symbol sequences")
    return out
