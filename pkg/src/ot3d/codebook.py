"""Visual dictionaries: batch k-means for the generic codebook and
sequential (MacQueen) k-means for the per-category ones.

Both variants keep per-word assignment counts so that an online centroid is
always the exact running mean of the features it has absorbed.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

OTDC_MAGIC = b"OTDC"
KIND_GENERIC = "generic"
KIND_CATEGORY = "category"

MAX_ITER = 300
SHIFT_TOL = 1e-6


@dataclass
class Dictionary:
    """A fixed-size set of centroid vectors ("visual words") in descriptor space."""

    words: np.ndarray                  # (V, dim) float64 centroids
    kind: str = KIND_GENERIC
    category: str | None = None
    assignment_counts: np.ndarray = field(default=None)  # (V,) int64

    def __post_init__(self):
        self.words = np.asarray(self.words, dtype=np.float64)
        if self.words.ndim != 2:
            raise ValueError("words must be a (V, dim) matrix")
        if not np.all(np.isfinite(self.words)):
            raise ValueError("centroids must be finite")
        if self.kind not in (KIND_GENERIC, KIND_CATEGORY):
            raise ValueError(f"unknown dictionary kind {self.kind!r}")
        if self.kind == KIND_CATEGORY and not self.category:
            raise ValueError("category dictionaries need a category name")
        if self.assignment_counts is None:
            self.assignment_counts = np.zeros(len(self.words), dtype=np.int64)
        else:
            self.assignment_counts = np.asarray(self.assignment_counts, dtype=np.int64)
            if self.assignment_counts.shape != (len(self.words),):
                raise ValueError("assignment_counts must have one entry per word")
            if np.any(self.assignment_counts < 0):
                raise ValueError("assignment_counts must be non-negative")

    @property
    def size(self) -> int:
        return self.words.shape[0]

    @property
    def dim(self) -> int:
        return self.words.shape[1]

    def copy(self) -> "Dictionary":
        return Dictionary(self.words.copy(), self.kind, self.category,
                          self.assignment_counts.copy())


def _sq_dists(features: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    """Pairwise squared Euclidean distances, (N, V)."""
    # ||x||^2 - 2 x.c + ||c||^2; clip negatives from cancellation
    d = (
        np.einsum("ij,ij->i", features, features)[:, None]
        - 2.0 * features @ centroids.T
        + np.einsum("ij,ij->i", centroids, centroids)[None, :]
    )
    return np.maximum(d, 0.0)


def _kmeanspp_init(features: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    n = features.shape[0]
    centroids = np.empty((k, features.shape[1]), dtype=np.float64)
    centroids[0] = features[rng.integers(n)]
    best = _sq_dists(features, centroids[:1])[:, 0]
    for j in range(1, k):
        total = best.sum()
        if total <= 0:
            # all remaining mass is at existing centroids; pick uniformly
            centroids[j] = features[rng.integers(n)]
        else:
            u = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(best), u, side="right"))
            idx = min(idx, n - 1)
            centroids[j] = features[idx]
        best = np.minimum(best, _sq_dists(features, centroids[j:j + 1])[:, 0])
    return centroids


def batch_kmeans(features: np.ndarray, k: int, seed: int):
    """Lloyd's algorithm with k-means++ seeding.

    Returns (centroids, counts, inertia_history); inertia is recorded at each
    assignment step, so the history is non-increasing. Empty clusters are
    re-seeded at the point farthest from its nearest centroid.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n < k:
        raise ValueError(f"need at least {k} features to build {k} words, got {n}")

    rng = np.random.default_rng(seed)
    centroids = _kmeanspp_init(features, k, rng)
    inertia_history = []
    labels = None

    for _ in range(MAX_ITER):
        d = _sq_dists(features, centroids)
        labels = np.argmin(d, axis=1)
        inertia_history.append(float(d[np.arange(n), labels].sum()))

        new_centroids = centroids.copy()
        counts = np.bincount(labels, minlength=k)
        for j in range(k):
            if counts[j] > 0:
                new_centroids[j] = features[labels == j].mean(axis=0)
        filled = counts > 0
        for j in np.flatnonzero(~filled):
            # farthest point from its nearest already-placed centroid
            nearest = np.min(_sq_dists(features, new_centroids[filled]), axis=1)
            new_centroids[j] = features[int(np.argmax(nearest))]
            filled[j] = True

        shift = float(np.max(np.linalg.norm(new_centroids - centroids, axis=1)))
        centroids = new_centroids
        if shift < SHIFT_TOL:
            break

    labels = np.argmin(_sq_dists(features, centroids), axis=1)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return centroids, counts, inertia_history


def build_dictionary(pool: np.ndarray, v: int, seed: int,
                     kind: str = KIND_GENERIC, category: str | None = None) -> Dictionary:
    """Cluster a feature pool into ``v`` visual words."""
    if v < 1:
        raise ValueError("dictionary size must be >= 1")
    centroids, counts, _ = batch_kmeans(pool, v, seed)
    return Dictionary(centroids, kind, category, counts)


def build_pool(objects: list[np.ndarray], fraction: float, seed: int = 0):
    """Sample ceil(fraction * len(objects)) objects and concatenate their features.

    Returns (pool_matrix, selected_indices); the selection is a seeded
    permutation so the same seed always pools the same objects.
    """
    if not objects:
        raise ValueError("cannot build a pool from zero objects")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must be in (0, 1]")
    n_take = int(np.ceil(fraction * len(objects)))
    rng = np.random.default_rng(seed)
    selected = np.sort(rng.permutation(len(objects))[:n_take])
    pool = np.concatenate([np.asarray(objects[i], dtype=np.float64) for i in selected])
    return pool, selected.tolist()


def update_dictionary_incremental(dictionary: Dictionary,
                                  new_features: np.ndarray) -> Dictionary:
    """Stream features through sequential k-means (one pass, in arrival order).

    Each feature moves its nearest centroid to the exact running mean:
    w <- w + (x - w) / (count + 1). The word count never changes.
    """
    features = np.asarray(new_features, dtype=np.float64)
    if features.size == 0:
        return dictionary
    if features.ndim != 2 or features.shape[1] != dictionary.dim:
        raise ValueError(
            f"features must be (N, {dictionary.dim}), got {features.shape}")
    words = dictionary.words
    counts = dictionary.assignment_counts
    for x in features:
        j = int(np.argmin(np.einsum("ij,ij->i", words - x, words - x)))
        counts[j] += 1
        words[j] += (x - words[j]) / counts[j]
    return dictionary


def init_category_dictionary(features: np.ndarray, vc: int, seed: int,
                             category: str) -> Dictionary:
    """Cold-start a category dictionary from its first taught features.

    With fewer features than words, the features become centroids directly
    and the remaining slots are jittered duplicates with zero count, so the
    running-mean invariant stays exact.
    """
    features = np.asarray(features, dtype=np.float64)
    n = features.shape[0]
    if n == 0:
        raise ValueError("cannot initialize a dictionary from zero features")
    if n >= vc:
        return build_dictionary(features, vc, seed, KIND_CATEGORY, category)

    rng = np.random.default_rng(seed)
    words = np.empty((vc, features.shape[1]), dtype=np.float64)
    counts = np.zeros(vc, dtype=np.int64)
    words[:n] = features
    counts[:n] = 1
    scale = max(float(np.abs(features).max()), 1e-9)
    for j in range(n, vc):
        jitter = rng.standard_normal(features.shape[1]) * 1e-6 * scale
        words[j] = features[j % n] + jitter
    return Dictionary(words, KIND_CATEGORY, category, counts)


def assign_word(feature: np.ndarray, dictionary: Dictionary) -> int:
    """Index of the nearest centroid; ties break to the lowest index."""
    if dictionary.size == 0:
        raise ValueError("dictionary is empty")
    d = dictionary.words - np.asarray(feature, dtype=np.float64)
    return int(np.argmin(np.einsum("ij,ij->i", d, d)))


def assign_words(features: np.ndarray, dictionary: Dictionary) -> np.ndarray:
    """Vectorized nearest-word indices for a feature matrix."""
    return np.argmin(_sq_dists(np.asarray(features, dtype=np.float64),
                               dictionary.words), axis=1)


# ---------------------------------------------------------------------------
# Persistence: the versioned OTDC binary layout.
#
# magic "OTDC" | u32 version | u8 kind | u16 name len + utf-8 name
# | u32 V | u32 dim | V*dim f32 centroids | V u64 counts
# | V*dim f64 centroids (full-precision block, version >= 1)
# ---------------------------------------------------------------------------

OTDC_VERSION = 1


def save_dictionary(dictionary: Dictionary, path: str | Path) -> None:
    name = (dictionary.category or "").encode("utf-8")
    blob = bytearray(OTDC_MAGIC)
    blob += struct.pack("<IBH", OTDC_VERSION,
                        0 if dictionary.kind == KIND_GENERIC else 1, len(name))
    blob += name
    blob += struct.pack("<II", dictionary.size, dictionary.dim)
    blob += dictionary.words.astype("<f4").tobytes()
    blob += dictionary.assignment_counts.astype("<u8").tobytes()
    blob += dictionary.words.astype("<f8").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_dictionary(path: str | Path) -> Dictionary:
    blob = Path(path).read_bytes()
    if blob[:4] != OTDC_MAGIC:
        raise ValueError(f"{path}: not an OTDC dictionary file")
    version, kind_tag, name_len = struct.unpack("<IBH", blob[4:11])
    if version != OTDC_VERSION:
        raise ValueError(f"{path}: unsupported OTDC version {version}")
    off = 11
    name = blob[off:off + name_len].decode("utf-8")
    off += name_len
    v, dim = struct.unpack("<II", blob[off:off + 8])
    off += 8
    off += 4 * v * dim  # skip the f32 block; the f64 block is authoritative
    counts = np.frombuffer(blob, dtype="<u8", count=v, offset=off).astype(np.int64)
    off += 8 * v
    words = np.frombuffer(blob, dtype="<f8", count=v * dim, offset=off)
    words = words.reshape(v, dim).copy()
    kind = KIND_GENERIC if kind_tag == 0 else KIND_CATEGORY
    return Dictionary(words, kind, name or None, counts)
