"""Incremental latent-topic model over quantized shape features.

A collapsed Gibbs sampler maintains word-topic and object-topic counters.
New objects are absorbed by resampling only their own assignments against
the frozen rest; a full unsupervised refresh resweeps every retained
object. Topics are then back-projected into descriptor space as convex
combinations of dictionary words, so any feature can be quantized against
them with plain nearest-neighbor search.
"""

from __future__ import annotations

import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .codebook import Dictionary

OTLM_MAGIC = b"OTLM"
OTLM_VERSION = 1

# opt-in counter audits after every Gibbs sweep (slow; for debugging)
DEBUG_SWEEP_CHECKS = bool(os.environ.get("OT3D_DEBUG_LDA"))


def categorical_draw(weights: np.ndarray, u) -> int | np.ndarray:
    """Inverse-CDF draw from unnormalized non-negative weights.

    ``u`` is a uniform [0, 1) variate (scalar or array); the same routine
    serves the sampler and the statistical tests that audit it.
    """
    cum = np.cumsum(weights)
    return np.searchsorted(cum, np.asarray(u) * cum[-1], side="right")


@dataclass
class ObjectAssignment:
    """Per-object sampler state: word indices, their topics, topic tallies."""

    words: np.ndarray   # (N,) int64 word indices
    z: np.ndarray       # (N,) int64 topic assignments
    n_ok: np.ndarray    # (K,) int64 per-topic counts for this object


class TopicModel:
    """Collapsed-Gibbs LDA state plus synthesized descriptor-space topics."""

    def __init__(self, k: int, v: int, alpha: float = 1.0, beta: float = 0.1,
                 seed: int = 0):
        if k < 1 or v < 1:
            raise ValueError("need at least one topic and one word")
        if alpha <= 0 or beta <= 0:
            raise ValueError("alpha and beta must be positive")
        self.k = k
        self.v = v
        self.alpha = float(alpha)
        self.beta = float(beta)
        self.n_wk = np.zeros((v, k), dtype=np.int64)
        self.n_k = np.zeros(k, dtype=np.int64)
        self.objects: list[ObjectAssignment] = []
        self.topics: np.ndarray | None = None  # (K, dim) after synthesis
        self.seed = int(seed)
        self.rng = np.random.default_rng(seed)

    # -- sampling core ------------------------------------------------------

    def conditional(self, obj: ObjectAssignment, w: int) -> np.ndarray:
        """Unnormalized Gibbs conditional for a word of ``obj`` already
        removed from the counters."""
        return ((self.n_wk[w] + self.beta) / (self.n_k + self.v * self.beta)
                * (obj.n_ok + self.alpha))

    def _remove(self, obj: ObjectAssignment, i: int) -> None:
        w, k = obj.words[i], obj.z[i]
        self.n_wk[w, k] -= 1
        self.n_k[k] -= 1
        obj.n_ok[k] -= 1

    def _insert(self, obj: ObjectAssignment, i: int, k: int) -> None:
        w = obj.words[i]
        obj.z[i] = k
        self.n_wk[w, k] += 1
        self.n_k[k] += 1
        obj.n_ok[k] += 1

    def _sweep(self, obj: ObjectAssignment) -> None:
        for i in range(obj.words.size):
            self._remove(obj, i)
            weights = self.conditional(obj, int(obj.words[i]))
            k_new = int(categorical_draw(weights, self.rng.random()))
            self._insert(obj, i, k_new)
        if DEBUG_SWEEP_CHECKS:
            self.check_invariants()

    def absorb_object(self, words, sweeps: int) -> "TopicModel":
        """Add one object and Gibbs-sample its assignments for ``sweeps`` passes.

        Other objects' assignments stay frozen; only the shared counters see
        the new object. Empty word lists leave the model untouched.
        """
        words = np.asarray(words, dtype=np.int64).ravel()
        if words.size == 0:
            return self
        if sweeps < 1:
            raise ValueError("need at least one sweep")
        if words.min() < 0 or words.max() >= self.v:
            raise ValueError(f"word indices must be in [0, {self.v})")

        obj = ObjectAssignment(words=words.copy(),
                               z=np.empty(words.size, dtype=np.int64),
                               n_ok=np.zeros(self.k, dtype=np.int64))
        init = self.rng.integers(0, self.k, size=words.size)
        for i in range(words.size):
            self._insert(obj, i, int(init[i]))
        # registered before sweeping so counter audits hold mid-absorption
        self.objects.append(obj)
        for _ in range(sweeps):
            self._sweep(obj)
        return self

    def refresh(self, sweeps: int, dictionary: Dictionary | None = None) -> "TopicModel":
        """Unsupervised resampling of every retained object's assignments.

        With a dictionary supplied, topics are re-synthesized afterwards;
        ``sweeps == 0`` is a no-op.
        """
        if sweeps < 0:
            raise ValueError("sweeps must be >= 0")
        if sweeps == 0:
            return self
        for _ in range(sweeps):
            for obj in self.objects:
                self._sweep(obj)
        if dictionary is not None:
            self.synthesize_topics(dictionary)
        return self

    # -- estimation ---------------------------------------------------------

    def estimate_phi(self) -> np.ndarray:
        """Smoothed word-topic matrix, (V, K); each column sums to one."""
        return (self.n_wk + self.beta) / (self.n_k + self.v * self.beta)

    def synthesize_topics(self, dictionary: Dictionary) -> np.ndarray:
        """Back-project topics into descriptor space and L1-normalize them.

        Topic k is the phi-weighted sum of all dictionary words; the result
        is cached on the model for nearest-topic quantization.
        """
        if dictionary.size != self.v:
            raise ValueError(
                f"dictionary has {dictionary.size} words, model expects {self.v}")
        phi = self.estimate_phi()
        raw = phi.T @ dictionary.words
        norms = np.abs(raw).sum(axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        self.topics = raw / norms
        return self.topics

    def assign_topic(self, feature: np.ndarray) -> int:
        """Index of the nearest synthesized topic; ties break low."""
        if self.topics is None:
            raise ValueError("topics not synthesized yet")
        d = self.topics - np.asarray(feature, dtype=np.float64)
        return int(np.argmin(np.einsum("ij,ij->i", d, d)))

    def assign_topics(self, features: np.ndarray) -> np.ndarray:
        if self.topics is None:
            raise ValueError("topics not synthesized yet")
        features = np.asarray(features, dtype=np.float64)
        d = (
            np.einsum("ij,ij->i", features, features)[:, None]
            - 2.0 * features @ self.topics.T
            + np.einsum("ij,ij->i", self.topics, self.topics)[None, :]
        )
        return np.argmin(d, axis=1)

    # -- bookkeeping --------------------------------------------------------

    def check_invariants(self) -> None:
        """Assert counter conservation; cheap enough for test-time use."""
        if np.any(self.n_wk < 0) or np.any(self.n_k < 0):
            raise AssertionError("negative counters")
        if not np.array_equal(self.n_wk.sum(axis=0), self.n_k):
            raise AssertionError("sum_w n_wk != n_k")
        totals = np.zeros((self.v, self.k), dtype=np.int64)
        for obj in self.objects:
            if int(obj.n_ok.sum()) != obj.words.size:
                raise AssertionError("sum_k n_ok != object word count")
            np.add.at(totals, (obj.words, obj.z), 1)
        if not np.array_equal(totals, self.n_wk):
            raise AssertionError("per-object assignments disagree with n_wk")

    def copy(self) -> "TopicModel":
        other = TopicModel(self.k, self.v, self.alpha, self.beta, self.seed)
        other.n_wk = self.n_wk.copy()
        other.n_k = self.n_k.copy()
        other.objects = [
            ObjectAssignment(o.words.copy(), o.z.copy(), o.n_ok.copy())
            for o in self.objects
        ]
        other.topics = None if self.topics is None else self.topics.copy()
        other.rng = np.random.default_rng()
        other.rng.bit_generator.state = self.rng.bit_generator.state
        return other


# -- module-level wrappers matching the operational vocabulary --------------

def absorb_object(model: TopicModel, words, sweeps: int) -> TopicModel:
    return model.absorb_object(words, sweeps)


def estimate_phi(model: TopicModel) -> np.ndarray:
    return model.estimate_phi()


def synthesize_topics(model: TopicModel, dictionary: Dictionary) -> np.ndarray:
    return model.synthesize_topics(dictionary)


def refresh_topics(model: TopicModel, sweeps: int,
                   dictionary: Dictionary | None = None) -> TopicModel:
    return model.refresh(sweeps, dictionary)


def assign_topic(feature: np.ndarray, model: TopicModel) -> int:
    return model.assign_topic(feature)


# ---------------------------------------------------------------------------
# Persistence: the versioned OTLM binary layout. The synthesized topics and
# the generator state ride along so a reloaded model classifies and samples
# exactly like the live one.
# ---------------------------------------------------------------------------

def _pack_u128(value: int) -> bytes:
    return struct.pack("<QQ", value & 0xFFFFFFFFFFFFFFFF, value >> 64)


def _unpack_u128(blob: bytes, off: int) -> tuple[int, int]:
    lo, hi = struct.unpack_from("<QQ", blob, off)
    return (hi << 64) | lo, off + 16


def save_model(model: TopicModel, path: str | Path) -> None:
    blob = bytearray(OTLM_MAGIC)
    blob += struct.pack("<I", OTLM_VERSION)
    dim = 0 if model.topics is None else model.topics.shape[1]
    blob += struct.pack("<IIIdd", model.k, model.v, dim, model.alpha, model.beta)
    blob += struct.pack("<q", model.seed)

    state = model.rng.bit_generator.state
    blob += _pack_u128(state["state"]["state"])
    blob += _pack_u128(state["state"]["inc"])
    blob += struct.pack("<BI", state["has_uint32"], state["uinteger"])

    if model.topics is not None:
        blob += model.topics.astype("<f8").tobytes()
    blob += model.n_wk.astype("<i8").tobytes()
    blob += model.n_k.astype("<i8").tobytes()
    blob += struct.pack("<I", len(model.objects))
    for obj in model.objects:
        blob += struct.pack("<I", obj.words.size)
        blob += obj.words.astype("<u4").tobytes()
        blob += obj.z.astype("<u4").tobytes()
    Path(path).write_bytes(bytes(blob))


def load_model(path: str | Path) -> TopicModel:
    blob = Path(path).read_bytes()
    if blob[:4] != OTLM_MAGIC:
        raise ValueError(f"{path}: not an OTLM model file")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != OTLM_VERSION:
        raise ValueError(f"{path}: unsupported OTLM version {version}")
    k, v, dim, alpha, beta = struct.unpack_from("<IIIdd", blob, 8)
    off = 8 + 28
    (seed,) = struct.unpack_from("<q", blob, off)
    off += 8

    model = TopicModel(k, v, alpha, beta, seed)
    pcg_state, off = _unpack_u128(blob, off)
    pcg_inc, off = _unpack_u128(blob, off)
    has_uint32, uinteger = struct.unpack_from("<BI", blob, off)
    off += 5
    model.rng.bit_generator.state = {
        "bit_generator": "PCG64",
        "state": {"state": pcg_state, "inc": pcg_inc},
        "has_uint32": int(has_uint32),
        "uinteger": int(uinteger),
    }

    if dim > 0:
        model.topics = np.frombuffer(blob, dtype="<f8", count=k * dim,
                                     offset=off).reshape(k, dim).copy()
        off += 8 * k * dim
    model.n_wk = np.frombuffer(blob, dtype="<i8", count=v * k,
                               offset=off).reshape(v, k).copy()
    off += 8 * v * k
    model.n_k = np.frombuffer(blob, dtype="<i8", count=k, offset=off).copy()
    off += 8 * k
    (n_objects,) = struct.unpack_from("<I", blob, off)
    off += 4
    for _ in range(n_objects):
        (n_words,) = struct.unpack_from("<I", blob, off)
        off += 4
        words = np.frombuffer(blob, dtype="<u4", count=n_words,
                              offset=off).astype(np.int64)
        off += 4 * n_words
        z = np.frombuffer(blob, dtype="<u4", count=n_words,
                          offset=off).astype(np.int64)
        off += 4 * n_words
        n_ok = np.bincount(z, minlength=k).astype(np.int64)
        model.objects.append(ObjectAssignment(words, z, n_ok))
    model.check_invariants()
    return model
