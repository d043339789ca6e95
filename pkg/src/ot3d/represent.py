"""Object representations: a generic topic histogram concatenated with a
category-specific word histogram.

The two blocks are L1-normalized separately before concatenation so that
objects with different keypoint counts remain comparable under the
chi-squared distance, and so neither block dominates the other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codebook import KIND_CATEGORY, Dictionary, assign_words
from .topics import TopicModel


@dataclass
class ObjectRepresentation:
    """Encoded view: topic histogram h_t, word histogram h_c, raw features.

    ``specific_weight`` scales the category block when the two histograms are
    concatenated for distance computation; scaling a block by w multiplies
    its chi-squared contribution by exactly w.
    """

    h_t: np.ndarray
    h_c: np.ndarray
    category_tag: str
    raw_features: np.ndarray
    specific_weight: float = 1.0

    def __post_init__(self):
        self.h_t = np.asarray(self.h_t, dtype=np.float64)
        self.h_c = np.asarray(self.h_c, dtype=np.float64)
        if self.raw_features.ndim != 2 or self.raw_features.shape[0] == 0:
            raise ValueError("raw_features must be a non-empty (N, dim) matrix")

    @property
    def vector(self) -> np.ndarray:
        if self.specific_weight == 1.0:
            return np.concatenate([self.h_t, self.h_c])
        return np.concatenate([self.h_t, self.specific_weight * self.h_c])


def _tally(indices: np.ndarray, length: int) -> np.ndarray:
    hist = np.bincount(indices, minlength=length).astype(np.float64)
    return hist / hist.sum()


def encode_generic(features: np.ndarray, model: TopicModel) -> np.ndarray:
    """Normalized histogram of nearest-topic assignments, length K."""
    features = np.asarray(features, dtype=np.float64)
    if features.size == 0:
        raise ValueError("cannot encode an object with no features")
    return _tally(model.assign_topics(features), model.k)


def encode_specific(features: np.ndarray, dictionary: Dictionary) -> np.ndarray:
    """Normalized histogram of nearest-word assignments, length V^c."""
    if dictionary.kind != KIND_CATEGORY:
        raise ValueError("encode_specific needs a category dictionary")
    features = np.asarray(features, dtype=np.float64)
    if features.size == 0:
        raise ValueError("cannot encode an object with no features")
    return _tally(assign_words(features, dictionary), dictionary.size)


def encode_for_category(features: np.ndarray, model: TopicModel,
                        dictionary: Dictionary,
                        specific_weight: float = 1.0) -> ObjectRepresentation:
    """Full representation of a view as seen through one category's dictionary."""
    features = np.asarray(features, dtype=np.float64)
    return ObjectRepresentation(
        h_t=encode_generic(features, model),
        h_c=encode_specific(features, dictionary),
        category_tag=dictionary.category,
        raw_features=features,
        specific_weight=specific_weight,
    )


def recompute_all(store, model: TopicModel):
    """Re-encode every stored instance against the current topics and its
    category's current dictionary. Instance counts never change."""
    weight = getattr(store, "specific_weight", 1.0)
    for cat in store.categories.values():
        for idx, inst in enumerate(cat.instances):
            if inst.features is None or inst.features.size == 0:
                raise ValueError(
                    f"instance {idx} of {cat.name!r} has no retained features")
            inst.representation = encode_for_category(
                inst.features, model, cat.dictionary, weight)
    return store
