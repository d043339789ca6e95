"""The learning agent: one generic topic model shared by all categories,
plus the instance store with its per-category dictionaries.

The generic side is bootstrapped once from an unlabeled pool of object
views (dictionary by k-means, then every pooled object absorbed into the
topic model). Afterwards teach/correct grow the supervised side; the topic
model keeps absorbing new views incrementally, while topic vectors are only
re-synthesized on an explicit refresh so cached encodings stay valid
between maintenance points.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import memory
from .codebook import Dictionary, assign_words, build_dictionary, build_pool
from .memory import ClassificationResult, InstanceStore
from .params import Params
from .represent import encode_generic, recompute_all
from .topics import TopicModel

REPRESENTATION_MODES = ("full", "generic")


@dataclass
class GenericModel:
    """The shared, unsupervised half of the learner."""

    dictionary: Dictionary
    topics: TopicModel


def bootstrap_generic_model(feature_sets: list[np.ndarray], params: Params,
                            pool_fraction: float | None = None) -> GenericModel:
    """Build the generic dictionary and topic model from unlabeled views.

    A seeded fraction of the views is pooled and clustered into V words;
    every pooled view is then quantized and absorbed into the topic model,
    and topics are synthesized. The word count is clamped when the pool is
    smaller than V (tiny interactive sessions).
    """
    if not feature_sets:
        raise ValueError("bootstrap needs at least one object view")
    fraction = params.pool_fraction if pool_fraction is None else pool_fraction
    pool, selected = build_pool(feature_sets, fraction, seed=params.seed)
    v_eff = min(params.generic_words, pool.shape[0])
    dictionary = build_dictionary(pool, v_eff, seed=params.seed)
    model = TopicModel(params.topics, v_eff, params.alpha, params.beta,
                       seed=params.seed)
    for i in selected:
        words = assign_words(feature_sets[i], dictionary)
        model.absorb_object(words, params.gibbs_sweeps)
    model.synthesize_topics(dictionary)
    return GenericModel(dictionary, model)


class LearningAgent:
    """Teach/correct/classify against the shared generic model.

    ``representation="generic"`` is the ablation that drops the
    category-specific histogram block (topic histogram only).
    """

    def __init__(self, generic: GenericModel, params: Params,
                 representation: str = "full"):
        if representation not in REPRESENTATION_MODES:
            raise ValueError(f"representation must be one of {REPRESENTATION_MODES}")
        self.generic = generic
        self.params = params
        self.representation = representation
        self.store = InstanceStore(params.specific_words, seed=params.seed,
                                   specific_weight=params.specific_weight)

    # -- supervised actions --------------------------------------------------

    def teach(self, name: str, views: list[np.ndarray]) -> None:
        memory.teach(self.store, name, views, self.generic.topics)
        for view in views:
            self._absorb(view)

    def correct(self, name: str, view: np.ndarray) -> None:
        memory.correct(self.store, name, view, self.generic.topics)
        self._absorb(view)

    def _absorb(self, view: np.ndarray) -> None:
        words = assign_words(view, self.generic.dictionary)
        self.generic.topics.absorb_object(words, self.params.gibbs_sweeps)

    # -- recognition ----------------------------------------------------------

    def classify(self, view: np.ndarray,
                 unknown_threshold: float | None = None) -> ClassificationResult:
        threshold = (self.params.unknown_threshold
                     if unknown_threshold is None else unknown_threshold)
        if self.representation == "full":
            return memory.classify(view, self.store, self.generic.topics, threshold)
        return self._classify_generic_only(view, threshold)

    def predict(self, view: np.ndarray, vid: str | None = None) -> str | None:
        """Closed-set label used by the teacher protocol (argmin, no Unknown).

        ``vid`` identifies the view for protocol bookkeeping; the agent never
        looks at it.
        """
        del vid
        return self.classify(view, unknown_threshold=math.inf).label

    def _classify_generic_only(self, view: np.ndarray,
                               threshold: float) -> ClassificationResult:
        target = encode_generic(view, self.generic.topics)
        distances = {}
        for name, cat in self.store.categories.items():
            distances[name] = min(
                memory.chi_squared(target, inst.representation.h_t)
                for inst in cat.instances)
        if not distances:
            return ClassificationResult(None, {}, math.inf)
        ordered = sorted(distances.items(), key=lambda kv: (kv[1], kv[0]))
        best_name, best = ordered[0]
        margin = ordered[1][1] - best if len(ordered) > 1 else math.inf
        label = best_name if best < threshold else None
        return ClassificationResult(label, distances, margin)

    # -- maintenance -----------------------------------------------------------

    def refresh_topics(self, sweeps: int | None = None) -> None:
        """Resample all absorbed objects, re-synthesize topics, re-encode store."""
        g = self.params.gibbs_sweeps if sweeps is None else sweeps
        self.generic.topics.refresh(g, self.generic.dictionary)
        recompute_all(self.store, self.generic.topics)

    def rebuild_dictionary(self) -> None:
        """Re-cluster the generic dictionary from all stored raw features and
        rebuild the topic model on top of it."""
        views = [inst.features
                 for cat in self.store.categories.values()
                 for inst in cat.instances]
        if not views:
            return
        self.generic = bootstrap_generic_model(views, self.params, pool_fraction=1.0)
        recompute_all(self.store, self.generic.topics)
