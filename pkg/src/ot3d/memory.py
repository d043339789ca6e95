"""Instance-based category memory.

A category is nothing more than its stored instances plus a private word
dictionary. Recognition measures the chi-squared distance between the
target's representation and every stored instance; the minimum is the
object-category distance (OCD) and the smallest OCD wins, unless it exceeds
the open-set threshold, in which case the object is Unknown.
"""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .codebook import (Dictionary, init_category_dictionary, load_dictionary,
                       save_dictionary, update_dictionary_incremental)
from .represent import ObjectRepresentation, encode_for_category
from .topics import TopicModel


def chi_squared(p: np.ndarray, q: np.ndarray) -> float:
    """0.5 * sum (p-q)^2 / (p+q), with empty bins (0/0) contributing zero."""
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise ValueError(f"histogram shapes differ: {p.shape} vs {q.shape}")
    s = p + q
    d = p - q
    out = np.zeros_like(s)
    np.divide(d * d, s, out=out, where=s > 0)
    return 0.5 * float(out.sum())


@dataclass
class InstanceRecord:
    """One stored object view: raw features plus its cached representation."""

    features: np.ndarray
    representation: ObjectRepresentation


@dataclass
class CategoryModel:
    name: str
    dictionary: Dictionary
    instances: list[InstanceRecord] = field(default_factory=list)
    created_at: int = 0


class InstanceStore:
    """All taught categories, their dictionaries and stored instances."""

    def __init__(self, specific_words: int, seed: int = 0,
                 specific_weight: float = 1.0):
        if specific_words < 1:
            raise ValueError("specific_words must be >= 1")
        self.specific_words = specific_words
        self.seed = int(seed)
        self.specific_weight = float(specific_weight)
        self.categories: dict[str, CategoryModel] = {}
        self.stamp = 0

    def __len__(self) -> int:
        return len(self.categories)

    def known(self) -> list[str]:
        return list(self.categories)

    def instance_counts(self) -> dict[str, int]:
        return {name: len(cat.instances) for name, cat in self.categories.items()}

    def total_instances(self) -> int:
        return sum(len(cat.instances) for cat in self.categories.values())

    def _category_seed(self, name: str) -> int:
        # stable per-category derivation so rebuilds are reproducible
        return (self.seed * 2654435761 + zlib.crc32(name.encode())) % (2**63)


@dataclass
class ClassificationResult:
    """Outcome of one query: winning label (None = Unknown) and all OCDs."""

    label: str | None
    per_category_ocd: dict[str, float]
    margin: float

    def __post_init__(self):
        if any(v < 0 for v in self.per_category_ocd.values()):
            raise ValueError("OCD values must be non-negative")

    @property
    def ranked(self) -> list[tuple[str, float]]:
        return sorted(self.per_category_ocd.items(), key=lambda kv: (kv[1], kv[0]))


def teach(store: InstanceStore, name: str, object_views: list[np.ndarray],
          model: TopicModel) -> InstanceStore:
    """Create a new category from one or more object views.

    The category dictionary is clustered from all the views' features, then
    each view is stored with its cached representation.
    """
    if name in store.categories:
        raise ValueError(f"category {name!r} already exists")
    if not object_views:
        raise ValueError("teach needs at least one object view")
    views = [np.asarray(v, dtype=np.float64) for v in object_views]
    if any(v.ndim != 2 or v.shape[0] == 0 for v in views):
        raise ValueError("every view must be a non-empty (N, dim) feature matrix")

    pooled = np.concatenate(views)
    dictionary = init_category_dictionary(
        pooled, store.specific_words, store._category_seed(name), name)
    cat = CategoryModel(name=name, dictionary=dictionary, created_at=store.stamp)
    store.stamp += 1
    for v in views:
        cat.instances.append(InstanceRecord(v, encode_for_category(
            v, model, dictionary, store.specific_weight)))
    store.categories[name] = cat
    return store


def correct(store: InstanceStore, name: str, object_view: np.ndarray,
            model: TopicModel) -> InstanceStore:
    """Add a misclassified view to its true category.

    The category dictionary absorbs the new features incrementally, so every
    cached representation of the category is recomputed against it.
    """
    cat = store.categories.get(name)
    if cat is None:
        raise ValueError(f"unknown category {name!r}")
    view = np.asarray(object_view, dtype=np.float64)
    if view.ndim != 2 or view.shape[0] == 0:
        raise ValueError("object view must be a non-empty (N, dim) feature matrix")

    update_dictionary_incremental(cat.dictionary, view)
    cat.instances.append(InstanceRecord(view, None))
    store.stamp += 1
    for inst in cat.instances:
        inst.representation = encode_for_category(
            inst.features, model, cat.dictionary, store.specific_weight)
    return store


def ocd_from_representation(rep: ObjectRepresentation, cat: CategoryModel) -> float:
    """Minimum chi-squared distance from ``rep`` to the category's instances."""
    if not cat.instances:
        raise ValueError(f"category {cat.name!r} has no instances")
    target = rep.vector
    return min(chi_squared(target, inst.representation.vector)
               for inst in cat.instances)


def ocd(target_features: np.ndarray, cat: CategoryModel, model: TopicModel,
        specific_weight: float = 1.0) -> float:
    """Object-category distance: encode the target through the category's
    dictionary, then take the minimum instance distance."""
    rep = encode_for_category(target_features, model, cat.dictionary,
                              specific_weight)
    return ocd_from_representation(rep, cat)


def classify(target_features: np.ndarray, store: InstanceStore, model: TopicModel,
             unknown_threshold: float = math.inf) -> ClassificationResult:
    """Minimum-OCD classification with an open-set cutoff.

    An empty store or a best distance at or above the threshold yields
    Unknown (label None). The margin is runner-up minus best, infinite when
    fewer than two categories are known.
    """
    if unknown_threshold <= 0:
        raise ValueError("unknown_threshold must be positive")
    distances = {name: ocd(target_features, cat, model, store.specific_weight)
                 for name, cat in store.categories.items()}
    if not distances:
        return ClassificationResult(None, {}, math.inf)
    ordered = sorted(distances.items(), key=lambda kv: (kv[1], kv[0]))
    best_name, best = ordered[0]
    margin = ordered[1][1] - best if len(ordered) > 1 else math.inf
    label = best_name if best < unknown_threshold else None
    return ClassificationResult(label, distances, margin)


# ---------------------------------------------------------------------------
# Persistence: a store directory with a JSON manifest and one dictionary +
# one feature/representation bundle per category.
# ---------------------------------------------------------------------------

def save_store(store: InstanceStore, root: str | Path,
               config_hash: str = "") -> None:
    root = Path(root)
    (root / "categories").mkdir(parents=True, exist_ok=True)
    manifest = {
        "version": 1,
        "specific_words": store.specific_words,
        "specific_weight": store.specific_weight,
        "seed": store.seed,
        "stamp": store.stamp,
        "config_hash": config_hash,
        "categories": [
            {
                "name": cat.name,
                "file": f"cat_{i:04d}",
                "created_at": cat.created_at,
                "instances": len(cat.instances),
            }
            for i, cat in enumerate(store.categories.values())
        ],
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    for i, cat in enumerate(store.categories.values()):
        save_dictionary(cat.dictionary, root / "categories" / f"cat_{i:04d}.otdc")
        arrays = {}
        for j, inst in enumerate(cat.instances):
            arrays[f"feat_{j:04d}"] = inst.features
            arrays[f"ht_{j:04d}"] = inst.representation.h_t
            arrays[f"hc_{j:04d}"] = inst.representation.h_c
        np.savez(root / "categories" / f"cat_{i:04d}.npz", **arrays)


def load_store(root: str | Path) -> tuple[InstanceStore, str]:
    """Load a store directory; returns (store, config_hash)."""
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest.get("version") != 1:
        raise ValueError(f"{root}: unsupported store version")
    store = InstanceStore(manifest["specific_words"], manifest["seed"],
                          manifest.get("specific_weight", 1.0))
    store.stamp = manifest["stamp"]
    for entry in manifest["categories"]:
        name = entry["name"]
        stem = entry["file"]
        dictionary = load_dictionary(root / "categories" / f"{stem}.otdc")
        cat = CategoryModel(name=name, dictionary=dictionary,
                            created_at=entry["created_at"])
        with np.load(root / "categories" / f"{stem}.npz") as bundle:
            for i in range(entry["instances"]):
                features = bundle[f"feat_{i:04d}"]
                rep = ObjectRepresentation(
                    h_t=bundle[f"ht_{i:04d}"],
                    h_c=bundle[f"hc_{i:04d}"],
                    category_tag=name,
                    raw_features=features,
                    specific_weight=store.specific_weight,
                )
                cat.instances.append(InstanceRecord(features, rep))
        store.categories[name] = cat
    return store, manifest.get("config_hash", "")
