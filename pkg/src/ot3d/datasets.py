"""Dataset indexing and the view providers the teacher protocol draws from.

A dataset index maps category names to ordered view files. Providers add
lazy, cached feature extraction on top, either from files on disk or from
in-memory synthetic clouds, so one protocol implementation serves both.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cloud import CloudFormatError, PointCloud, load_cloud
from .params import Params
from .spin import describe_object_matrix
from .synthetic import FAMILIES, SyntheticShapeSpec, generate_synthetic

log = logging.getLogger(__name__)

_CLOUD_SUFFIXES = {".pcd", ".ot3d", ".txt"}


@dataclass
class DatasetIndex:
    categories: dict[str, list[Path]]
    provenance: str = "unknown"
    warnings: list[str] = field(default_factory=list)

    def total_views(self) -> int:
        return sum(len(v) for v in self.categories.values())


def _try_header(path: Path) -> str | None:
    """Return a warning string when the file cannot be parsed as a cloud."""
    try:
        load_cloud(path)
        return None
    except CloudFormatError as exc:
        return str(exc)
    except OSError as exc:
        return f"{path}: {exc}"


def load_dataset(root: str | Path, layout: str = "flat") -> DatasetIndex:
    """Index a directory tree of per-category cloud files.

    ``layout="flat"`` expects category/view files; ``layout="nested"``
    expects category/instance/view files. Unreadable or malformed files are
    excluded and reported in the index warnings.
    """
    root = Path(root)
    if layout not in ("flat", "nested"):
        raise ValueError(f"unknown layout {layout!r}")
    if not root.is_dir():
        raise ValueError(f"dataset root {root} does not exist")

    categories: dict[str, list[Path]] = {}
    warnings: list[str] = []
    for cat_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if layout == "flat":
            files = sorted(p for p in cat_dir.iterdir()
                           if p.is_file() and p.suffix in _CLOUD_SUFFIXES)
        else:
            files = sorted(p for inst in sorted(cat_dir.iterdir()) if inst.is_dir()
                           for p in sorted(inst.iterdir())
                           if p.is_file() and p.suffix in _CLOUD_SUFFIXES)
        kept = []
        for f in files:
            problem = _try_header(f)
            if problem is None:
                kept.append(f)
            else:
                warnings.append(problem)
                log.warning("excluding %s: %s", f, problem)
        if kept:
            categories[cat_dir.name] = kept
    if not categories:
        raise ValueError(f"no categories with readable views under {root}")
    return DatasetIndex(categories, provenance=root.name, warnings=warnings)


def split_train_pool(index: DatasetIndex, fraction: float, seed: int):
    """Seeded per-category split into (pool paths, held-out paths).

    Disjoint and exhaustive; a category with a single view goes entirely to
    the pool with a warning.
    """
    if not 0 < fraction < 1:
        raise ValueError("fraction must be in (0, 1)")
    rng = np.random.default_rng(seed)
    pool: list[Path] = []
    held: list[Path] = []
    for name in sorted(index.categories):
        views = index.categories[name]
        if len(views) == 1:
            log.warning("category %r has a single view; keeping it in the pool", name)
            pool.extend(views)
            continue
        order = rng.permutation(len(views))
        n_pool = int(np.ceil(fraction * len(views)))
        pool.extend(views[i] for i in sorted(order[:n_pool]))
        held.extend(views[i] for i in sorted(order[n_pool:]))
    return pool, held


# ---------------------------------------------------------------------------
# View providers: category -> view ids -> cached feature matrices.
# ---------------------------------------------------------------------------

class ViewProvider:
    """Lazy feature access for a fixed set of views."""

    def __init__(self, params: Params):
        self.params = params
        self._views: dict[str, list[str]] = {}
        self._cache: dict[str, np.ndarray] = {}

    def categories(self) -> list[str]:
        return list(self._views)

    def views(self, category: str) -> list[str]:
        return list(self._views[category])

    def all_view_ids(self) -> list[str]:
        return [vid for views in self._views.values() for vid in views]

    def features(self, vid: str) -> np.ndarray:
        if vid not in self._cache:
            self._cache[vid] = describe_object_matrix(self._load(vid), self.params)
        return self._cache[vid]

    def _load(self, vid: str) -> PointCloud:
        raise NotImplementedError


class FileDataset(ViewProvider):
    """Views backed by cloud files of a DatasetIndex."""

    def __init__(self, index: DatasetIndex, params: Params):
        super().__init__(params)
        self._paths: dict[str, Path] = {}
        for name in sorted(index.categories):
            vids = []
            for path in index.categories[name]:
                vid = f"{name}/{path.name}"
                self._paths[vid] = path
                vids.append(vid)
            self._views[name] = vids

    def _load(self, vid: str) -> PointCloud:
        return load_cloud(self._paths[vid])


class SyntheticDataset(ViewProvider):
    """In-memory seeded views; analytic normals skip estimation entirely."""

    def __init__(self, params: Params, families=FAMILIES, views_per_category: int = 20,
                 points: int = 1200, noise_sigma: float = 0.0015,
                 scale_jitter: float = 0.05, seed: int = 0):
        super().__init__(params)
        self._specs: dict[str, SyntheticShapeSpec] = {}
        for fam_i, family in enumerate(families):
            vids = []
            for j in range(views_per_category):
                vid = f"{family}/{j:03d}"
                self._specs[vid] = SyntheticShapeSpec(
                    family=family, points=points, noise_sigma=noise_sigma,
                    scale_jitter=scale_jitter,
                    seed=seed * 1_000_003 + fam_i * 1_009 + j)
                vids.append(vid)
            self._views[family] = vids

    def _load(self, vid: str) -> PointCloud:
        return generate_synthetic(self._specs[vid])


def write_synthetic_dataset(root: str | Path, families=FAMILIES,
                            views_per_category: int = 20, points: int = 1200,
                            noise_sigma: float = 0.0015, scale_jitter: float = 0.05,
                            seed: int = 0, fmt: str = "pcd") -> DatasetIndex:
    """Materialize a synthetic dataset as cloud files for the CLI tools."""
    from .cloud import save_ot3d, save_pcd

    root = Path(root)
    categories: dict[str, list[Path]] = {}
    for fam_i, family in enumerate(families):
        cat_dir = root / family
        cat_dir.mkdir(parents=True, exist_ok=True)
        paths = []
        for j in range(views_per_category):
            spec = SyntheticShapeSpec(
                family=family, points=points, noise_sigma=noise_sigma,
                scale_jitter=scale_jitter, seed=seed * 1_000_003 + fam_i * 1_009 + j)
            cloud = generate_synthetic(spec)
            path = cat_dir / f"view_{j:03d}.{fmt if fmt != 'binary' else 'ot3d'}"
            if path.suffix == ".ot3d":
                save_ot3d(cloud, path)
            else:
                save_pcd(cloud, path)
            paths.append(path)
        categories[family] = paths
    return DatasetIndex(categories, provenance="synthetic")
