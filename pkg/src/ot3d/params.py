"""Pipeline parameters and the flat key=value config file format.

All tunables of the recognition pipeline live in one dataclass so that a
single config file drives feature extraction, dictionary building, topic
learning and the teacher protocol alike.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass
from pathlib import Path


@dataclass
class Params:
    """Tuning knobs for the full pipeline.

    Defaults are the best-performing configuration found on the restaurant
    object benchmark (voxel size 0.02 m, 8-bin spin images with 0.09 m
    support, 90 generic words, 70 topics, 70 specific words per category).
    """

    voxel_size: float = 0.02          # keypoint voxel edge, meters
    image_width: int = 8              # spin-image bins (IW)
    support_length: float = 0.09      # spin-image support, meters
    normal_radius: float | None = None  # plane-fit radius; None -> 2 * voxel_size
    generic_words: int = 90           # V, generic dictionary size
    topics: int = 70                  # K, latent topic count
    specific_words: int = 70          # V^c, per-category dictionary size
    alpha: float = 1.0                # Dirichlet prior on object-topic mixtures
    beta: float = 0.1                 # Dirichlet prior on topic-word distributions
    gibbs_sweeps: int = 50            # G, sweeps per absorbed object
    pool_fraction: float = 0.75       # share of objects pooled for the generic dictionary
    specific_weight: float = 1.0      # weight of the category block in distances
    unknown_threshold: float = 0.35   # open-set cutoff; protocol runs override with inf
    seed: int = 0

    def __post_init__(self):
        if self.voxel_size <= 0 or self.support_length <= 0:
            raise ValueError("voxel_size and support_length must be positive")
        if self.image_width < 1:
            raise ValueError("image_width must be >= 1")
        if min(self.generic_words, self.topics, self.specific_words) < 1:
            raise ValueError("dictionary and topic sizes must be >= 1")
        if self.alpha <= 0 or self.beta <= 0:
            raise ValueError("alpha and beta must be positive")
        if not 0 < self.pool_fraction <= 1:
            raise ValueError("pool_fraction must be in (0, 1]")
        if self.specific_weight < 0:
            raise ValueError("specific_weight must be >= 0")

    @property
    def effective_normal_radius(self) -> float:
        return 2.0 * self.voxel_size if self.normal_radius is None else self.normal_radius

    @property
    def descriptor_size(self) -> int:
        return (self.image_width + 1) * (2 * self.image_width + 1)

    def replace(self, **kwargs) -> "Params":
        return dataclasses.replace(self, **kwargs)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Stable short hash used to detect store/config mismatches."""
        blob = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _parse_value(raw: str):
    raw = raw.strip()
    if raw.startswith('"') and raw.endswith('"') and len(raw) >= 2:
        return raw[1:-1]
    low = raw.lower()
    if low in ("true", "false"):
        return low == "true"
    if low in ("none", "null"):
        return None
    if low in ("inf", "+inf"):
        return math.inf
    try:
        return int(raw)
    except ValueError:
        pass
    try:
        return float(raw)
    except ValueError:
        return raw


def load_config(path: str | Path) -> Params:
    """Read a flat ``key = value`` config file into Params.

    Lines starting with ``#`` and blank lines are ignored; unknown keys are
    rejected so typos fail loudly.
    """
    fields = {f.name for f in dataclasses.fields(Params)}
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, raw = line.split("=", 1)
        key = key.strip()
        if key not in fields:
            raise ValueError(f"{path}:{lineno}: unknown parameter {key!r}")
        values[key] = _parse_value(raw)
    return Params(**values)


def save_config(params: Params, path: str | Path) -> None:
    lines = ["# ot3d pipeline configuration"]
    for field in dataclasses.fields(Params):
        value = getattr(params, field.name)
        if value is None:
            rendered = "none"
        elif isinstance(value, bool):
            rendered = "true" if value else "false"
        elif isinstance(value, float) and math.isinf(value):
            rendered = "inf"
        else:
            rendered = repr(value) if not isinstance(value, str) else f'"{value}"'
        lines.append(f"{field.name} = {rendered}")
    Path(path).write_text("\n".join(lines) + "\n")
