"""Spin-image descriptors: rotation-invariant local shape histograms.

Each keypoint gets a 2D histogram in cylindrical coordinates about its
surface normal: radial distance alpha on one axis, signed height beta on
the other. Rotating the cloud about the normal leaves (alpha, beta)
unchanged, which is what makes the descriptor pose-invariant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cloud import Keypoint, PointCloud, ensure_normals, select_keypoints
from .params import Params


class UnusableObjectError(ValueError):
    """Raised when no keypoint of an object view yields a usable descriptor."""


@dataclass
class SpinImage:
    """A normalized (IW+1) x (2*IW+1) accumulator grid around one keypoint."""

    bins: np.ndarray
    image_width: int
    support_length: float

    def __post_init__(self):
        expected = (self.image_width + 1, 2 * self.image_width + 1)
        if self.bins.shape != expected:
            raise ValueError(f"bins must be {expected}, got {self.bins.shape}")
        if not np.all(np.isfinite(self.bins)) or np.any(self.bins < 0):
            raise ValueError("bin values must be finite and non-negative")

    @property
    def is_empty(self) -> bool:
        return float(self.bins.sum()) == 0.0

    @property
    def vector(self) -> np.ndarray:
        """Flattened row-major view used for clustering and quantization."""
        return self.bins.ravel()


def compute_spin_image(cloud: PointCloud, kp: Keypoint, image_width: int,
                       support_length: float) -> SpinImage:
    """Accumulate the cylindrical-coordinate histogram for one keypoint.

    A cloud point x contributes when |beta| <= SL and alpha <= SL, where
    beta = n . (x - p) and alpha is the distance of x from the normal axis.
    Accumulation is nearest-bin with clamping, then L1 normalization.
    """
    if image_width < 1:
        raise ValueError("image_width must be >= 1")
    if support_length <= 0:
        raise ValueError("support_length must be positive")
    n = np.asarray(kp.normal, dtype=np.float64)
    if abs(np.linalg.norm(n) - 1.0) > 1e-6:
        raise ValueError("keypoint normal must be unit length")

    d = cloud.points - np.asarray(kp.position, dtype=np.float64)
    beta = d @ n
    alpha = np.sqrt(np.maximum(np.einsum("ij,ij->i", d, d) - beta * beta, 0.0))

    mask = (np.abs(beta) <= support_length) & (alpha <= support_length)
    bins = np.zeros((image_width + 1, 2 * image_width + 1), dtype=np.float64)
    if np.any(mask):
        # divide by SL before scaling so exact boundaries (beta=0, alpha=SL)
        # land on their mathematical bin
        rows = np.clip(np.floor(alpha[mask] / support_length * image_width)
                       .astype(np.int64), 0, image_width)
        cols = np.clip(np.floor((beta[mask] + support_length) / support_length
                                * image_width).astype(np.int64), 0, 2 * image_width)
        np.add.at(bins, (rows, cols), 1.0)
        bins /= bins.sum()
    return SpinImage(bins, image_width, support_length)


def describe_object(cloud: PointCloud, params: Params) -> list[SpinImage]:
    """Extract one spin image per voxel keypoint; empty descriptors are dropped."""
    if len(cloud) == 0:
        raise ValueError("cannot describe an empty cloud")
    cloud = ensure_normals(cloud, params.effective_normal_radius)
    keypoints = select_keypoints(cloud, params.voxel_size)
    images = [
        compute_spin_image(cloud, kp, params.image_width, params.support_length)
        for kp in keypoints
    ]
    images = [im for im in images if not im.is_empty]
    if not images:
        raise UnusableObjectError("all spin images are empty; object view is unusable")
    return images


def feature_matrix(images: list[SpinImage]) -> np.ndarray:
    """Stack descriptors into the (N, bins) float64 matrix used downstream."""
    if not images:
        raise ValueError("no descriptors to stack")
    return np.stack([im.vector for im in images])


def describe_object_matrix(cloud: PointCloud, params: Params) -> np.ndarray:
    return feature_matrix(describe_object(cloud, params))
