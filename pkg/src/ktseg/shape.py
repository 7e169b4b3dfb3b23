"""Elongation statistics of tumor candidates and the shape-based filter.

A component's shape is summarized by the eigenvalues of the covariance of
its voxel coordinates (physical mm by default, so anisotropic spacing does
not distort elongation). The filter accepts a tumor component when

* it has at least ``min_component_voxels`` voxels,
* its elongation ratio lambda1/lambda2 lies inside the fitted acceptance
  interval (shipped default [1.07, 2.8], the 5th..95th percentile band),
* at least ``overlap_threshold`` of its voxels lie inside the cleaned
  kidney+tumor mask.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .components import label_components, overlap_fraction
from .errors import ConfigError, FitError, ValidationError
from .volumes import BinaryMask, require_same_geometry

DEFAULT_RATIO_LO = 1.07
DEFAULT_RATIO_HI = 2.8

# eigenvalues below this fraction of the trace count as zero (collinear set)
_RANK_EPS = 1e-12


@dataclass(frozen=True)
class ComponentShape:
    """Covariance eigenvalues (descending, mm^2) and the lambda1/lambda2 ratio."""

    eigenvalues: tuple[float, float, float]

    @property
    def ratio(self) -> float:
        l1, l2, _ = self.eigenvalues
        if l2 <= _RANK_EPS * max(l1, 1.0):
            return math.inf  # collinear or near-degenerate: reject downstream
        return l1 / l2


@dataclass(frozen=True)
class ShapeStats:
    """Fitted elongation-ratio acceptance interval."""

    ratio_lo: float = DEFAULT_RATIO_LO
    ratio_hi: float = DEFAULT_RATIO_HI
    percentile_lo: float = 5.0
    percentile_hi: float = 95.0
    sample_count: int = 0

    def __post_init__(self):
        if not 1.0 <= self.ratio_lo <= self.ratio_hi:
            raise ConfigError(
                f"need 1 <= ratio_lo <= ratio_hi, got [{self.ratio_lo}, {self.ratio_hi}]"
            )


@dataclass(frozen=True)
class FilterConfig:
    stats: ShapeStats = ShapeStats()
    overlap_threshold: float = 0.95
    min_component_voxels: int = 20
    prob_threshold: float = 0.5
    physical_coords: bool = True  # measure shape in mm rather than voxel units

    def __post_init__(self):
        if not 0.0 <= self.overlap_threshold <= 1.0:
            raise ConfigError(f"overlap_threshold must be in [0, 1], got {self.overlap_threshold}")
        if self.min_component_voxels < 0:
            raise ConfigError(f"min_component_voxels must be >= 0, got {self.min_component_voxels}")
        if not 0.0 < self.prob_threshold < 1.0:
            raise ConfigError(f"prob_threshold must be in (0, 1), got {self.prob_threshold}")


def jacobi_eigenvalues(matrix: np.ndarray) -> np.ndarray:
    """Eigenvalues of a symmetric 3x3 matrix, sorted descending.

    Cyclic Jacobi rotations over the pairs (0,1), (0,2), (1,2), iterated
    until the off-diagonal Frobenius norm drops below 1e-12 * trace.
    Already-diagonal input is returned without any rotation, hence exactly.
    """
    a = np.array(matrix, dtype=np.float64)
    if a.shape != (3, 3):
        raise ValidationError(f"expected a 3x3 matrix, got shape {a.shape}")
    tol = 1e-12 * abs(np.trace(a))

    for _ in range(64):
        off = math.sqrt(2.0 * (a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2))
        if off <= tol:
            break
        for p, q in ((0, 1), (0, 2), (1, 2)):
            apq = a[p, q]
            if apq == 0.0:
                continue
            theta = (a[q, q] - a[p, p]) / (2.0 * apq)
            t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
            c = 1.0 / math.sqrt(t * t + 1.0)
            s = t * c
            k = 3 - p - q  # the row/column not taking part in the rotation
            akp, akq = a[k, p], a[k, q]
            a[p, p] -= t * apq
            a[q, q] += t * apq
            a[p, q] = a[q, p] = 0.0
            a[k, p] = a[p, k] = c * akp - s * akq
            a[k, q] = a[q, k] = s * akp + c * akq

    return np.sort(np.diagonal(a))[::-1].copy()


def covariance_eigenvalues(coords: np.ndarray, spacing=(1.0, 1.0, 1.0)) -> ComponentShape:
    """Shape of a voxel set given as (n, 3) integer (x, y, z) coordinates.

    Voxel centers are placed at (x*sx, y*sy, z*sz); the covariance about the
    centroid is normalized by n (population form). Sets whose covariance has
    rank < 2 come back with ratio = inf, which no acceptance interval admits.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 3:
        raise ValidationError(f"expected (n, 3) coordinates, got shape {coords.shape}")
    if coords.shape[0] == 0:
        raise ValidationError("cannot measure the shape of an empty voxel set")

    pts = coords * np.asarray(spacing, dtype=np.float64)
    pts -= pts.mean(axis=0)
    cov = pts.T @ pts / pts.shape[0]
    eig = np.clip(jacobi_eigenvalues(cov), 0.0, None)
    return ComponentShape(eigenvalues=(float(eig[0]), float(eig[1]), float(eig[2])))


def percentile_linear(sorted_values: np.ndarray, p: float) -> float:
    """Percentile by linear interpolation at rank position (n-1) * p / 100."""
    n = sorted_values.size
    pos = (n - 1) * p / 100.0
    lo = int(math.floor(pos))
    hi = min(lo + 1, n - 1)
    frac = pos - lo
    return float(sorted_values[lo] + frac * (sorted_values[hi] - sorted_values[lo]))


def fit_ratio_range(ratios, p_lo: float = 5.0, p_hi: float = 95.0) -> ShapeStats:
    """Fit the acceptance interval as the [p_lo, p_hi] percentile band."""
    values = np.sort(np.asarray(list(ratios), dtype=np.float64))
    if values.size < 2:
        raise FitError(f"need at least 2 ratios to fit a range, got {values.size}")
    if not 0.0 <= p_lo <= p_hi <= 100.0:
        raise ConfigError(f"percentiles must satisfy 0 <= lo <= hi <= 100, got ({p_lo}, {p_hi})")
    return ShapeStats(
        ratio_lo=percentile_linear(values, p_lo),
        ratio_hi=percentile_linear(values, p_hi),
        percentile_lo=p_lo,
        percentile_hi=p_hi,
        sample_count=int(values.size),
    )


def filter_tumor_components(
    tumor_mask: BinaryMask,
    kt_mask: BinaryMask,
    config: FilterConfig = FilterConfig(),
    connectivity: int = 26,
) -> BinaryMask:
    """Keep only tumor components that look like tumors and sit on the kidney mask."""
    require_same_geometry(tumor_mask, kt_mask, "tumor and kidney+tumor masks")
    spacing = tumor_mask.geometry.spacing if config.physical_coords else (1.0, 1.0, 1.0)

    bits = np.zeros(tumor_mask.geometry.shape, dtype=bool)
    flat = bits.ravel()
    for comp in label_components(tumor_mask, connectivity).components:
        if comp.voxel_count < config.min_component_voxels:
            continue
        shape = covariance_eigenvalues(tumor_mask.geometry.unravel(comp.indices), spacing)
        if not config.stats.ratio_lo <= shape.ratio <= config.stats.ratio_hi:
            continue
        if overlap_fraction(comp.indices, kt_mask) < config.overlap_threshold:
            continue
        flat[comp.indices] = True
    return BinaryMask(tumor_mask.geometry, flat.reshape(tumor_mask.geometry.shape))


def save_shape_stats(stats: ShapeStats, path) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "ratio_lo": stats.ratio_lo,
                "ratio_hi": stats.ratio_hi,
                "percentile_lo": stats.percentile_lo,
                "percentile_hi": stats.percentile_hi,
                "sample_count": stats.sample_count,
            },
            indent=2,
        )
        + "\n"
    )


def load_shape_stats(path) -> ShapeStats:
    data = json.loads(Path(path).read_text())
    try:
        return ShapeStats(
            ratio_lo=float(data["ratio_lo"]),
            ratio_hi=float(data["ratio_hi"]),
            percentile_lo=float(data.get("percentile_lo", 5.0)),
            percentile_hi=float(data.get("percentile_hi", 95.0)),
            sample_count=int(data.get("sample_count", 0)),
        )
    except KeyError as exc:
        raise ValidationError(f"{path}: missing shape-stats field {exc}") from exc
