"""Synthetic phantoms: known ground truth plus deliberately corrupted predictions.

Ground truth is two mirrored kidney ellipsoids with one tumor ellipsoid
attached to the left kidney. The prediction channels are the ground-truth
indicators softened to probabilities, corrupted with exactly the artifacts
the post-processing stage is supposed to remove:

* kidney+tumor channel: N spurious distant blobs at probability 0.9 and one
  carved interior cavity,
* tumor channel: one sphere (elongation ratio ~1, fails the shape range)
  inside the far kidney, and one well-shaped blob outside both kidneys
  (fails the overlap rule).

Everything is driven by the fixed xorshift64* generator, so a spec with the
same seed always produces bit-identical volumes. Ellipsoids are used
throughout because their continuum covariance eigenvalues are known
analytically (semi_axis^2 / 5), which makes shape measurements checkable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import PhantomError
from .pipeline import CasePrediction
from .rng import Xorshift64Star
from .volumes import LabelVolume, ProbabilityVolume, VolumeGeometry

BLOB_PROB = 0.9


@dataclass(frozen=True)
class PhantomSpec:
    seed: int = 0
    dims: tuple[int, int, int] = (96, 96, 64)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    kidney_semi_axes: tuple[float, float, float] = (14.0, 16.0, 24.0)  # (x, y, z) mm
    kidney_lateral_offset: float = 22.0   # kidney centers at mid-x +- this, mm
    tumor_semi_axes: tuple[float, float, float] = (10.0, 15.0, 10.0)
    tumor_offset: tuple[float, float, float] = (0.0, -20.0, 0.0)  # from left kidney center
    blob_count: int = 3
    blob_radius_range: tuple[float, float] = (4.0, 7.0)
    false_sphere_radius: float = 6.0
    outside_blob_semi_axes: tuple[float, float, float] = (12.0, 8.0, 8.0)
    hole_radius: float = 3.0
    center_jitter: int = 3      # per-axis voxel jitter on structure centers
    clearance: float = 3.0      # minimum voxel gap kept around placed structures

    @property
    def tumor_ratio_target(self) -> float:
        a = sorted(self.tumor_semi_axes, reverse=True)
        return (a[0] / a[1]) ** 2

    def __post_init__(self):
        geo = VolumeGeometry(self.dims, self.spacing)  # validates dims/spacing
        for name, center, semi in self._structure_extents():
            for axis in range(3):
                lo = center[axis] - semi[axis] / geo.spacing[axis] - self.center_jitter
                hi = center[axis] + semi[axis] / geo.spacing[axis] + self.center_jitter
                if lo < 1 or hi > self.dims[axis] - 2:
                    raise PhantomError(
                        f"{name} does not fit inside the volume on axis {axis} "
                        f"(extent {lo:.1f}..{hi:.1f} of {self.dims[axis]})"
                    )

    def _structure_extents(self):
        k1, k2 = self._kidney_base_centers()
        tumor = tuple(k1[i] + self.tumor_offset[i] / self.spacing[i] for i in range(3))
        yield "left kidney", k1, self.kidney_semi_axes
        yield "right kidney", k2, self.kidney_semi_axes
        yield "tumor", tumor, self.tumor_semi_axes

    def _kidney_base_centers(self):
        nx, ny, nz = self.dims
        off = self.kidney_lateral_offset / self.spacing[0]
        cy = ny // 2 + 4
        return (nx // 2 - off, cy, nz // 2), (nx // 2 + off, cy, nz // 2)


def _ellipsoid(geometry: VolumeGeometry, center_vox, semi_mm) -> np.ndarray:
    """Voxels whose centers lie inside the ellipsoid (center in voxel units)."""
    nz, ny, nx = geometry.shape
    sx, sy, sz = geometry.spacing
    zz, yy, xx = np.ogrid[:nz, :ny, :nx]
    cx, cy, cz = center_vox
    ax, ay, az = semi_mm
    return (
        ((xx - cx) * sx / ax) ** 2
        + ((yy - cy) * sy / ay) ** 2
        + ((zz - cz) * sz / az) ** 2
    ) <= 1.0


def _jitter(rng: Xorshift64Star, amount: int) -> int:
    return rng.next_below(2 * amount + 1) - amount if amount else 0


def _place_clear(rng, geometry, occupied, semi_mm, clearance, tries=200):
    """Sample an integer center whose padded ellipsoid misses everything placed.

    Returns the center and marks the padded footprint in `occupied`.
    """
    nz, ny, nx = geometry.shape
    padded = tuple(s + clearance for s in semi_mm)
    margin = [int(padded[i] / geometry.spacing[i]) + 1 for i in range(3)]
    if any(d - 2 * m <= 0 for d, m in zip((nx, ny, nz), margin)):
        raise PhantomError(f"volume {geometry.dims} too small for semi-axes {semi_mm}")
    for _ in range(tries):
        cx = margin[0] + rng.next_below(nx - 2 * margin[0])
        cy = margin[1] + rng.next_below(ny - 2 * margin[1])
        cz = margin[2] + rng.next_below(nz - 2 * margin[2])
        footprint = _ellipsoid(geometry, (cx, cy, cz), padded)
        if not (footprint & occupied).any():
            occupied |= footprint
            return (cx, cy, cz)
    raise PhantomError(
        f"could not place a structure with semi-axes {semi_mm} after {tries} tries"
    )


def _soften(indicator: np.ndarray) -> np.ndarray:
    """Turn a hard indicator into probabilities that still binarize to it at 0.5."""
    ind = indicator.astype(np.float32)
    blur = ndimage.uniform_filter(ind, size=3, mode="constant")
    return 0.75 * ind + 0.25 * blur


def generate_phantom(spec: PhantomSpec) -> tuple[LabelVolume, CasePrediction]:
    """Build (ground truth, corrupted prediction) for the given spec."""
    geometry = VolumeGeometry(spec.dims, spec.spacing)
    rng = Xorshift64Star(spec.seed)

    (k1x, k1y, k1z), (k2x, k2y, k2z) = spec._kidney_base_centers()
    j = spec.center_jitter
    k1 = (k1x + _jitter(rng, j), k1y + _jitter(rng, j), k1z + _jitter(rng, j))
    k2 = (k2x + _jitter(rng, j), k2y + _jitter(rng, j), k2z + _jitter(rng, j))
    sp = spec.spacing
    tumor_center = tuple(k1[i] + spec.tumor_offset[i] / sp[i] for i in range(3))

    kidney1 = _ellipsoid(geometry, k1, spec.kidney_semi_axes)
    kidney2 = _ellipsoid(geometry, k2, spec.kidney_semi_axes)
    tumor = _ellipsoid(geometry, tumor_center, spec.tumor_semi_axes)

    if not (tumor & kidney1).any():
        raise PhantomError("tumor ellipsoid does not intersect the left kidney")
    if (kidney1 & kidney2).any() or (tumor & kidney2).any():
        raise PhantomError("left and right structures touch; widen the lateral offset")

    labels = np.zeros(geometry.shape, dtype=np.uint8)
    labels[kidney1 | kidney2] = 1
    labels[tumor] = 2
    gt = LabelVolume(geometry, labels)

    prob_kt = _soften(labels >= 1)
    prob_tumor = _soften(tumor)

    # reserve ground truth plus clearance before scattering corruption
    occupied = ndimage.binary_dilation(
        labels >= 1, iterations=int(np.ceil(spec.clearance / min(sp)))
    )

    lo, hi = spec.blob_radius_range
    for _ in range(spec.blob_count):
        r = lo + rng.next_float() * (hi - lo)
        center = _place_clear(rng, geometry, occupied, (r, r, r), spec.clearance)
        prob_kt = np.maximum(prob_kt, BLOB_PROB * _ellipsoid(geometry, center, (r, r, r)))

    # interior cavity in the right kidney: the hole-filling stage must repair it
    hole_center = tuple(k2[i] + _jitter(rng, 2) for i in range(3))
    prob_kt[_ellipsoid(geometry, hole_center, (spec.hole_radius,) * 3)] = 0.0

    # sphere false positive inside the right kidney: wrong shape, perfect overlap
    fp_center = tuple(k2[i] + _jitter(rng, 2) for i in range(3))
    r = spec.false_sphere_radius
    prob_tumor = np.maximum(prob_tumor, BLOB_PROB * _ellipsoid(geometry, fp_center, (r, r, r)))

    # well-shaped blob away from both kidneys: right shape, zero overlap
    out_center = _place_clear(rng, geometry, occupied, spec.outside_blob_semi_axes, spec.clearance)
    prob_tumor = np.maximum(
        prob_tumor, BLOB_PROB * _ellipsoid(geometry, out_center, spec.outside_blob_semi_axes)
    )

    pred = CasePrediction(
        ProbabilityVolume(geometry, np.clip(prob_kt, 0.0, 1.0).astype(np.float32)),
        ProbabilityVolume(geometry, np.clip(prob_tumor, 0.0, 1.0).astype(np.float32)),
    )
    return gt, pred
