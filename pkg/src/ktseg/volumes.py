"""Voxel-grid containers: geometry, label volumes, binary masks, probability maps.

Arrays are stored with shape ``(nz, ny, nx)`` in C order, so the flat index
``z*ny*nx + y*nx + x`` matches the on-disk sample order (x fastest).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class VolumeGeometry:
    """Grid dimensions (nx, ny, nz) and voxel spacing (sx, sy, sz) in mm."""

    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        if len(self.dims) != 3 or any(int(d) < 1 for d in self.dims):
            raise ValidationError(f"dims must be three integers >= 1, got {self.dims}")
        if len(self.spacing) != 3 or any(not (float(s) > 0.0) for s in self.spacing):
            raise ValidationError(f"spacing must be three positive reals, got {self.spacing}")
        object.__setattr__(self, "dims", tuple(int(d) for d in self.dims))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def shape(self) -> tuple[int, int, int]:
        """Numpy array shape (nz, ny, nx)."""
        nx, ny, nz = self.dims
        return (nz, ny, nx)

    @property
    def voxel_count(self) -> int:
        nx, ny, nz = self.dims
        return nx * ny * nz

    def unravel(self, flat_indices: np.ndarray) -> np.ndarray:
        """Decode flat voxel indices into an (n, 3) array of (x, y, z) coordinates."""
        nx, ny, _ = self.dims
        flat = np.asarray(flat_indices, dtype=np.int64)
        z, rem = np.divmod(flat, ny * nx)
        y, x = np.divmod(rem, nx)
        return np.stack([x, y, z], axis=1)


@dataclass
class LabelVolume:
    """Semantic labels per voxel: 0 background, 1 kidney, 2 tumor."""

    geometry: VolumeGeometry
    labels: np.ndarray

    @property
    def array(self) -> np.ndarray:
        return self.labels


@dataclass
class BinaryMask:
    geometry: VolumeGeometry
    bits: np.ndarray

    @property
    def array(self) -> np.ndarray:
        return self.bits

    @property
    def foreground_count(self) -> int:
        return int(np.count_nonzero(self.bits))


@dataclass
class ProbabilityVolume:
    """Per-voxel foreground probabilities in [0, 1]."""

    geometry: VolumeGeometry
    probs: np.ndarray

    @property
    def array(self) -> np.ndarray:
        return self.probs


def _shaped(samples, geometry: VolumeGeometry) -> np.ndarray:
    arr = np.asarray(samples)
    if arr.size != geometry.voxel_count:
        raise ValidationError(
            f"sample count {arr.size} does not match geometry {geometry.dims}"
        )
    return arr.reshape(geometry.shape)


def _first_bad(bad: np.ndarray) -> int:
    # flat index of the first offending voxel, in file order
    return int(np.flatnonzero(bad.ravel())[0])


def as_label_volume(samples, geometry: VolumeGeometry) -> LabelVolume:
    """Validate samples as {0,1,2} labels; reports the first offending voxel."""
    arr = _shaped(samples, geometry)
    bad = (arr != 0) & (arr != 1) & (arr != 2)
    if bad.any():
        i = _first_bad(bad)
        raise ValidationError(f"label {arr.ravel()[i]!r} at voxel index {i} not in {{0,1,2}}")
    return LabelVolume(geometry, arr.astype(np.uint8, copy=False))


def as_binary_mask(samples, geometry: VolumeGeometry) -> BinaryMask:
    arr = _shaped(samples, geometry)
    bad = (arr != 0) & (arr != 1)
    if bad.any():
        i = _first_bad(bad)
        raise ValidationError(f"mask value {arr.ravel()[i]!r} at voxel index {i} not in {{0,1}}")
    return BinaryMask(geometry, arr.astype(bool, copy=False))


def as_probability_volume(samples, geometry: VolumeGeometry) -> ProbabilityVolume:
    arr = _shaped(samples, geometry)
    bad = (arr < 0.0) | (arr > 1.0) | ~np.isfinite(arr)
    if bad.any():
        i = _first_bad(bad)
        raise ValidationError(
            f"probability {arr.ravel()[i]!r} at voxel index {i} outside [0, 1]"
        )
    return ProbabilityVolume(geometry, arr.astype(np.float32, copy=False))


def require_same_geometry(a, b, what: str = "volumes") -> None:
    if a.geometry != b.geometry:
        raise ValidationError(
            f"{what} have mismatched geometry: {a.geometry} vs {b.geometry}"
        )
