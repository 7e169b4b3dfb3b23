"""3D connected components, hole filling and overlap measurement.

Labeling and hole filling are delegated to scipy.ndimage; this module owns
the deterministic component table (size-descending order with a fixed
tie-break) that the rest of the pipeline builds on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import ConfigError, ValidationError
from .volumes import BinaryMask, VolumeGeometry, require_same_geometry

_STRUCTURES = {
    6: ndimage.generate_binary_structure(3, 1),
    18: ndimage.generate_binary_structure(3, 2),
    26: ndimage.generate_binary_structure(3, 3),
}

# hole filling floods the background from the border with 6-connectivity,
# the complementary pairing to 26-connected foreground
_FILL_STRUCTURE = ndimage.generate_binary_structure(3, 1)


@dataclass
class Component:
    component_id: int
    voxel_count: int
    indices: np.ndarray           # flat voxel indices, ascending
    centroid_mm: tuple[float, float, float]
    bbox: tuple[tuple[int, int], tuple[int, int], tuple[int, int]]  # (x,y,z) inclusive


@dataclass
class ComponentTable:
    geometry: VolumeGeometry
    connectivity: int
    components: list[Component]

    def __len__(self) -> int:
        return len(self.components)


def _structure(connectivity: int):
    try:
        return _STRUCTURES[connectivity]
    except KeyError:
        raise ConfigError(f"connectivity must be 6, 18 or 26, got {connectivity}") from None


def label_components(mask: BinaryMask, connectivity: int = 26) -> ComponentTable:
    """Partition the foreground into maximal connected sets.

    Components come back sorted by voxel count descending; equal sizes are
    ordered by their smallest flat voxel index, so the table is deterministic.
    """
    labeled, n = ndimage.label(mask.bits, structure=_structure(connectivity))
    flat = labeled.ravel()
    order = np.argsort(flat, kind="stable")
    sorted_labels = flat[order]
    starts = np.searchsorted(sorted_labels, np.arange(1, n + 2))

    sx, sy, sz = mask.geometry.spacing
    components = []
    for lab in range(1, n + 1):
        indices = order[starts[lab - 1] : starts[lab]]
        indices = np.sort(indices)
        coords = mask.geometry.unravel(indices)
        mean = coords.mean(axis=0)
        lo = coords.min(axis=0)
        hi = coords.max(axis=0)
        components.append(
            Component(
                component_id=0,  # assigned after sorting
                voxel_count=indices.size,
                indices=indices,
                centroid_mm=(mean[0] * sx, mean[1] * sy, mean[2] * sz),
                bbox=((int(lo[0]), int(hi[0])), (int(lo[1]), int(hi[1])), (int(lo[2]), int(hi[2]))),
            )
        )

    components.sort(key=lambda c: (-c.voxel_count, int(c.indices[0])))
    for i, comp in enumerate(components):
        comp.component_id = i + 1
    return ComponentTable(mask.geometry, connectivity, components)


def keep_largest_k(table: ComponentTable, k: int) -> BinaryMask:
    """Mask of the k largest components (all of them when k exceeds the count)."""
    if k < 0:
        raise ConfigError(f"k must be >= 0, got {k}")
    bits = np.zeros(table.geometry.shape, dtype=bool)
    flat = bits.ravel()
    for comp in table.components[:k]:
        flat[comp.indices] = True
    return BinaryMask(table.geometry, flat.reshape(table.geometry.shape))


def fill_holes(mask: BinaryMask) -> BinaryMask:
    """Set to foreground every background region not connected to the border."""
    filled = ndimage.binary_fill_holes(mask.bits, structure=_FILL_STRUCTURE)
    return BinaryMask(mask.geometry, filled)


def overlap_fraction(indices: np.ndarray, reference: BinaryMask) -> float:
    """Fraction of the given voxels that lie inside the reference mask."""
    indices = np.asarray(indices, dtype=np.int64)
    if indices.size == 0:
        raise ValidationError("overlap_fraction of an empty voxel list")
    return float(np.count_nonzero(reference.bits.ravel()[indices])) / indices.size
