"""Post-processing pipeline: binarize, fill holes, keep the two kidneys,
shape-filter tumor candidates, and merge into a single 3-label volume.

Stage order is fixed: thresholding, hole filling on both masks, two-largest
selection on the kidney+tumor mask, then the tumor filter measured against
that cleaned mask. Tumor wins over kidney when the masks are merged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .components import fill_holes, keep_largest_k, label_components
from .errors import ConfigError
from .shape import FilterConfig, filter_tumor_components
from .volumes import (
    BinaryMask,
    LabelVolume,
    ProbabilityVolume,
    require_same_geometry,
)


@dataclass
class CasePrediction:
    """Model outputs for one case, both in full-volume coordinates."""

    prob_kt: ProbabilityVolume     # kidney+tumor model
    prob_tumor: ProbabilityVolume  # tumor-only model

    def __post_init__(self):
        require_same_geometry(self.prob_kt, self.prob_tumor, "probability volumes")


def binarize(prob: ProbabilityVolume, threshold: float = 0.5) -> BinaryMask:
    """Foreground where p >= threshold (the boundary value is foreground)."""
    if not 0.0 < threshold < 1.0:
        raise ConfigError(f"threshold must be in (0, 1), got {threshold}")
    return BinaryMask(prob.geometry, prob.probs >= threshold)


def merge_masks(kt: BinaryMask, tumor: BinaryMask) -> LabelVolume:
    """Combine masks into labels {0, 1, 2}; tumor voxels win over kidney."""
    require_same_geometry(kt, tumor, "masks to merge")
    labels = np.zeros(kt.geometry.shape, dtype=np.uint8)
    labels[kt.bits] = 1
    labels[tumor.bits] = 2
    return LabelVolume(kt.geometry, labels)


def threshold_merge(pred: CasePrediction, threshold: float = 0.5) -> LabelVolume:
    """Merge of the raw binarized model outputs, with no cleanup applied."""
    return merge_masks(binarize(pred.prob_kt, threshold), binarize(pred.prob_tumor, threshold))


def postprocess_case(
    pred: CasePrediction,
    config: FilterConfig = FilterConfig(),
    connectivity: int = 26,
    hole_fill: bool = True,
) -> LabelVolume:
    """Run the full cleanup on one case and return the merged label volume."""
    kt = binarize(pred.prob_kt, config.prob_threshold)
    tumor = binarize(pred.prob_tumor, config.prob_threshold)

    if hole_fill:
        kt = fill_holes(kt)
        tumor = fill_holes(tumor)

    kt = keep_largest_k(label_components(kt, connectivity), 2)
    tumor = filter_tumor_components(tumor, kt, config, connectivity)
    return merge_masks(kt, tumor)


def labels_to_prediction(labels: LabelVolume) -> CasePrediction:
    """Re-encode a label volume as hard 0/1 probabilities (for idempotence checks)."""
    kt = (labels.labels >= 1).astype(np.float32)
    tumor = (labels.labels == 2).astype(np.float32)
    return CasePrediction(
        ProbabilityVolume(labels.geometry, kt),
        ProbabilityVolume(labels.geometry, tumor),
    )
