"""Kidney-tumor CT segmentation post-processing and evaluation toolkit."""

from .components import (
    Component,
    ComponentTable,
    fill_holes,
    keep_largest_k,
    label_components,
    overlap_fraction,
)
from .errors import ConfigError, FitError, KtsegError, PhantomError, ValidationError
from .losses import LossConfig, PredictionPair, bce, combined_loss, dice_loss
from .metrics import CaseScore, aggregate, dice, evaluate_case
from .nifti import read_volume, write_volume
from .phantom import PhantomSpec, generate_phantom
from .pipeline import (
    CasePrediction,
    binarize,
    labels_to_prediction,
    merge_masks,
    postprocess_case,
    threshold_merge,
)
from .prep import (
    CaseSplit,
    SliceRecord,
    extract_slices,
    filter_positive,
    lower_half,
    remap_for_kidney_model,
    remap_for_tumor_model,
    resize_nearest,
    split_cases,
)
from .shape import (
    ComponentShape,
    FilterConfig,
    ShapeStats,
    covariance_eigenvalues,
    filter_tumor_components,
    fit_ratio_range,
    jacobi_eigenvalues,
)
from .volumes import (
    BinaryMask,
    LabelVolume,
    ProbabilityVolume,
    VolumeGeometry,
    as_binary_mask,
    as_label_volume,
    as_probability_volume,
)

__version__ = "0.1.0"
