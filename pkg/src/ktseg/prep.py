"""Training-data preparation: case splitting and 2D slice extraction.

Cases are shuffled with the fixed xorshift64* Fisher-Yates sweep (see
``ktseg.rng``) and the last ``round(test_fraction * n)`` become the test
set, so a split is reproducible from (ids, fraction, seed) alone. Slices
are taken along z; each record carries positive-sample flags for the two
training targets (kidney+tumor, tumor-only).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, ValidationError
from .rng import Xorshift64Star
from .volumes import LabelVolume, require_same_geometry

KIDNEY_MODEL = "kidney_model"
TUMOR_MODEL = "tumor_model"


@dataclass(frozen=True)
class CaseSplit:
    train_ids: tuple[str, ...]
    test_ids: tuple[str, ...]
    seed: int
    test_fraction: float


@dataclass
class SliceRecord:
    case_id: str
    slice_index: int
    image: np.ndarray  # (H, W) = (ny, nx)
    mask: np.ndarray   # same shape, labels {0, 1, 2}
    has_kidney: bool   # any label in {1, 2}
    has_tumor: bool    # any label 2


def split_cases(
    case_ids,
    test_fraction: float,
    seed: int,
    test_count: int | None = None,
) -> CaseSplit:
    """Deterministic case-level split; ``test_count`` overrides the rounded size."""
    ids = list(case_ids)
    if not ids:
        raise ValidationError("no case ids to split")
    if len(set(ids)) != len(ids):
        raise ValidationError("case ids must be distinct")
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test_fraction must be in (0, 1), got {test_fraction}")

    if test_count is None:
        # round half up, so e.g. 10% of 10 cases is exactly 1
        test_count = int(test_fraction * len(ids) + 0.5)
    if not 0 <= test_count <= len(ids):
        raise ConfigError(f"test_count {test_count} outside 0..{len(ids)}")

    Xorshift64Star(seed).shuffle(ids)
    cut = len(ids) - test_count
    return CaseSplit(
        train_ids=tuple(ids[:cut]),
        test_ids=tuple(ids[cut:]),
        seed=int(seed),
        test_fraction=float(test_fraction),
    )


def save_split(split: CaseSplit, path) -> None:
    Path(path).write_text(
        json.dumps(
            {
                "seed": split.seed,
                "test_fraction": split.test_fraction,
                "train_ids": list(split.train_ids),
                "test_ids": list(split.test_ids),
            },
            indent=2,
        )
        + "\n"
    )


def load_split(path) -> CaseSplit:
    data = json.loads(Path(path).read_text())
    return CaseSplit(
        train_ids=tuple(data["train_ids"]),
        test_ids=tuple(data["test_ids"]),
        seed=int(data["seed"]),
        test_fraction=float(data["test_fraction"]),
    )


def extract_slices(image, labels: LabelVolume, case_id: str = "") -> list[SliceRecord]:
    """One record per axial (z) slice, ascending, with positive-sample flags."""
    require_same_geometry(image, labels, "image and labels")
    records = []
    for z in range(image.geometry.dims[2]):
        mask = labels.labels[z]
        records.append(
            SliceRecord(
                case_id=case_id,
                slice_index=z,
                image=image.array[z],
                mask=mask,
                has_kidney=bool((mask >= 1).any()),
                has_tumor=bool((mask == 2).any()),
            )
        )
    return records


def remap_for_kidney_model(mask: np.ndarray) -> np.ndarray:
    """Tumor counts as kidney: 1 where label in {1, 2}, else 0."""
    return (np.asarray(mask) >= 1).astype(np.uint8)


def remap_for_tumor_model(mask: np.ndarray) -> np.ndarray:
    """Kidney becomes background: 1 where label == 2, else 0."""
    return (np.asarray(mask) == 2).astype(np.uint8)


def resize_nearest(grid: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Nearest-neighbor resize with the pixel-center convention.

    Output pixel (i, j) copies input pixel (floor((i+0.5)*H/out_h),
    floor((j+0.5)*W/out_w)); computed in exact integer arithmetic. Never
    introduces values that were not already present.
    """
    if out_h < 1 or out_w < 1:
        raise ConfigError(f"output size must be >= 1, got {out_h}x{out_w}")
    grid = np.asarray(grid)
    h, w = grid.shape
    rows = (2 * np.arange(out_h, dtype=np.int64) + 1) * h // (2 * out_h)
    cols = (2 * np.arange(out_w, dtype=np.int64) + 1) * w // (2 * out_w)
    return grid[np.ix_(rows, cols)]


def lower_half(grid: np.ndarray) -> np.ndarray:
    """Rows floor(H/2) .. H-1, the bottom half of the image."""
    grid = np.asarray(grid)
    h = grid.shape[0]
    if h < 2:
        raise ValidationError(f"grid height must be >= 2 to take the lower half, got {h}")
    return grid[h // 2 :]


def filter_positive(records: list[SliceRecord], target: str) -> list[SliceRecord]:
    """Keep the positive samples for the given training target."""
    if target == KIDNEY_MODEL:
        return [r for r in records if r.has_kidney]
    if target == TUMOR_MODEL:
        return [r for r in records if r.has_tumor]
    raise ConfigError(f"target must be {KIDNEY_MODEL!r} or {TUMOR_MODEL!r}, got {target!r}")


_KIND_DTYPES = {
    "uint8": np.dtype("<u1"),
    "int16": np.dtype("<i2"),
    "float32": np.dtype("<f4"),
}


def _kind_of(arr: np.ndarray) -> str:
    for kind, dt in _KIND_DTYPES.items():
        if arr.dtype == dt.newbyteorder("="):
            return kind
    raise ValidationError(f"cannot store dtype {arr.dtype}; use uint8, int16 or float32")


def write_slice_payload(directory, stem: str, grid: np.ndarray, record: SliceRecord) -> None:
    """Raw little-endian payload ``<stem>.raw`` plus JSON sidecar ``<stem>.json``."""
    directory = Path(directory)
    grid = np.ascontiguousarray(grid)
    kind = _kind_of(grid)
    (directory / f"{stem}.raw").write_bytes(grid.astype(_KIND_DTYPES[kind]).tobytes())
    sidecar = {
        "case_id": record.case_id,
        "z": record.slice_index,
        "height": int(grid.shape[0]),
        "width": int(grid.shape[1]),
        "sample_kind": kind,
        "flags": {"has_kidney": record.has_kidney, "has_tumor": record.has_tumor},
    }
    (directory / f"{stem}.json").write_text(json.dumps(sidecar, indent=2) + "\n")


def read_slice_payload(directory, stem: str) -> tuple[np.ndarray, dict]:
    directory = Path(directory)
    meta = json.loads((directory / f"{stem}.json").read_text())
    dt = _KIND_DTYPES[meta["sample_kind"]]
    raw = (directory / f"{stem}.raw").read_bytes()
    grid = np.frombuffer(raw, dtype=dt).reshape(meta["height"], meta["width"])
    return grid.astype(dt.newbyteorder("="), copy=False), meta
