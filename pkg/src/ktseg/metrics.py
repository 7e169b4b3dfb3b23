"""Hard DICE evaluation per case plus median/mean aggregation and reports."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ValidationError
from .volumes import BinaryMask, LabelVolume, require_same_geometry


@dataclass(frozen=True)
class CaseScore:
    case_id: str
    dice_kt: float     # labels {1, 2} as one mask
    dice_tumor: float  # label 2 only


def dice(a: BinaryMask, b: BinaryMask) -> float:
    """2|A n B| / (|A| + |B|); two empty masks agree perfectly (1.0)."""
    require_same_geometry(a, b, "masks")
    na = int(np.count_nonzero(a.bits))
    nb = int(np.count_nonzero(b.bits))
    if na + nb == 0:
        return 1.0
    inter = int(np.count_nonzero(a.bits & b.bits))
    return 2.0 * inter / (na + nb)


def evaluate_case(pred: LabelVolume, gt: LabelVolume, case_id: str = "") -> CaseScore:
    require_same_geometry(pred, gt, "prediction and ground truth")
    geo = pred.geometry
    return CaseScore(
        case_id=case_id,
        dice_kt=dice(BinaryMask(geo, pred.labels >= 1), BinaryMask(geo, gt.labels >= 1)),
        dice_tumor=dice(BinaryMask(geo, pred.labels == 2), BinaryMask(geo, gt.labels == 2)),
    )


def median_mean(values) -> dict[str, float]:
    """Median (average of the two middles for even n) and arithmetic mean."""
    arr = np.sort(np.asarray(list(values), dtype=np.float64))
    if arr.size == 0:
        raise ValidationError("cannot aggregate an empty score list")
    mid = arr.size // 2
    median = float(arr[mid]) if arr.size % 2 else float((arr[mid - 1] + arr[mid]) / 2.0)
    return {"median": median, "mean": float(arr.mean())}


def aggregate(scores: list[CaseScore]) -> dict[str, dict[str, float]]:
    if not scores:
        raise ValidationError("cannot aggregate an empty score list")
    return {
        "dice_kt": median_mean(s.dice_kt for s in scores),
        "dice_tumor": median_mean(s.dice_tumor for s in scores),
    }


REPORT_COLUMNS = ("case_id", "dice_kt_pre", "dice_tumor_pre", "dice_kt_post", "dice_tumor_post")


def write_case_report(path, rows: list[dict]) -> None:
    """CSV with one row per case: pre- and post-filter DICE for both targets."""
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=REPORT_COLUMNS)
        writer.writeheader()
        for row in sorted(rows, key=lambda r: r["case_id"]):
            writer.writerow({k: row[k] for k in REPORT_COLUMNS})


def summarize_report(rows: list[dict]) -> dict[str, dict[str, float]]:
    if not rows:
        raise ValidationError("cannot summarize an empty report")
    return {
        col: median_mean(float(row[col]) for row in rows)
        for col in REPORT_COLUMNS
        if col != "case_id"
    }


def write_summary(path, summary: dict) -> None:
    Path(path).write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
