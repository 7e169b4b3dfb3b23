"""DICE, per-case evaluation and aggregation against brute-force checks."""

import csv
import json

import numpy as np
import pytest

from conftest import make_mask
from ktseg.errors import ValidationError
from ktseg.metrics import (
    CaseScore,
    aggregate,
    dice,
    evaluate_case,
    median_mean,
    summarize_report,
    write_case_report,
    write_summary,
)
from ktseg.volumes import LabelVolume, VolumeGeometry


def labels_from(arr):
    arr = np.asarray(arr, dtype=np.uint8)
    nz, ny, nx = arr.shape
    return LabelVolume(VolumeGeometry((nx, ny, nz)), arr)


def test_dice_basic_cases():
    a = make_mask(np.ones((2, 2, 2), bool))
    assert dice(a, a) == 1.0

    b = make_mask(np.zeros((2, 2, 2), bool))
    assert dice(a, b) == 0.0  # disjoint non-empty vs empty
    assert dice(b, b) == 1.0  # both empty: perfect agreement on absence

    left = np.zeros((2, 2, 4), dtype=bool)
    left[:, :, :2] = True   # 8 voxels
    right = np.zeros((2, 2, 4), dtype=bool)
    right[:, :, 1:3] = True  # 8 voxels, 4 shared
    assert dice(make_mask(left), make_mask(right)) == 0.5


def test_dice_symmetry_and_monotone_degradation():
    rng = np.random.default_rng(31)
    for _ in range(10):
        a_bits = rng.random((6, 6, 6)) < 0.4
        b_bits = rng.random((6, 6, 6)) < 0.4
        a, b = make_mask(a_bits), make_mask(b_bits)
        assert dice(a, b) == dice(b, a)

        inter = np.flatnonzero(a_bits & b_bits)
        if inter.size:
            worse = b_bits.copy()
            worse.ravel()[inter[0]] = False
            assert dice(a, make_mask(worse)) <= dice(a, b)


def test_dice_geometry_mismatch():
    with pytest.raises(ValidationError):
        dice(make_mask(np.zeros((2, 2, 2), bool)), make_mask(np.zeros((2, 2, 3), bool)))


def test_evaluate_case():
    gt = labels_from([[[0, 1, 2, 1]]])
    perfect = evaluate_case(gt, gt, "c0")
    assert (perfect.dice_kt, perfect.dice_tumor) == (1.0, 1.0)
    assert perfect.case_id == "c0"

    blank = evaluate_case(labels_from([[[0, 0, 0, 0]]]), gt)
    assert (blank.dice_kt, blank.dice_tumor) == (0.0, 0.0)


def test_evaluate_case_planted_half_overlap():
    gt_arr = np.zeros((2, 2, 4), dtype=np.uint8)
    gt_arr[:, :, :2] = 1   # 8 kidney voxels
    pred_arr = np.zeros((2, 2, 4), dtype=np.uint8)
    pred_arr[:, :, 1:3] = 1  # 8 voxels, 4 shared
    score = evaluate_case(labels_from(pred_arr), labels_from(gt_arr))
    assert score.dice_kt == pytest.approx(0.5, abs=1e-12)
    assert score.dice_tumor == 1.0  # no tumor anywhere on either side


def test_aggregate_small_and_random():
    scores = [CaseScore("a", 0.2, 0.0), CaseScore("b", 0.4, 0.5), CaseScore("c", 0.9, 1.0)]
    summary = aggregate(scores)
    assert summary["dice_kt"]["median"] == pytest.approx(0.4)
    assert summary["dice_kt"]["mean"] == pytest.approx(0.5)

    single = aggregate([CaseScore("a", 0.7, 0.3)])
    assert single["dice_kt"] == {"median": 0.7, "mean": 0.7}

    rng = np.random.default_rng(32)
    values = rng.random(20)
    got = median_mean(values)
    s = np.sort(values)
    assert got["median"] == pytest.approx((s[9] + s[10]) / 2, abs=1e-15)
    assert got["mean"] == pytest.approx(values.mean(), abs=1e-15)
    assert s[0] <= got["median"] <= s[-1]

    with pytest.raises(ValidationError):
        aggregate([])


def test_report_csv_and_summary(tmp_path):
    rows = [
        {"case_id": "case_b", "dice_kt_pre": "0.8", "dice_tumor_pre": "0.2",
         "dice_kt_post": "0.9", "dice_tumor_post": "0.4"},
        {"case_id": "case_a", "dice_kt_pre": "0.6", "dice_tumor_pre": "0.0",
         "dice_kt_post": "0.7", "dice_tumor_post": "0.5"},
    ]
    csv_path = tmp_path / "report.csv"
    write_case_report(csv_path, rows)
    with open(csv_path) as f:
        back = list(csv.DictReader(f))
    assert [r["case_id"] for r in back] == ["case_a", "case_b"]  # canonical order

    summary = summarize_report(rows)
    assert summary["dice_kt_post"]["mean"] == pytest.approx(0.8)
    json_path = tmp_path / "summary.json"
    write_summary(json_path, summary)
    assert json.loads(json_path.read_text())["dice_kt_post"]["mean"] == pytest.approx(0.8)
