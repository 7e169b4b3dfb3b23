"""Command-line frontend.

Subcommands: slice-extract, split, fit-shape-stats, postprocess, evaluate,
losses-check, phantom-gen. Every subcommand accepts --config FILE (JSON);
values from the file fill in flags that were not given explicitly, and
unknown keys are rejected. Exit codes: 0 success, 2 bad usage/config,
3 data or validation error, 4 I/O error.

Progress goes to stderr; machine-readable output goes to the requested
files (losses-check prints its JSON report to stdout when --out is omitted).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import metrics, prep
from .errors import ConfigError, KtsegError, ValidationError
from .losses import LossConfig, PredictionPair, bce, combined_loss, dice_loss
from .nifti import read_volume, write_volume
from .phantom import PhantomSpec, generate_phantom
from .pipeline import CasePrediction, postprocess_case, threshold_merge
from .rng import Xorshift64Star
from .shape import (
    FilterConfig,
    ShapeStats,
    covariance_eigenvalues,
    fit_ratio_range,
    load_shape_stats,
    save_shape_stats,
)
from .components import label_components
from .volumes import BinaryMask, as_label_volume, as_probability_volume

PROG = "ktseg"

DEFAULTS = {
    "split": {"test_fraction": 0.1, "seed": 0, "test_count": None, "jobs": 1},
    "slice-extract": {
        "model": "none",
        "lower_half_mode": "rows",
        "out_height": None,
        "out_width": None,
        "jobs": 1,
    },
    "fit-shape-stats": {
        "percentile_lo": 5.0,
        "percentile_hi": 95.0,
        "connectivity": 26,
        "min_voxels": 20,
        "voxel_coords": False,
        "jobs": 1,
    },
    "postprocess": {
        "prob_threshold": 0.5,
        "overlap_threshold": 0.95,
        "min_voxels": 20,
        "ratio_lo": None,
        "ratio_hi": None,
        "fg_connectivity": 26,
        "hole_fill": "3d",
        "voxel_coords": False,
        "jobs": 1,
    },
    "losses-check": {"seed": 0, "pairs": 100, "count": 64, "dice_weight": 0.5},
    "phantom-gen": {"count": 1, "blobs": 3},
}
# evaluate shares the postprocess knobs
DEFAULTS["evaluate"] = dict(DEFAULTS["postprocess"])


def _eprint(*args) -> None:
    print(*args, file=sys.stderr)


def _read_manifest(path) -> list[str]:
    ids = [line.strip() for line in Path(path).read_text().splitlines()]
    ids = [i for i in ids if i]
    if not ids:
        raise ValidationError(f"{path}: manifest contains no case ids")
    return ids


def _case_file(directory, case_id: str, suffix: str) -> Path:
    for ext in (".nii.gz", ".nii"):
        p = Path(directory) / f"{case_id}_{suffix}{ext}"
        if p.exists():
            return p
    raise FileNotFoundError(f"no {case_id}_{suffix}.nii[.gz] in {directory}")


def _discover_cases(directory, suffix: str) -> list[str]:
    directory = Path(directory)
    found = set()
    for p in directory.iterdir():
        name = p.name
        for ext in (".nii.gz", ".nii"):
            tail = f"_{suffix}{ext}"
            if name.endswith(tail):
                found.add(name[: -len(tail)])
    if not found:
        raise ValidationError(f"no *_{suffix}.nii[.gz] files found in {directory}")
    return sorted(found)


def _case_ids(opts, directory, suffix: str) -> list[str]:
    if getattr(opts, "manifest", None):
        return _read_manifest(opts.manifest)
    return _discover_cases(directory, suffix)


def _map_cases(case_ids, fn, jobs: int) -> list:
    """Apply fn to each case id, preserving input order regardless of jobs."""
    if jobs <= 1:
        return [fn(cid) for cid in case_ids]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, case_ids))


def _load_labels(path):
    geometry, samples, _ = read_volume(path)
    return as_label_volume(samples, geometry)


def _load_probs(path):
    geometry, samples, kind = read_volume(path)
    if kind != "float32":
        raise ValidationError(f"{path}: probability volumes must be float32, got {kind}")
    return as_probability_volume(samples, geometry)


def _filter_config(opts) -> FilterConfig:
    stats = load_shape_stats(opts.stats) if getattr(opts, "stats", None) else ShapeStats()
    if opts.ratio_lo is not None or opts.ratio_hi is not None:
        stats = ShapeStats(
            ratio_lo=opts.ratio_lo if opts.ratio_lo is not None else stats.ratio_lo,
            ratio_hi=opts.ratio_hi if opts.ratio_hi is not None else stats.ratio_hi,
            percentile_lo=stats.percentile_lo,
            percentile_hi=stats.percentile_hi,
            sample_count=stats.sample_count,
        )
    return FilterConfig(
        stats=stats,
        overlap_threshold=opts.overlap_threshold,
        min_component_voxels=opts.min_voxels,
        prob_threshold=opts.prob_threshold,
        physical_coords=not opts.voxel_coords,
    )


# ---------------------------------------------------------------- commands


def cmd_split(opts) -> int:
    if opts.ids_file:
        ids = _read_manifest(opts.ids_file)
    elif opts.data_dir:
        ids = _discover_cases(opts.data_dir, "segmentation")
    else:
        raise ConfigError("split needs --ids-file or --data-dir")
    split = prep.split_cases(ids, opts.test_fraction, opts.seed, opts.test_count)
    prep.save_split(split, opts.out)
    _eprint(
        f"[split] {len(split.train_ids)} train / {len(split.test_ids)} test "
        f"(seed {split.seed}) -> {opts.out}"
    )
    return 0


def cmd_slice_extract(opts) -> int:
    case_ids = _case_ids(opts, opts.data_dir, "segmentation")
    out_root = Path(opts.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    sizes = {"kidney": (256, 256), "tumor": (128, 256)}
    out_h, out_w = opts.out_height, opts.out_width
    if opts.model in sizes:
        out_h = out_h if out_h is not None else sizes[opts.model][0]
        out_w = out_w if out_w is not None else sizes[opts.model][1]

    def one_case(case_id: str) -> int:
        geometry, samples, kind = read_volume(_case_file(opts.data_dir, case_id, "imaging"))
        image = SimpleNamespace(geometry=geometry, array=samples)
        labels = _load_labels(_case_file(opts.data_dir, case_id, "segmentation"))
        records = prep.extract_slices(image, labels, case_id)

        if opts.model == "kidney":
            records = prep.filter_positive(records, prep.KIDNEY_MODEL)
        elif opts.model == "tumor":
            records = prep.filter_positive(records, prep.TUMOR_MODEL)
            if opts.lower_half_mode == "volume_z":
                nz = geometry.dims[2]
                records = [r for r in records if r.slice_index < nz // 2]

        case_dir = out_root / case_id
        case_dir.mkdir(exist_ok=True)
        for rec in records:
            img, mask = rec.image, rec.mask
            if opts.model == "kidney":
                mask = prep.remap_for_kidney_model(mask)
            elif opts.model == "tumor":
                if opts.lower_half_mode == "rows":
                    img, mask = prep.lower_half(img), prep.lower_half(mask)
                mask = prep.remap_for_tumor_model(mask)
            if out_h is not None:
                img = prep.resize_nearest(img, out_h, out_w)
                mask = prep.resize_nearest(mask, out_h, out_w)
            stem = f"z{rec.slice_index:04d}"
            prep.write_slice_payload(case_dir, f"{stem}_image", img, rec)
            prep.write_slice_payload(case_dir, f"{stem}_mask", mask, rec)
        return len(records)

    counts = _map_cases(case_ids, one_case, opts.jobs)
    _eprint(f"[slice-extract] {sum(counts)} slices from {len(case_ids)} cases -> {out_root}")
    return 0


def cmd_fit_shape_stats(opts) -> int:
    case_ids = _case_ids(opts, opts.labels_dir, "segmentation")

    def one_case(case_id: str) -> list[float]:
        labels = _load_labels(_case_file(opts.labels_dir, case_id, "segmentation"))
        tumor = BinaryMask(labels.geometry, labels.labels == 2)
        spacing = labels.geometry.spacing if not opts.voxel_coords else (1.0, 1.0, 1.0)
        ratios = []
        for comp in label_components(tumor, opts.connectivity).components:
            if comp.voxel_count < opts.min_voxels:
                continue
            shape = covariance_eigenvalues(labels.geometry.unravel(comp.indices), spacing)
            if np.isfinite(shape.ratio):
                ratios.append(shape.ratio)
        return ratios

    ratios = [r for case in _map_cases(case_ids, one_case, opts.jobs) for r in case]
    stats = fit_ratio_range(ratios, opts.percentile_lo, opts.percentile_hi)
    save_shape_stats(stats, opts.out)
    _eprint(
        f"[fit-shape-stats] {stats.sample_count} tumors from {len(case_ids)} cases: "
        f"ratio range [{stats.ratio_lo:.3f}, {stats.ratio_hi:.3f}] -> {opts.out}"
    )
    return 0


def cmd_postprocess(opts) -> int:
    single = bool(opts.prob_kt or opts.prob_tumor or opts.out)
    batch = bool(opts.pred_dir or opts.out_dir)
    if single == batch:
        raise ConfigError(
            "postprocess needs either --prob-kt/--prob-tumor/--out or --pred-dir/--out-dir"
        )
    config = _filter_config(opts)
    hole_fill = opts.hole_fill == "3d"

    def process(prob_kt_path, prob_tumor_path, out_path) -> None:
        pred = CasePrediction(_load_probs(prob_kt_path), _load_probs(prob_tumor_path))
        result = postprocess_case(pred, config, opts.fg_connectivity, hole_fill)
        write_volume(result.geometry, result.labels, "uint8", out_path)

    if single:
        if not (opts.prob_kt and opts.prob_tumor and opts.out):
            raise ConfigError("single-case mode needs all of --prob-kt, --prob-tumor, --out")
        process(opts.prob_kt, opts.prob_tumor, opts.out)
        _eprint(f"[postprocess] -> {opts.out}")
        return 0

    case_ids = _case_ids(opts, opts.pred_dir, "prob_kt")
    out_root = Path(opts.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)

    def one_case(case_id: str) -> None:
        process(
            _case_file(opts.pred_dir, case_id, "prob_kt"),
            _case_file(opts.pred_dir, case_id, "prob_tumor"),
            out_root / f"{case_id}_prediction.nii.gz",
        )

    _map_cases(case_ids, one_case, opts.jobs)
    _eprint(f"[postprocess] {len(case_ids)} cases -> {out_root}")
    return 0


def cmd_evaluate(opts) -> int:
    case_ids = _case_ids(opts, opts.gt_dir, "segmentation")
    config = _filter_config(opts)
    hole_fill = opts.hole_fill == "3d"

    def one_case(case_id: str) -> dict:
        gt = _load_labels(_case_file(opts.gt_dir, case_id, "segmentation"))
        pred = CasePrediction(
            _load_probs(_case_file(opts.pred_dir, case_id, "prob_kt")),
            _load_probs(_case_file(opts.pred_dir, case_id, "prob_tumor")),
        )
        pre = metrics.evaluate_case(threshold_merge(pred, config.prob_threshold), gt, case_id)
        post = metrics.evaluate_case(
            postprocess_case(pred, config, opts.fg_connectivity, hole_fill), gt, case_id
        )
        _eprint(
            f"[evaluate] {case_id}: kt {pre.dice_kt:.4f} -> {post.dice_kt:.4f}, "
            f"tumor {pre.dice_tumor:.4f} -> {post.dice_tumor:.4f}"
        )
        return {
            "case_id": case_id,
            "dice_kt_pre": f"{pre.dice_kt:.6f}",
            "dice_tumor_pre": f"{pre.dice_tumor:.6f}",
            "dice_kt_post": f"{post.dice_kt:.6f}",
            "dice_tumor_post": f"{post.dice_tumor:.6f}",
        }

    rows = _map_cases(case_ids, one_case, opts.jobs)
    metrics.write_case_report(opts.out, rows)
    summary_path = opts.summary or str(opts.out) + ".summary.json"
    metrics.write_summary(summary_path, metrics.summarize_report(rows))
    _eprint(f"[evaluate] {len(rows)} cases -> {opts.out}, summary -> {summary_path}")
    return 0


def _central_difference(value_fn, pred, target, h=1e-6) -> np.ndarray:
    grad = np.empty_like(pred)
    for i in range(pred.size):
        up = pred.copy()
        dn = pred.copy()
        up[i] += h
        dn[i] -= h
        grad[i] = (value_fn(up, target) - value_fn(dn, target)) / (2 * h)
    return grad


def cmd_losses_check(opts) -> int:
    config = LossConfig(dice_weight=opts.dice_weight)
    rng = Xorshift64Star(opts.seed)
    h = 1e-6

    losses = {
        "bce": lambda p, t: bce(PredictionPair(p, t), config.prob_clamp),
        "dice": lambda p, t: dice_loss(PredictionPair(p, t), config.smooth),
        "combined": lambda p, t: combined_loss(PredictionPair(p, t), config),
    }
    worst = {name: 0.0 for name in losses}
    worst_affine = 0.0

    for _ in range(opts.pairs):
        # predictions kept inside [0.01, 0.99] so the difference quotient is
        # well conditioned everywhere (the clamp kink sits at 1e-7)
        pred = np.array([0.01 + 0.98 * rng.next_float() for _ in range(opts.count)])
        target = np.array([float(rng.next_below(2)) for _ in range(opts.count)])
        for name, fn in losses.items():
            value, grad = fn(pred, target)
            fd = _central_difference(lambda p, t, f=fn: f(p, t)[0], pred, target, h)
            scale = np.maximum(np.abs(fd), 1e-8)
            worst[name] = max(worst[name], float(np.max(np.abs(grad - fd) / scale)))

        pair = PredictionPair(pred, target)
        v0 = combined_loss(pair, LossConfig(dice_weight=0.0))[0]
        v1 = combined_loss(pair, LossConfig(dice_weight=1.0))[0]
        w = config.dice_weight
        vw = combined_loss(pair, config)[0]
        worst_affine = max(worst_affine, abs(vw - ((1 - w) * v0 + w * v1)))

    report = {
        "seed": opts.seed,
        "pairs": opts.pairs,
        "samples_per_pair": opts.count,
        "dice_weight": config.dice_weight,
        "step": h,
        "max_gradient_relative_error": worst,
        "max_affine_mix_error": worst_affine,
        "pass": max(worst.values()) < 1e-4,
    }
    text = json.dumps(report, indent=2) + "\n"
    if opts.out:
        Path(opts.out).write_text(text)
        _eprint(f"[losses-check] -> {opts.out}")
    else:
        sys.stdout.write(text)
    return 0 if report["pass"] else 3


def cmd_phantom_gen(opts) -> int:
    out_root = Path(opts.out_dir)
    out_root.mkdir(parents=True, exist_ok=True)
    for i in range(opts.count):
        seed = opts.seed + i
        spec = PhantomSpec(seed=seed, blob_count=opts.blobs)
        gt, pred = generate_phantom(spec)
        case_id = f"case_{seed:05d}"
        geo = gt.geometry
        # a crude intensity image so slice extraction has something to chew on
        imaging = (gt.labels.astype(np.int16) * 100) + 50
        write_volume(geo, imaging, "int16", out_root / f"{case_id}_imaging.nii.gz")
        write_volume(geo, gt.labels, "uint8", out_root / f"{case_id}_segmentation.nii.gz")
        write_volume(geo, pred.prob_kt.probs, "float32", out_root / f"{case_id}_prob_kt.nii.gz")
        write_volume(
            geo, pred.prob_tumor.probs, "float32", out_root / f"{case_id}_prob_tumor.nii.gz"
        )
        _eprint(f"[phantom-gen] {case_id} -> {out_root}")
    return 0


# ---------------------------------------------------------------- wiring


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="Kidney-tumor segmentation post-processing and evaluation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with defaults for this subcommand")
        return p

    p = add("split", "deterministic case-level train/test split")
    p.add_argument("--ids-file", help="newline-delimited case ids")
    p.add_argument("--data-dir", help="discover case ids from *_segmentation files")
    p.add_argument("--test-fraction", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--test-count", type=int, help="override the rounded test-set size")
    p.add_argument("--out", required=True)
    p.add_argument("--jobs", type=int)

    p = add("slice-extract", "extract 2D axial slices with labels and flags")
    p.add_argument("--data-dir", required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--manifest")
    p.add_argument("--model", choices=["none", "kidney", "tumor"])
    p.add_argument("--lower-half-mode", choices=["rows", "volume_z"])
    p.add_argument("--out-height", type=int)
    p.add_argument("--out-width", type=int)
    p.add_argument("--jobs", type=int)

    p = add("fit-shape-stats", "fit the tumor elongation-ratio acceptance range")
    p.add_argument("--labels-dir", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--manifest")
    p.add_argument("--percentile-lo", type=float)
    p.add_argument("--percentile-hi", type=float)
    p.add_argument("--connectivity", type=int, choices=[6, 18, 26])
    p.add_argument("--min-voxels", type=int)
    p.add_argument("--voxel-coords", action="store_const", const=True)
    p.add_argument("--jobs", type=int)

    p = add("postprocess", "clean predictions and merge into a 3-label volume")
    p.add_argument("--prob-kt")
    p.add_argument("--prob-tumor")
    p.add_argument("--out")
    p.add_argument("--pred-dir")
    p.add_argument("--out-dir")
    p.add_argument("--manifest")
    _add_filter_flags(p)
    p.add_argument("--jobs", type=int)

    p = add("evaluate", "per-case DICE before/after post-processing")
    p.add_argument("--pred-dir", required=True)
    p.add_argument("--gt-dir", required=True)
    p.add_argument("--out", required=True, help="CSV report path")
    p.add_argument("--summary", help="summary JSON path (default: <out>.summary.json)")
    p.add_argument("--manifest")
    _add_filter_flags(p)
    p.add_argument("--jobs", type=int)

    p = add("losses-check", "value and gradient self-check of the training loss")
    p.add_argument("--seed", type=int)
    p.add_argument("--pairs", type=int)
    p.add_argument("--count", type=int, help="samples per pair")
    p.add_argument("--dice-weight", type=float)
    p.add_argument("--out", help="write the JSON report here instead of stdout")

    p = add("phantom-gen", "generate synthetic ground truth and corrupted predictions")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--count", type=int, help="phantoms for seeds seed..seed+count-1")
    p.add_argument("--blobs", type=int, help="spurious kidney-channel blobs per phantom")

    return parser


def _add_filter_flags(p) -> None:
    p.add_argument("--stats", help="shape-stats JSON from fit-shape-stats")
    p.add_argument("--ratio-lo", type=float)
    p.add_argument("--ratio-hi", type=float)
    p.add_argument("--overlap-threshold", type=float)
    p.add_argument("--min-voxels", type=int)
    p.add_argument("--prob-threshold", type=float)
    p.add_argument("--fg-connectivity", type=int, choices=[6, 18, 26])
    p.add_argument("--hole-fill", choices=["3d", "off"])
    p.add_argument("--voxel-coords", action="store_const", const=True)


def _merge_options(args: argparse.Namespace) -> SimpleNamespace:
    """defaults < config file < explicit flags; unknown config keys are errors."""
    given = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    merged = dict(DEFAULTS.get(args.command, {}))
    known = set(given) | set(merged)

    if args.config:
        file_values = json.loads(Path(args.config).read_text())
        if not isinstance(file_values, dict):
            raise ConfigError(f"{args.config}: config must be a JSON object")
        for key, value in file_values.items():
            dest = key.replace("-", "_")
            if dest not in known:
                raise ConfigError(f"{args.config}: unknown key {key!r} for {args.command}")
            merged[dest] = value

    for key, value in given.items():
        if value is not None:
            merged[key] = value
        elif key not in merged:
            merged[key] = None
    return SimpleNamespace(**merged)


_COMMANDS = {
    "split": cmd_split,
    "slice-extract": cmd_slice_extract,
    "fit-shape-stats": cmd_fit_shape_stats,
    "postprocess": cmd_postprocess,
    "evaluate": cmd_evaluate,
    "losses-check": cmd_losses_check,
    "phantom-gen": cmd_phantom_gen,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        opts = _merge_options(args)
        return _COMMANDS[args.command](opts)
    except ConfigError as exc:
        _eprint(f"{PROG}: configuration error: {exc}")
        return 2
    except KtsegError as exc:
        _eprint(f"{PROG}: {exc}")
        return 3
    except OSError as exc:
        _eprint(f"{PROG}: I/O error: {exc}")
        return 4


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
