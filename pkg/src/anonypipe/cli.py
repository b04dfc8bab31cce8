"""Command-line entry point: ``anonypipe <command> ...``.

Exit codes: 0 success, 1 incomplete run or evaluation failure, 2 invalid
configuration or arguments.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from PIL import Image

from anonypipe.backends import load_backend
from anonypipe.config import check_threshold, load_config, read_toml
from anonypipe.detection import DEFAULT_THRESHOLD, DetectionManifest, dumps_json
from anonypipe.errors import AnonypipeError, ConfigError, EvaluationError
from anonypipe.imaging import list_images
from anonypipe.metrics.detection import COCO_IOU_THRESHOLDS, evaluate_detection
from anonypipe.metrics.embedding import histogram, read_distances_csv, write_records_csv
from anonypipe.metrics.segmentation import SegEvalReport, evaluate_segmentation
from anonypipe.pipeline import align_by_stem, embedding_distances, run_anonymization, run_detection

log = logging.getLogger("anonypipe")

EXIT_OK, EXIT_INCOMPLETE, EXIT_CONFIG = 0, 1, 2


def _write(path, text: str) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")


def _backend_section(config_path: Optional[str], kind: str) -> dict:
    if not config_path:
        return {"backend": "stub"}
    raw = read_toml(config_path)
    section = dict(raw.get(kind, {"backend": "stub"}))
    stub = dict(section.get("stub", {}) or {})
    if "sidecar_path" in stub:
        stub["sidecar_path"] = str((Path(config_path).parent / stub["sidecar_path"]).resolve())
        section["stub"] = stub
    return section


def cmd_anonymize(args) -> int:
    cfg = load_config(
        args.config,
        base_seed=args.seed,
        threshold=args.threshold,
        jobs=args.jobs,
        output_format="jpeg" if args.jpeg else None,
    )
    result = run_anonymization(cfg)
    out = Path(args.out) if args.out else cfg.output_dir / "run_manifest.json"
    _write(out, dumps_json(result.manifest()))
    statuses = [r.status for r in result.records]
    log.info(
        "%d images (%d ok, %d partial, %d failed), NoA %d of %d detected faces -> %s",
        len(statuses),
        statuses.count("ok"),
        statuses.count("partial"),
        statuses.count("failed"),
        result.noa,
        result.total_detected,
        out,
    )
    return EXIT_OK if result.ok else EXIT_INCOMPLETE


def cmd_detect(args) -> int:
    section = _backend_section(args.config, "detector")
    threshold = args.threshold
    if threshold is None:
        threshold = section.get("threshold", DEFAULT_THRESHOLD)
    threshold = check_threshold(threshold)
    section.pop("threshold", None)
    if args.sidecar:
        section = {"backend": "stub", "stub": {"sidecar_path": args.sidecar}}
    detector = load_backend("detector", section)
    manifest = run_detection(args.input_dir, detector, threshold, jobs=args.jobs)
    _write(args.out, manifest.dumps())
    return EXIT_OK


def _parse_thresholds(text: Optional[str]) -> tuple[float, ...]:
    if not text:
        return COCO_IOU_THRESHOLDS
    try:
        values = tuple(float(t) for t in text.split(","))
    except ValueError:
        raise ConfigError(f"bad --iou-thresholds {text!r}") from None
    if not all(0 < t <= 1 for t in values):
        raise ConfigError("IoU thresholds must lie in (0, 1]")
    return values


def cmd_eval_det(args) -> int:
    gt = DetectionManifest.load(args.gt)
    pred = align_by_stem(gt, DetectionManifest.load(args.pred))
    report = evaluate_detection(gt, pred, _parse_thresholds(args.iou_thresholds))
    _write(args.out, dumps_json(report.to_dict()))
    return EXIT_OK


def cmd_eval_embed(args) -> int:
    section = _backend_section(args.config, "embedder")
    if args.dim:
        section.setdefault("stub", {})["dim"] = args.dim
    embedder = load_backend("embedder", section)
    manifest = DetectionManifest.load(args.manifest)
    records = embedding_distances(args.orig_dir, args.anon_dir, manifest, embedder)
    write_records_csv(records, args.out)
    hist = histogram([r.l2_distance for r in records], bins=args.bins, lo=0.0, hi=2.0)
    out = Path(args.out)
    hist_path = Path(args.hist_out) if args.hist_out else out.with_name(out.stem + "_hist.csv")
    _write(hist_path, hist.to_csv())
    if args.svg:
        _write(args.svg, hist.to_svg(title="L2 distance"))
    return EXIT_OK


def _read_raster(path: Path) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.array(im)
    if arr.ndim != 2:
        raise EvaluationError(f"{path}: expected a single-channel label raster, got shape {arr.shape}")
    return arr


def _parse_classes(items: Sequence[str]) -> dict:
    classes = {}
    for item in items:
        name, sep, ids = item.partition("=")
        if not sep:
            name, ids = item, item
        try:
            id_list = [int(i) for i in ids.split("+")]
        except ValueError:
            raise ConfigError(f"bad class spec {item!r}; use NAME=ID or NAME=ID+ID") from None
        classes[name] = id_list[0] if len(id_list) == 1 else tuple(id_list)
    return classes


def cmd_eval_seg(args) -> int:
    classes = _parse_classes(args.classes)
    gt_dir, pred_dir = Path(args.gt_dir), Path(args.pred_dir)
    inst_dir = Path(args.gt_instances) if args.gt_instances else None
    rels = list_images(gt_dir)
    missing = [r for r in rels if not (pred_dir / r).is_file()]
    if inst_dir is not None:
        missing += [f"instances:{r}" for r in rels if not (inst_dir / r).is_file()]
    if missing:
        raise EvaluationError(f"unaligned rasters, missing: {missing}")
    triples = []
    for rel in rels:
        gt, pred = _read_raster(gt_dir / rel), _read_raster(pred_dir / rel)
        inst = _read_raster(inst_dir / rel) if inst_dir is not None else None
        if gt.shape != pred.shape or (inst is not None and inst.shape != gt.shape):
            raise EvaluationError(f"{rel}: raster shapes differ")
        triples.append((gt, pred, inst))
    baseline = None
    if args.baseline:
        baseline = SegEvalReport.from_dict(json.loads(Path(args.baseline).read_text(encoding="utf-8")))
    report = evaluate_segmentation(triples, classes, baseline)
    _write(args.out, dumps_json(report.to_dict()))
    return EXIT_OK


def cmd_histogram(args) -> int:
    values = read_distances_csv(args.input, column=args.column)
    hist = histogram(values, bins=args.bins, lo=args.lo, hi=args.hi)
    _write(args.out, hist.to_csv())
    if args.svg:
        _write(args.svg, hist.to_svg(title=args.column))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="anonypipe", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("anonymize", help="anonymize an image tree as described by a TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, help="override base_seed")
    p.add_argument("--threshold", type=float, help="override detection threshold")
    p.add_argument("--jobs", type=int)
    p.add_argument("--out", help="run manifest path (default: <output_dir>/run_manifest.json)")
    p.add_argument("--jpeg", action="store_true", help="write JPEG instead of PNG")
    p.set_defaults(func=cmd_anonymize)

    p = sub.add_parser("detect", help="write a detection manifest for an image tree")
    p.add_argument("input_dir")
    p.add_argument("--config")
    p.add_argument("--sidecar", help="replay faces from this manifest (stub detector)")
    p.add_argument("--threshold", type=float)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("eval-det", help="mAP (all/S/M/L) and NoA of predictions against GT")
    p.add_argument("gt")
    p.add_argument("pred")
    p.add_argument("--iou-thresholds", help="comma separated, default 0.50:0.05:0.95")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_det)

    p = sub.add_parser("eval-embed", help="per-face L2 embedding distance, original vs anonymized")
    p.add_argument("orig_dir")
    p.add_argument("anon_dir")
    p.add_argument("manifest")
    p.add_argument("--config")
    p.add_argument("--dim", type=int, help="stub embedder dimension")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--hist-out")
    p.add_argument("--svg")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_embed)

    p = sub.add_parser("eval-seg", help="IoU / iIoU / relative IoU change per class")
    p.add_argument("gt_dir")
    p.add_argument("pred_dir")
    p.add_argument("--classes", nargs="+", required=True, help="NAME=ID or NAME=ID+ID, e.g. person=24 human=24+25")
    p.add_argument("--gt-instances", help="directory of instanceIds rasters aligned with gt_dir")
    p.add_argument("--baseline", help="segmentation report of the non-anonymized baseline")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_seg)

    p = sub.add_parser("histogram", help="bin a distance column from CSV")
    p.add_argument("input")
    p.add_argument("--column", default="l2_distance")
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--lo", type=float, default=0.0)
    p.add_argument("--hi", type=float, default=2.0)
    p.add_argument("--svg")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_histogram)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (ConfigError, ValueError) as exc:
        if isinstance(exc, EvaluationError):
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_INCOMPLETE
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (AnonypipeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE


if __name__ == "__main__":
    sys.exit(main())
