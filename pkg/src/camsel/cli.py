"""Command-line entry point binding all stages together.

Every subcommand honors a global ``--seed`` (a random one is drawn and
recorded when omitted) and ``--threads`` (env ``CAMSEL_THREADS`` as
fallback). Each output artifact gets a sibling ``<out>.manifest.json``
recording the command, resolved config, seed, input digests, tool version,
and timestamp. Output artifacts themselves carry no timestamps, so a rerun
with the same inputs and seed is byte-identical.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from dataclasses import asdict
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .data import (
    Dataset,
    load_dataset,
    load_schema,
    save_dataset,
    save_schema,
)
from .evalkit import (
    cv_splits,
    evaluate,
    imputation_benchmark,
    mask_tail_mnar,
    switch_stats,
)
from .forest import Forest, ForestConfig, train_forest
from .heatmap import DetectionBox, GridGeometry, featurize_boxes
from .impute import SurvivalConfig, impute_mean, impute_nn, impute_rsf, imputation_error
from .pipeline import (
    PipelineConfig,
    predict_sequence,
    smooth_labels,
    train_full,
)
from .rng import fresh_seed

__all__ = ["dispatch", "main"]


def _sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_json(path: str | Path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, sort_keys=True)
        fh.write("\n")


def _write_manifest(
    out_path: str | Path,
    argv: list[str],
    config: dict,
    seed: int,
    inputs: list[str | Path],
) -> None:
    manifest = {
        "command": ["camsel", *argv],
        "config": config,
        "seed": seed,
        "inputs": {str(p): _sha256(p) for p in inputs},
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }
    _write_json(f"{out_path}.manifest.json", manifest)


def _add_forest_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-trees", type=int, default=20)
    p.add_argument("--max-depth", type=int, default=20)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--no-bootstrap", action="store_true")
    p.add_argument("--track-members", action="store_true")


def _forest_config(args, seed: int) -> ForestConfig:
    return ForestConfig(
        n_trees=args.n_trees,
        max_depth=args.max_depth,
        min_leaf=args.min_leaf,
        mtry=args.mtry,
        bootstrap=not args.no_bootstrap,
        track_members=args.track_members,
        seed=seed,
    )


def _add_survival_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n-trees", type=int, default=20)
    p.add_argument("--max-depth", type=int, default=20)
    p.add_argument("--min-leaf", type=int, default=5)
    p.add_argument("--mtry", type=int, default=None)
    p.add_argument("--iterations", type=int, default=1)
    p.add_argument("--draw-bounds", choices=("node", "global"), default="node")
    p.add_argument(
        "--aggregation", choices=("pooled", "per_tree"), default="pooled"
    )


def _survival_config(args, seed: int) -> SurvivalConfig:
    return SurvivalConfig(
        n_trees=args.n_trees,
        max_depth=args.max_depth,
        min_leaf=args.min_leaf,
        mtry=args.mtry,
        n_iterations=args.iterations,
        draw_bounds=args.draw_bounds,
        aggregation=args.aggregation,
        seed=seed,
    )


def _cmd_featurize(args, argv: list[str], seed: int, threads: int) -> int:
    geom = GridGeometry(
        image_w=args.image_w, image_h=args.image_h, gx=args.gx, gy=args.gy
    )
    records = []
    A = args.appearance_dim
    with open(args.detections, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                raw = json.loads(line)
                boxes = [
                    DetectionBox(
                        x1=b["x1"], y1=b["y1"], x2=b["x2"], y2=b["y2"],
                        appearance=np.asarray(b["appearance"], dtype=np.float64),
                    )
                    for b in raw["boxes"]
                ]
                records.append((int(raw["frame"]), int(raw["camera"]), boxes))
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(
                    f"{args.detections}: line {lineno}: bad record: {exc}"
                ) from exc
    if A is None:
        for _, _, boxes in records:
            if boxes:
                A = boxes[0].appearance.size
                break
    if A is None:
        raise ValueError("no boxes anywhere; pass --appearance-dim to size features")
    with open(args.out, "w", encoding="utf-8") as fh:
        for frame, camera, boxes in records:
            feats = featurize_boxes(
                boxes, geom, A, pool=args.pool,
                normalize_points=args.normalize_points,
            )
            rec = {
                "frame": frame,
                "camera": camera,
                "features": [float(v) for v in feats],
            }
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
    config = {
        "image_w": args.image_w, "image_h": args.image_h,
        "gx": args.gx, "gy": args.gy, "pool": args.pool,
        "normalize_points": args.normalize_points, "appearance_dim": int(A),
    }
    _write_manifest(args.out, argv, config, seed, [args.detections])
    return 0


def _cmd_gen_synth(args, argv: list[str], seed: int, threads: int) -> int:
    from .synth import SynthConfig, generate

    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        raw.setdefault("seed", seed)
        cfg = SynthConfig(**raw)
    else:
        cfg = SynthConfig(
            K=args.k, F=args.f, n_samples=args.n, n_sequences=args.sequences,
            latent_dim=args.latent_dim, sigma=args.sigma, rho=args.rho,
            p_miss=args.p_miss, seed=seed,
        )
    visible, truth = generate(cfg)
    save_dataset(visible, args.out_visible)
    save_dataset(truth, args.out_truth)
    save_schema(visible.schema, f"{args.out_visible}.schema.json")
    save_schema(truth.schema, f"{args.out_truth}.schema.json")
    config = asdict(cfg)
    inputs = [args.config] if args.config else []
    _write_manifest(args.out_visible, argv, config, cfg.seed, inputs)
    _write_manifest(args.out_truth, argv, config, cfg.seed, inputs)
    return 0


def _cmd_impute(args, argv: list[str], seed: int, threads: int) -> int:
    schema = load_schema(args.schema)
    complete = load_dataset(args.complete, schema)
    incomplete = load_dataset(args.incomplete, schema)
    scfg = _survival_config(args, seed)
    if args.method == "rsf":
        result = impute_rsf(complete, incomplete, scfg, n_workers=threads)
    elif args.method == "nn":
        result = impute_nn(complete, incomplete)
    else:
        result = impute_mean(complete, incomplete)
    save_dataset(result.dataset, args.out)
    config = {"method": args.method, **asdict(scfg)}
    inputs = [args.schema, args.complete, args.incomplete]
    if args.truth:
        # truth file must hold the complete versions of the incomplete records
        truth = load_dataset(args.truth, schema)
        report = imputation_error(result, truth)
        _write_json(
            f"{args.out}.errors.json",
            {
                "mean_error": report.mean_error,
                "fraction_within_0.2": report.fraction_within(0.2),
                "thresholds": [float(t) for t in report.thresholds],
                "curve": [float(v) for v in report.curve],
                "excluded_dims": report.excluded_dims,
                "n_imputed_scalars": int(report.errors.size),
            },
        )
        inputs.append(args.truth)
    _write_manifest(args.out, argv, config, seed, inputs)
    return 0


def _cmd_train(args, argv: list[str], seed: int, threads: int) -> int:
    schema = load_schema(args.schema)
    d = load_dataset(args.data, schema)
    fcfg = _forest_config(args, seed)
    model = train_forest(
        d.X, d.labels, fcfg, n_classes=d.K, n_workers=threads
    )
    model.save(args.out)
    _write_manifest(args.out, argv, asdict(fcfg), seed, [args.schema, args.data])
    return 0


def _cmd_predict(args, argv: list[str], seed: int, threads: int) -> int:
    schema = load_schema(args.schema)
    d = load_dataset(args.data, schema)
    model = Forest.load(args.model)
    proba = model.predict_proba(d.X).reshape(len(d), -1)
    cameras = np.argmax(proba, axis=1)
    with open(args.out, "w", encoding="utf-8") as fh:
        for i in range(len(d)):
            rec = {
                "sequence_id": d.sequence_ids[i],
                "frame": int(d.frames[i]),
                "camera": int(cameras[i]),
                "proba": [float(p) for p in proba[i]],
            }
            fh.write(json.dumps(rec, sort_keys=True))
            fh.write("\n")
    _write_manifest(args.out, argv, {}, seed, [args.schema, args.data, args.model])
    return 0


def _pipeline_config(args, seed: int) -> PipelineConfig:
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        forest = ForestConfig(**raw.get("forest", {}))
        survival = SurvivalConfig(**raw.get("survival", {}))
        return PipelineConfig(
            forest=forest,
            survival=survival,
            verification_enabled=raw.get("verification_enabled", True),
            min_confidence=raw.get("min_confidence", 0.0),
            balance=raw.get("balance", "none"),
            smoothing_enabled=raw.get("smoothing_enabled", False),
            min_duration=raw.get("min_duration", 1),
            seed=raw.get("seed", seed),
        )
    return PipelineConfig(
        verification_enabled=not args.no_verify,
        min_confidence=args.min_confidence,
        balance=args.balance,
        seed=seed,
    )


def _pipeline_config_dict(cfg: PipelineConfig) -> dict:
    return {
        "forest": asdict(cfg.forest),
        "survival": asdict(cfg.survival),
        "verification_enabled": cfg.verification_enabled,
        "min_confidence": cfg.min_confidence,
        "balance": cfg.balance,
        "smoothing_enabled": cfg.smoothing_enabled,
        "min_duration": cfg.min_duration,
        "seed": cfg.seed,
    }


def _cmd_pipeline(args, argv: list[str], seed: int, threads: int) -> int:
    schema = load_schema(args.schema)
    main_d = load_dataset(args.main, schema)
    aux_d = load_dataset(args.aux, schema) if args.aux else None
    cfg = _pipeline_config(args, seed)
    model, report = train_full(main_d, aux_d, cfg, n_workers=threads)
    model.save(args.out)
    inputs = [args.schema, args.main]
    if args.aux:
        inputs.append(args.aux)
    if args.config:
        inputs.append(args.config)
    _write_manifest(args.out, argv, _pipeline_config_dict(cfg), cfg.seed, inputs)
    if args.report:
        _write_json(args.report, report)
        _write_manifest(args.report, argv, _pipeline_config_dict(cfg), cfg.seed, inputs)
    return 0


def _cmd_select(args, argv: list[str], seed: int, threads: int) -> int:
    schema = load_schema(args.schema)
    frames = load_dataset(args.frames, schema)
    model = Forest.load(args.model)
    timeline = predict_sequence(model, frames)
    cameras = timeline.cameras
    if args.smooth > 1:
        cameras = smooth_labels(cameras, args.smooth)
    doc = [
        {
            "frame": int(timeline.frames[i]),
            "camera": int(cameras[i]),
            "proba": [float(p) for p in timeline.probas[i]],
        }
        for i in range(len(cameras))
    ]
    _write_json(args.out, doc)
    _write_manifest(
        args.out, argv, {"smooth": args.smooth}, seed,
        [args.schema, args.frames, args.model],
    )
    return 0


def _cmd_smooth(args, argv: list[str], seed: int, threads: int) -> int:
    with open(args.timeline, "r", encoding="utf-8") as fh:
        doc = json.load(fh)
    labels = np.asarray([rec["camera"] for rec in doc], dtype=np.int64)
    smoothed = smooth_labels(labels, args.min_duration)
    out_doc = []
    for rec, cam in zip(doc, smoothed):
        rec = dict(rec)
        rec["camera"] = int(cam)
        out_doc.append(rec)
    _write_json(args.out, out_doc)
    _write_manifest(
        args.out, argv, {"min_duration": args.min_duration}, seed, [args.timeline]
    )
    return 0


def _cmd_eval(args, argv: list[str], seed: int, threads: int) -> int:
    schema = load_schema(args.schema)
    if args.imputation:
        truth = load_dataset(args.data, schema)
        visible = mask_tail_mnar(truth, args.mask_fraction, args.p_miss, seed=seed)
        scfg = SurvivalConfig(n_trees=args.n_trees, seed=seed)
        reports = imputation_benchmark(visible, truth, scfg, n_workers=threads)
        doc = {
            "protocol": {
                "mask_fraction": args.mask_fraction,
                "p_miss": args.p_miss,
            },
            "methods": {
                name: {
                    "mean_error": r.mean_error,
                    "fraction_within_0.2": r.fraction_within(0.2),
                    "thresholds": [float(t) for t in r.thresholds],
                    "curve": [float(v) for v in r.curve],
                }
                for name, r in reports.items()
            },
        }
        _write_json(args.out, doc)
        _write_manifest(
            args.out, argv, {**doc["protocol"], **asdict(scfg)}, seed, [args.schema, args.data]
        )
        return 0

    d = load_dataset(args.data, schema)
    aux_d = load_dataset(args.aux, schema) if args.aux else None
    folds = cv_splits(d, n_folds=args.folds, seed=seed)
    cfg = PipelineConfig(
        forest=ForestConfig(n_trees=args.n_trees),
        survival=SurvivalConfig(n_trees=args.n_trees),
        seed=seed,
    )
    report = evaluate(cfg, d, folds, aux=aux_d, n_workers=threads)
    doc = report.to_dict()
    if args.baseline:
        from .evalkit import baseline_constant

        base = evaluate(baseline_constant(d), d, folds)
        doc["baseline_constant"] = base.to_dict()
    doc["switch_stats"] = switch_stats(
        np.asarray([int(c) for c in d.labels])
    )
    _write_json(args.out, doc)
    inputs = [args.schema, args.data]
    if args.aux:
        inputs.append(args.aux)
    _write_manifest(
        args.out, argv, {"folds": args.folds, **_pipeline_config_dict(cfg)},
        seed, inputs,
    )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="camsel",
        description="Camera selection from multi-view features with "
        "survival-forest imputation of missing views.",
    )
    parser.add_argument("--seed", type=int, default=None, help="root random seed")
    parser.add_argument(
        "--threads", type=int, default=None,
        help="worker threads (default: CAMSEL_THREADS or 1); results are "
        "identical for any value",
    )
    sub = parser.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("featurize", help="detections -> pooled heatmap features")
    p.add_argument("--detections", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--image-w", type=float, required=True)
    p.add_argument("--image-h", type=float, required=True)
    p.add_argument("--gx", type=int, default=16)
    p.add_argument("--gy", type=int, default=9)
    p.add_argument(
        "--pool", choices=("avg+max", "average", "max", "flatten"),
        default="avg+max",
    )
    p.add_argument("--normalize-points", action="store_true")
    p.add_argument("--appearance-dim", type=int, default=None)
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("gen-synth", help="generate a synthetic dataset")
    p.add_argument("--config", default=None)
    p.add_argument("--out-visible", required=True)
    p.add_argument("--out-truth", required=True)
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--f", type=int, default=8)
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--sequences", type=int, default=4)
    p.add_argument("--latent-dim", type=int, default=4)
    p.add_argument("--sigma", type=float, default=0.05)
    p.add_argument("--rho", type=float, default=0.74)
    p.add_argument("--p-miss", type=float, default=0.5)
    p.set_defaults(func=_cmd_gen_synth)

    p = sub.add_parser("impute", help="fill missing camera blocks")
    p.add_argument("--method", choices=("rsf", "nn", "mean"), required=True)
    p.add_argument("--complete", required=True)
    p.add_argument("--incomplete", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--truth", default=None)
    _add_survival_flags(p)
    p.set_defaults(func=_cmd_impute)

    p = sub.add_parser("train", help="train a selection forest on complete data")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    _add_forest_flags(p)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", help="per-frame camera probabilities")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("pipeline", help="full training flow (impute aux, verify, train)")
    p.add_argument("--main", required=True)
    p.add_argument("--aux", default=None)
    p.add_argument("--schema", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--report", default=None)
    p.add_argument("--no-verify", action="store_true")
    p.add_argument("--min-confidence", type=float, default=0.0)
    p.add_argument("--balance", choices=("none", "downsample"), default="none")
    p.set_defaults(func=_cmd_pipeline)

    p = sub.add_parser("select", help="timeline for an ordered sequence")
    p.add_argument("--model", required=True)
    p.add_argument("--frames", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--smooth", type=int, default=1)
    p.set_defaults(func=_cmd_select)

    p = sub.add_parser("smooth", help="re-smooth an existing timeline")
    p.add_argument("--timeline", required=True)
    p.add_argument("--min-duration", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_smooth)

    p = sub.add_parser("eval", help="cross-validated accuracy or imputation curves")
    p.add_argument("--data", required=True)
    p.add_argument("--schema", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--folds", type=int, default=3)
    p.add_argument("--aux", default=None)
    p.add_argument("--baseline", action="store_true")
    p.add_argument("--n-trees", type=int, default=20)
    p.add_argument("--imputation", action="store_true")
    p.add_argument("--mask-fraction", type=float, default=0.3)
    p.add_argument("--p-miss", type=float, default=0.5)
    p.set_defaults(func=_cmd_eval)

    return parser


def dispatch(argv: list[str]) -> int:
    """Route a command line to its handler; returns the exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    seed = args.seed if args.seed is not None else fresh_seed()
    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("CAMSEL_THREADS", "1"))
    if threads < 1:
        threads = 1
    try:
        return args.func(args, argv, seed, threads)
    except (ValueError, OSError) as exc:
        print(f"camsel: error: {exc}", file=sys.stderr)
        return 1


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))
