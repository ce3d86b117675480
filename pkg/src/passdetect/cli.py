"""Command-line entry point.

Commands mirror the workflow end to end: generate synthetic data, dump
position vectors, train, predict, calibrate thresholds, evaluate, measure
event-level agreement, sweep precision/recall, and serve the annotation
application. Report-producing commands write CSV tables and render a PNG
figure next to each table (suppress with --no-figures).

Exit codes: 0 success, 2 usage error, 3 validation error, 4 runtime or
numeric error. Errors print one line: ``error: <category>: <detail>``.

All randomness flows from explicit --seed flags; when omitted, the seed
defaults to the documented constant 1729.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import agreement as agreement_mod
from . import ingest, metrics, pipeline, report, synth
from .checkpoint import load_checkpoint, save_checkpoint
from .classifier import DEFAULT_SEED, ClassifierConfig
from .core import (
    EventSource,
    LabelVector,
    NumericError,
    ValidationError,
    label_vector_from_events,
)
from .opv import OPV_LEN, build_opv_series, save_opv_dump
from .training import save_history_csv, train

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_VALIDATION = 3
EXIT_RUNTIME = 4


def _parse_grid(spec: str) -> list[float]:
    """Grid specs: 'start:stop:step' or a comma-separated list."""
    if ":" in spec:
        parts = spec.split(":")
        if len(parts) != 3:
            raise ValidationError(f"grid {spec!r} must be start:stop:step")
        start, stop, step = (float(p) for p in parts)
        if step <= 0 or stop < start:
            raise ValidationError(f"grid {spec!r} is not increasing")
        count = int(round((stop - start) / step))
        return [round(start + i * step, 10) for i in range(count + 1)]
    return [float(p) for p in spec.split(",") if p.strip()]


def _parse_listen(spec: str) -> tuple[str, int]:
    host, _, port = spec.rpartition(":")
    if not host or not port.isdigit():
        raise ValidationError(f"listen address {spec!r} must be host:port")
    return host, int(port)


def _load_reference_labels(
    manifest: ingest.MatchManifest, half: int, annotations: Path | None
) -> LabelVector:
    record = manifest.half(half)
    if annotations is None:
        if not record.annotations_uri:
            raise ValidationError(
                f"match {manifest.match_id} half {half} has no annotations; pass --annotations"
            )
        annotations = manifest.resolve(record.annotations_uri)
    events = ingest.load_annotations(annotations, source=EventSource.REFERENCE)
    return label_vector_from_events(events, manifest.timeline(half))


def _classifier_config_from_args(args, input_dim: int) -> ClassifierConfig:
    """File values first, flags override."""
    base: dict = {}
    if args.config:
        try:
            base = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ValidationError(f"cannot read classifier config {args.config}: {exc}")
    base["input_dim"] = input_dim
    for flag, key in [
        ("hidden_dim", "hidden_dim"),
        ("window", "window_len"),
        ("lr", "learning_rate"),
        ("epochs", "max_epochs"),
        ("dropout", "dropout_rate"),
        ("seed", "seed"),
        ("precision", "precision"),
    ]:
        value = getattr(args, flag, None)
        if value is not None:
            base[key] = value
    base.setdefault("seed", DEFAULT_SEED)
    return ClassifierConfig.from_dict(base)


# ---------------------------------------------------------------------------
# Commands


def cmd_synth(args) -> None:
    config = synth.load_synth_config(args.config) if args.config else synth.SynthConfig()
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    if args.duration is not None:
        config = replace(config, duration_s=args.duration)
    out_dir = Path(args.out)
    if args.scenarios:
        paths = synth.scenario_bundle(config, out_dir)
        for name, path in sorted(paths.items()):
            print(f"{name}: {path}")
    else:
        bundle = synth.generate(config, args.match_id)
        manifest_path = synth.write_match(bundle, out_dir, container=args.container)
        synth.save_synth_config(config, out_dir / "synth-config.json")
        print(f"manifest: {manifest_path}")


def cmd_build_opv(args) -> None:
    manifest = ingest.load_manifest(Path(args.manifest))
    out_dir = Path(args.out_dir) if args.out_dir else Path(manifest.base_dir)
    for half in sorted(manifest.halves):
        timeline = manifest.timeline(half)
        record = manifest.half(half)
        detections = ingest.load_detections(manifest.resolve(record.detections_uri), timeline)
        opvs = build_opv_series(detections, timeline)
        suffix = "opv.bin" if args.container == "bin" else "opv.csv"
        path = out_dir / f"half{half}.{suffix}"
        save_opv_dump(path, opvs)
        print(f"half {half}: {path} ({opvs.shape[0]} frames x {OPV_LEN})")


def _training_windows(split: ingest.DatasetSplit, use_opv: bool):
    feature_dim = None
    halves = []
    for manifest_path, half in split.training_halves:
        manifest = ingest.load_manifest(manifest_path)
        timeline = manifest.timeline(half)
        record = manifest.half(half)
        features = ingest.load_feature_matrix(
            manifest.resolve(record.features_uri), timeline
        )
        feature_dim = features.shape[1]
        detections = None
        if use_opv:
            detections = ingest.load_detections(
                manifest.resolve(record.detections_uri), timeline
            )
        if not record.annotations_uri:
            raise ValidationError(
                f"training half ({manifest.match_id}, {half}) has no annotations"
            )
        events = ingest.load_annotations(
            manifest.resolve(record.annotations_uri), source=EventSource.REFERENCE
        )
        labels = label_vector_from_events(events, timeline)
        halves.append((features, detections, timeline, labels))
    return halves, feature_dim


def cmd_train(args) -> None:
    split = ingest.load_split(Path(args.split))
    if not split.training_halves:
        raise ValidationError(f"split {args.split} has no training halves")
    use_opv = not args.no_opv
    halves, feature_dim = _training_windows(split, use_opv)
    input_dim = feature_dim + (OPV_LEN if use_opv else 0)
    config = _classifier_config_from_args(args, input_dim)

    dataset = []
    for features, detections, timeline, labels in halves:
        inputs = pipeline.build_model_inputs(features, detections, timeline, input_dim)
        for start, window in pipeline.make_windows(inputs, config.window_len):
            dataset.append((window, labels.bits[start : start + window.shape[0]]))

    checkpoint = train(dataset, config)
    out = Path(args.out)
    save_checkpoint(checkpoint, out)
    history_path = Path(args.history) if args.history else out.with_suffix(".history.csv")
    save_history_csv(history_path, checkpoint.history)
    if not args.no_figures:
        report.render_training_history(checkpoint.history, history_path.with_suffix(".png"))
    best = checkpoint.history[checkpoint.epoch - 1]
    print(
        f"checkpoint: {out} (best epoch {checkpoint.epoch}, "
        f"val AP {best.val_ap:.4f}, train loss {best.train_loss:.4f})"
    )


def cmd_predict(args) -> None:
    checkpoint = load_checkpoint(Path(args.checkpoint))
    manifest = ingest.load_manifest(Path(args.manifest))
    half = args.half
    timeline = manifest.timeline(half)
    record = manifest.half(half)
    features = ingest.load_feature_matrix(manifest.resolve(record.features_uri), timeline)
    detections = None
    if checkpoint.config.input_dim != features.shape[1]:
        detections = ingest.load_detections(manifest.resolve(record.detections_uri), timeline)
    scores = pipeline.annotate_half(features, detections, checkpoint, timeline)
    labels = pipeline.apply_threshold(scores, args.threshold)
    events = pipeline.extract_pass_events(labels)

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    scores_path = out_dir / f"half{half}.scores.csv"
    vector_path = out_dir / f"half{half}.passvector.csv"
    events_path = out_dir / f"half{half}.events.csv"
    ingest.save_scores(scores_path, scores)
    ingest.save_passvector(vector_path, labels)
    ingest.save_annotations(events_path, events)
    print(f"scores: {scores_path}")
    print(f"pass vector: {vector_path} (threshold {args.threshold})")
    print(f"events: {events_path} ({len(events)} predicted passes)")


def cmd_calibrate(args) -> None:
    manifest = ingest.load_manifest(Path(args.manifest))
    timeline = manifest.timeline(args.half)
    scores = ingest.load_scores(Path(args.scores), timeline)
    truth = _load_reference_labels(manifest, args.half, args.annotations)

    roc = metrics.roc_curve(scores, truth)
    youden_thr, yi = metrics.youden_threshold(roc)
    rows = []
    for label, threshold in [("th=0.5", 0.5), ("th=0.9", 0.9), ("youden", youden_thr)]:
        pred = pipeline.apply_threshold(scores, threshold)
        rows.append((label, metrics.metric_report(metrics.confusion(pred, truth), threshold)))

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics.save_report_csv(out_dir / "calibration.csv", rows)
    metrics.save_roc_csv(out_dir / "roc.csv", roc)
    if not args.no_figures:
        report.render_roc(roc, out_dir / "roc.png", youden=(youden_thr, yi))
    print(f"AUC {roc.auc:.4f}; Youden threshold {youden_thr:.4f} (YI {yi:.4f})")
    for label, rep in rows:
        print(f"{label}: F1 {rep.f1:.4f} prec {rep.prec:.4f} rec {rep.rec:.4f}")
    print(f"report: {out_dir / 'calibration.csv'}")


def cmd_evaluate(args) -> None:
    manifest = ingest.load_manifest(Path(args.manifest))
    timeline = manifest.timeline(args.half)
    truth = _load_reference_labels(manifest, args.half, args.annotations)

    if args.pred_vector:
        pred = ingest.load_passvector(Path(args.pred_vector), timeline)
        threshold = None
    elif args.pred_events:
        events = ingest.load_annotations(
            Path(args.pred_events), source=EventSource.PREDICTED
        )
        pred = label_vector_from_events(events, timeline)
        threshold = None
    elif args.scores:
        scores = ingest.load_scores(Path(args.scores), timeline)
        pred = pipeline.apply_threshold(scores, args.threshold)
        threshold = args.threshold
    else:
        raise ValidationError("pass one of --pred-vector, --pred-events, or --scores")

    rep = metrics.metric_report(metrics.confusion(pred, truth), threshold)
    rows = [(args.label, rep)]
    if args.out:
        metrics.save_report_csv(Path(args.out), rows)
    print(
        f"{args.label}: acc {rep.acc:.4f} f1 {rep.f1:.4f} prec {rep.prec:.4f} "
        f"rec {rep.rec:.4f} prec_no {rep.prec_no:.4f} rec_no {rep.rec_no:.4f}"
    )


def cmd_irar(args) -> None:
    predicted = ingest.load_annotations(
        Path(args.predicted), source=EventSource.PREDICTED
    )
    reference = ingest.load_annotations(
        Path(args.reference), source=EventSource.REFERENCE
    )
    if args.duration is not None:
        duration = args.duration
    elif args.manifest and args.half:
        manifest = ingest.load_manifest(Path(args.manifest))
        duration = manifest.timeline(args.half).duration_s
    else:
        raise ValidationError("pass --duration or both --manifest and --half")
    grid = _parse_grid(args.grid)
    rows = agreement_mod.agreement_sweep(predicted, reference, duration, grid)
    out = Path(args.out)
    agreement_mod.save_sweep_csv(out, rows)
    if not args.no_figures:
        report.render_agreement_sweep(rows, out.with_suffix(".png"))
    for row in rows:
        print(
            f"dt={row.delta_t:.2f}s matched={row.matched} p_o={row.p_o:.4f} "
            f"p_e={row.p_e:.4f} irar={row.rate:.4f}"
        )
    print(f"sweep: {out}")


def cmd_pr_curve(args) -> None:
    manifest = ingest.load_manifest(Path(args.manifest))
    timeline = manifest.timeline(args.half)
    scores = ingest.load_scores(Path(args.scores), timeline)
    truth = _load_reference_labels(manifest, args.half, args.annotations)
    grid = _parse_grid(args.grid)
    rows = metrics.pr_vs_threshold(scores, truth, grid)
    out = Path(args.out)
    metrics.save_pr_csv(out, rows)
    if not args.no_figures:
        report.render_pr_vs_threshold(rows, out.with_suffix(".png"))
    print(f"pr table: {out} ({len(rows)} thresholds)")


def cmd_serve(args) -> None:
    from .service import create_server, run_server

    host, port = _parse_listen(args.listen)
    server = create_server(
        manifest_paths=[Path(p) for p in args.manifest],
        data_dir=Path(args.data_dir),
        host=host,
        port=port,
        static_dir=Path(args.static) if args.static else None,
    )
    print(f"annotation service on http://{host}:{server.server_address[1]}/", flush=True)
    run_server(server)


# ---------------------------------------------------------------------------
# Parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="passdetect",
        description="Pass detection pipeline: synthesize, train, predict, evaluate, annotate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic match (or scenario splits)")
    p.add_argument("--config", help="synth config JSON")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, help=f"seed override (default {DEFAULT_SEED})")
    p.add_argument("--duration", type=float, help="half duration override, seconds")
    p.add_argument("--match-id", default="synth", help="match identifier")
    p.add_argument("--container", choices=("bin", "csv"), default="bin")
    p.add_argument("--scenarios", action="store_true", help="emit three matches + four splits")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("build-opv", help="dump position vectors for every half of a match")
    p.add_argument("--manifest", required=True)
    p.add_argument("--out-dir")
    p.add_argument("--container", choices=("bin", "csv"), default="bin")
    p.set_defaults(func=cmd_build_opv)

    p = sub.add_parser("train", help="train the sequence classifier on a split")
    p.add_argument("--split", required=True, help="split JSON (training halves)")
    p.add_argument("--config", help="classifier config JSON; flags override")
    p.add_argument("--out", required=True, help="checkpoint output path")
    p.add_argument("--history", help="training history CSV (default: alongside checkpoint)")
    p.add_argument("--no-opv", action="store_true", help="features-only ablation")
    p.add_argument("--hidden-dim", dest="hidden_dim", type=int)
    p.add_argument("--window", type=int, help="window length in frames")
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--precision", type=int, choices=(32, 64))
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="annotate a half with a trained checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--half", type=int, required=True)
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("calibrate", help="threshold report: 0.5, 0.9, and Youden")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--half", type=int, required=True)
    p.add_argument("--annotations", type=Path, help="reference events (default: manifest)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("evaluate", help="metric report row for a prediction")
    p.add_argument("--manifest", required=True)
    p.add_argument("--half", type=int, required=True)
    p.add_argument("--annotations", type=Path)
    p.add_argument("--pred-vector", help="predicted pass-vector CSV")
    p.add_argument("--pred-events", help="predicted events CSV")
    p.add_argument("--scores", help="scores CSV (thresholded with --threshold)")
    p.add_argument("--threshold", type=float, default=0.5)
    p.add_argument("--label", default="model")
    p.add_argument("--out", help="write the row as CSV")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("irar", help="agreement sweep between two event files")
    p.add_argument("--predicted", required=True)
    p.add_argument("--reference", required=True)
    p.add_argument("--duration", type=float, help="half duration in seconds")
    p.add_argument("--manifest")
    p.add_argument("--half", type=int)
    p.add_argument("--grid", default="0.5:5.0:0.5")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_irar)

    p = sub.add_parser("pr-curve", help="precision/recall vs threshold table")
    p.add_argument("--scores", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--half", type=int, required=True)
    p.add_argument("--annotations", type=Path)
    p.add_argument("--grid", default="0.0:1.0:0.05")
    p.add_argument("--out", required=True)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_pr_curve)

    p = sub.add_parser("serve", help="run the annotation service")
    p.add_argument("--manifest", action="append", required=True, help="repeatable")
    p.add_argument("--data-dir", required=True, help="annotation store directory")
    p.add_argument("--listen", default="127.0.0.1:8008")
    p.add_argument("--static", help="static UI bundle directory")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except ValidationError as exc:
        print(f"error: validation: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericError as exc:
        print(f"error: numeric: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"error: runtime: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
