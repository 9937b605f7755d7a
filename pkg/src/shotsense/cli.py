"""Command-line surface: synth, train, evaluate, analyze, report, gradcheck.

Heavy imports happen inside the handlers so ``--threads`` can cap the BLAS
pool before numpy loads, and so ``--help`` stays fast.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shotsense",
        description="Tennis shot detection and classification from "
                    "passive-arm IMU recordings.")
    parser.add_argument("--seed", type=int, default=0, help="global RNG seed")
    parser.add_argument("--config", type=Path, default=None,
                        help="JSON file of option defaults (flag values win)")
    parser.add_argument("--threads", type=int, default=None,
                        help="cap the numpy/BLAS thread count")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic cohort on disk")
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--subjects", type=int, default=20)
    p.add_argument("--shots-per-class", type=int, default=50)
    p.add_argument("--detection-subjects", type=int, default=10)
    p.add_argument("--shots-per-session", type=int, default=8)
    p.add_argument("--sigma", type=float, default=None,
                   help="noise level (default: generator's own)")

    p = sub.add_parser("train-classifier", help="train the shot classifier")
    p.add_argument("--data", type=Path, required=True, help="cohort directory")
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--val-subjects", type=int, default=2,
                   help="subjects held out for the best-epoch snapshot")

    p = sub.add_parser("train-detector", help="train the frame-wise detector")
    p.add_argument("--data", type=Path, required=True, help="cohort directory")
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--val-subjects", type=int, default=2)

    p = sub.add_parser("evaluate", help="grouped cross-validation and ablations")
    p.add_argument("--task", choices=("classification", "detection"),
                   default="classification")
    p.add_argument("--data", type=Path, required=True, help="cohort directory")
    p.add_argument("--epochs", type=int, default=None,
                   help="override training epochs for every fold")
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--batch-size", type=int, default=64)
    p.add_argument("--ablation", action="append", default=[],
                   metavar="KIND", help="also run an ablation (repeatable)")
    p.add_argument("--out", type=Path, default=None, help="write report JSON here")
    p.add_argument("--curves", type=Path, default=None,
                   help="write per-fold training curves CSV here")

    p = sub.add_parser("analyze", help="run the full pipeline on one recording")
    p.add_argument("--recording", type=Path, required=True)
    p.add_argument("--detector", type=Path, required=True, help="detector checkpoint")
    p.add_argument("--classifier", type=Path, required=True, help="classifier checkpoint")
    p.add_argument("--out", type=Path, required=True, help="report JSON path")
    p.add_argument("--session-id", default=None,
                   help="report session id (default: recording stem)")

    p = sub.add_parser("report", help="render a saved session report as text")
    p.add_argument("report", type=Path, help="report JSON file")

    p = sub.add_parser("gradcheck", help="run the numeric gradient audit")
    p.add_argument("--shapes", type=int, default=20,
                   help="random shapes checked per operation")

    return parser


def _apply_config(parser: argparse.ArgumentParser, argv) -> argparse.Namespace:
    """Two-pass parse: --config supplies defaults, explicit flags override."""
    pre, _ = parser.parse_known_args(argv)
    if pre.config is not None:
        if not pre.config.exists():
            parser.error(f"config file not found: {pre.config}")
        try:
            overrides = json.loads(pre.config.read_text())
        except json.JSONDecodeError as exc:
            parser.error(f"malformed config {pre.config}: {exc}")
        if not isinstance(overrides, dict):
            parser.error(f"config {pre.config} must hold a JSON object")
        defaults = {k.replace("-", "_"): v for k, v in overrides.items()}
        parser.set_defaults(**defaults)
        # Subparser defaults override namespace values set by the main
        # parser, so the config has to be pushed into every subparser too.
        for action in parser._actions:
            if isinstance(action, argparse._SubParsersAction):
                for subparser in action.choices.values():
                    subparser.set_defaults(**defaults)
    return parser.parse_args(argv)


def _require(path: Path, what: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _split_subjects(subjects, n_val: int):
    ids = sorted(m.id for m in subjects)
    if not (0 < n_val < len(ids)):
        raise ValueError(
            f"--val-subjects must be between 1 and {len(ids) - 1}, got {n_val}")
    return ids[:-n_val], ids[-n_val:]


def cmd_synth(args) -> int:
    from . import synth

    kwargs = {} if args.sigma is None else {"sigma": args.sigma}
    cohort = synth.gen_cohort(n_subjects=args.subjects, seed=args.seed,
                              shots_per_class=args.shots_per_class,
                              n_detection_subjects=args.detection_subjects,
                              shots_per_session=args.shots_per_session, **kwargs)
    synth.write_cohort(cohort, args.out)
    n_seg = len(cohort.classification.segments)
    n_ses = len(cohort.detection.sessions)
    print(f"wrote {n_seg} segments over {args.subjects} subjects and "
          f"{n_ses} rally sessions to {args.out}")
    return 0


def cmd_train_classifier(args) -> int:
    from . import synth
    from .checkpoint import checkpoint_from_model, save_checkpoint
    from .imu import apply_scaler, fit_scaler
    from .models.classifier import TrainConfig, train_classifier

    cohort = synth.load_cohort(_require(args.data, "cohort directory"))
    data = cohort.classification
    train_ids, val_ids = _split_subjects(data.subjects, args.val_subjects)
    train_segs = data.segments_for(train_ids)
    val_segs = data.segments_for(val_ids)
    scaler = fit_scaler(train_segs)
    result = train_classifier(
        [apply_scaler(s, scaler) for s in train_segs],
        [apply_scaler(s, scaler) for s in val_segs],
        seed=args.seed,
        train_cfg=TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                              lr=args.lr))
    meta = {"seed": args.seed, "epochs": args.epochs,
            "best_epoch": result.best_epoch,
            "best_val_accuracy": result.best_val_accuracy}
    save_checkpoint(checkpoint_from_model(result.model, scaler, meta), args.out)
    print(f"classifier: best validation accuracy {result.best_val_accuracy:.4f} "
          f"at epoch {result.best_epoch}; saved to {args.out}")
    return 0


def cmd_train_detector(args) -> int:
    from . import synth
    from .checkpoint import checkpoint_from_model, save_checkpoint
    from .imu import fit_scaler, scale_rows
    from .models.detector import DetectorTrainConfig, train_detector

    cohort = synth.load_cohort(_require(args.data, "cohort directory"))
    sessions = cohort.detection.sessions
    if not sessions:
        raise ValueError(f"no detection sessions in {args.data}")
    train_ids, val_ids = _split_subjects(cohort.detection.subjects, args.val_subjects)
    train_s = [s for s in sessions if s.subject_id in train_ids]
    val_s = [s for s in sessions if s.subject_id in val_ids]
    scaler = fit_scaler([s.sequence for s in train_s])
    pairs = lambda ss: [(scale_rows(s.sequence.channels, scaler), s.labels) for s in ss]
    result = train_detector(pairs(train_s), pairs(val_s), seed=args.seed,
                            train_cfg=DetectorTrainConfig(epochs=args.epochs, lr=args.lr))
    meta = {"seed": args.seed, "epochs": args.epochs,
            "best_epoch": result.best_epoch, "best_val_f1": result.best_val_f1}
    save_checkpoint(checkpoint_from_model(result.model, scaler, meta), args.out)
    print(f"detector: best validation F1 {result.best_val_f1:.4f} "
          f"at epoch {result.best_epoch}; saved to {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    from . import evalkit, synth
    from .models.classifier import TrainConfig
    from .models.detector import DetectorTrainConfig

    cohort = synth.load_cohort(_require(args.data, "cohort directory"))
    train_cfg = TrainConfig(
        epochs=args.epochs if args.epochs is not None else TrainConfig().epochs,
        batch_size=args.batch_size,
        lr=args.lr if args.lr is not None else TrainConfig().lr)
    det_cfg = DetectorTrainConfig(
        epochs=args.epochs if args.epochs is not None else DetectorTrainConfig().epochs,
        lr=args.lr if args.lr is not None else DetectorTrainConfig().lr)

    dataset = (cohort.classification if args.task == "classification"
               else cohort.detection)
    plan = evalkit.make_folds(dataset.subjects, seed=args.seed)
    report = evalkit.cross_validate(args.task, dataset, plan, seed=args.seed,
                                    train_cfg=train_cfg, detector_train_cfg=det_cfg)
    print(f"{args.task}: accuracy {report.accuracy:.4f} +- {report.accuracy_std:.4f}"
          + (f", F1 {report.f1_positive:.4f} +- {report.f1_positive_std:.4f}"
             if report.f1_positive is not None else ""))
    for line in report.audit:
        print("  " + line)

    doc = {"cross_validation": report.to_dict(), "ablations": {}}
    for kind in args.ablation:
        ab = evalkit.run_ablation(kind, cohort.classification, plan=None,
                                  seed=args.seed, train_cfg=train_cfg,
                                  detection_dataset=cohort.detection)
        print(f"\nablation {kind}:\n{ab.to_table()}")
        doc["ablations"][kind] = ab.to_dict()

    if args.out is not None:
        args.out.parent.mkdir(parents=True, exist_ok=True)
        args.out.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n")
        print(f"\nwrote {args.out}")
    if args.curves is not None:
        evalkit.write_fold_curves(report, args.curves)
        print(f"wrote {args.curves}")
    return 0


def cmd_analyze(args) -> int:
    from .checkpoint import load_checkpoint
    from .imu import load_sequence
    from .pipeline import run_pipeline

    recording = load_sequence(_require(args.recording, "recording"))
    det_ckpt = load_checkpoint(_require(args.detector, "detector checkpoint"))
    cls_ckpt = load_checkpoint(_require(args.classifier, "classifier checkpoint"))
    session_id = args.session_id or args.recording.stem
    report = run_pipeline(recording, det_ckpt, cls_ckpt, session_id=session_id)
    report.save(args.out)
    print(f"{len(report.events)} shots detected; wrote {args.out}")
    return 0


def cmd_report(args) -> int:
    from .pipeline import SessionReport, render_report

    report = SessionReport.load(_require(args.report, "report"))
    sys.stdout.write(render_report(report))
    return 0


def cmd_gradcheck(args) -> int:
    from .audit import run_audit

    report = run_audit(seed=args.seed, n_shapes=args.shapes)
    print("\n".join(report.lines()))
    return 0 if report.passed else 1


HANDLERS = {
    "synth": cmd_synth,
    "train-classifier": cmd_train_classifier,
    "train-detector": cmd_train_detector,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
    "report": cmd_report,
    "gradcheck": cmd_gradcheck,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = _apply_config(parser, argv)
    if args.threads is not None:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                    "NUMEXPR_NUM_THREADS"):
            os.environ[var] = str(args.threads)
    try:
        return HANDLERS[args.command](args)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
