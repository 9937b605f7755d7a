"""Grouped subject-wise cross-validation, metrics, and ablation studies.

Folds partition subjects, never segments, so no person's data can appear on
both sides of a split. Each of the five rounds rotates roles: three folds
train, one validates, one tests. Ablations rebuild the dataset (window
geometry, sensor subset, sample rate) and rerun the same protocol.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .imu import (
    NUM_CLASSES,
    SHOT_CLASSES,
    SubjectMeta,
    extract_window,
    fit_scaler,
    apply_scaler,
    mirror_handedness,
    scale_rows,
)
from .models.classifier import (
    ClassifierConfig,
    TrainConfig,
    class_index,
    fine_tune,
    predict_batch,
    segments_to_arrays,
    train_classifier_arrays,
)
from .models.detector import (
    DetectorConfig,
    DetectorTrainConfig,
    predict_frames,
    train_detector,
)


# ---------------------------------------------------------------------------
# Fold construction
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FoldPlan:
    """Five disjoint subject groups plus the 3/1/1 role rotation."""

    folds: tuple  # tuple of tuples of subject ids

    def __post_init__(self):
        seen = set()
        for fold in self.folds:
            for sid in fold:
                if sid in seen:
                    raise ValueError(f"subject {sid!r} appears in more than one fold")
                seen.add(sid)

    @property
    def subjects(self) -> set:
        return {sid for fold in self.folds for sid in fold}

    def rounds(self):
        """(train_ids, val_ids, test_ids) per rotation; fold r tests round r."""
        n = len(self.folds)
        out = []
        for r in range(n):
            test = list(self.folds[r])
            val = list(self.folds[(r + 1) % n])
            train = [sid for i in range(n) if i != r and i != (r + 1) % n
                     for sid in self.folds[i]]
            out.append((train, val, test))
        return out


def _experience_bucket(years: float) -> int:
    if years < 2.0:
        return 0
    if years <= 5.0:
        return 1
    return 2


def make_folds(subjects: Sequence[SubjectMeta], n_folds: int = 5, seed: int = 0) -> FoldPlan:
    """Greedy stratified partition: sort by attribute buckets, deal round-robin.

    Subject count must divide evenly. The fold order is then shuffled by the
    seed, which permutes role assignment without touching balance.
    """
    if n_folds < 2:
        raise ValueError(f"need at least 2 folds, got {n_folds}")
    if len(subjects) == 0 or len(subjects) % n_folds != 0:
        raise ValueError(
            f"subject count {len(subjects)} is not divisible by {n_folds} folds")
    ordered = sorted(subjects, key=lambda m: (
        _experience_bucket(m.experience_years), m.gender, m.backhand, m.handedness, m.id))
    folds = [[] for _ in range(n_folds)]
    for i, meta in enumerate(ordered):
        folds[i % n_folds].append(meta.id)
    rng = np.random.default_rng(seed)
    order = rng.permutation(n_folds)
    return FoldPlan(folds=tuple(tuple(folds[i]) for i in order))


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


@dataclass
class MetricsReport:
    """Aggregated evaluation: pooled confusion plus per-fold mean and spread."""

    task: str  # "classification" | "detection"
    accuracy: float
    accuracy_std: float
    f1_positive: Optional[float]
    f1_positive_std: Optional[float]
    confusion: np.ndarray  # 6x6 (classification) or 2x2 (detection) counts
    per_fold: list = field(default_factory=list)  # dicts, one per round
    audit: list = field(default_factory=list)  # leakage-audit log lines

    @property
    def per_class_accuracy(self) -> np.ndarray:
        totals = self.confusion.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            acc = np.where(totals > 0, np.diag(self.confusion) / totals, np.nan)
        return acc

    def to_dict(self) -> dict:
        d = {
            "task": self.task,
            "accuracy": self.accuracy,
            "accuracy_std": self.accuracy_std,
            "confusion": self.confusion.tolist(),
            "per_fold": self.per_fold,
            "audit": self.audit,
        }
        if self.f1_positive is not None:
            d["f1_positive"] = self.f1_positive
            d["f1_positive_std"] = self.f1_positive_std
        return d


def confusion_matrix(pred: Sequence, truth: Sequence) -> np.ndarray:
    """6x6 counts; entry (i, j) = truth class i predicted as class j."""
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} predictions vs {len(truth)} truths")
    out = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for p, t in zip(pred, truth):
        i = t if isinstance(t, (int, np.integer)) else class_index(t)
        j = p if isinstance(p, (int, np.integer)) else class_index(p)
        out[i, j] += 1
    return out


def frame_metrics(pred: np.ndarray, truth: np.ndarray) -> MetricsReport:
    """Frame-wise accuracy and positive-class F1 for one binary labeling."""
    pred = np.asarray(pred).reshape(-1)
    truth = np.asarray(truth).reshape(-1)
    if len(pred) != len(truth):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(truth)} frames")
    confusion = np.zeros((2, 2), dtype=np.int64)
    for i in range(2):
        for j in range(2):
            confusion[i, j] = int(np.sum((truth == i) & (pred == j)))
    accuracy = float(np.trace(confusion) / len(pred)) if len(pred) else 0.0
    tp, fp, fn = confusion[1, 1], confusion[0, 1], confusion[1, 0]
    denom = 2 * tp + fp + fn
    f1 = float(2 * tp / denom) if denom else 0.0
    return MetricsReport(task="detection", accuracy=accuracy, accuracy_std=0.0,
                         f1_positive=f1, f1_positive_std=0.0, confusion=confusion)


def _segment_digest(frames: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(frames, dtype=np.float64).tobytes()).hexdigest()


# ---------------------------------------------------------------------------
# Cross-validation
# ---------------------------------------------------------------------------


def _audit_round(r: int, train_ids, val_ids, test_ids, audit: list,
                 train_digests=(), test_digests=()) -> None:
    overlap = (set(test_ids) & set(train_ids)) | (set(test_ids) & set(val_ids))
    if overlap:
        raise ValueError(f"round {r}: test subjects leak into training: {sorted(overlap)}")
    data_overlap = set(train_digests) & set(test_digests)
    if data_overlap:
        raise ValueError(f"round {r}: {len(data_overlap)} test segments leak into training data")
    audit.append(
        f"round {r}: train={sorted(train_ids)} val={sorted(val_ids)} "
        f"test={sorted(test_ids)} subject_overlap=0 segment_overlap=0")


def cross_validate(task: str, dataset, plan: FoldPlan, seed: int = 0,
                   classifier_cfg: ClassifierConfig = ClassifierConfig(),
                   train_cfg: TrainConfig = TrainConfig(),
                   detector_cfg: DetectorConfig = DetectorConfig(),
                   detector_train_cfg: DetectorTrainConfig = DetectorTrainConfig()) -> MetricsReport:
    """Run every 3/1/1 rotation; scalers are fitted on train folds only.

    ``dataset`` is a synth.ClassificationDataset or synth.DetectionDataset
    (any object with the same attributes works). Emits a leakage-audit line
    per round and raises on any subject or segment overlap.
    """
    if task not in ("classification", "detection"):
        raise ValueError(f"unknown task {task!r}")
    dataset_subjects = {m.id for m in dataset.subjects}
    if dataset_subjects != plan.subjects:
        raise ValueError(
            f"fold plan subjects {sorted(plan.subjects)} do not match "
            f"dataset subjects {sorted(dataset_subjects)}")
    if task == "classification":
        return _cross_validate_classification(dataset, plan, seed, classifier_cfg, train_cfg)
    return _cross_validate_detection(dataset, plan, seed, detector_cfg, detector_train_cfg)


def _cross_validate_classification(dataset, plan, seed, cfg, train_cfg) -> MetricsReport:
    audit: list = []
    per_fold = []
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    for r, (train_ids, val_ids, test_ids) in enumerate(plan.rounds()):
        train_segs = dataset.segments_for(train_ids)
        val_segs = dataset.segments_for(val_ids)
        test_segs = dataset.segments_for(test_ids)
        _audit_round(r, train_ids, val_ids, test_ids, audit,
                     train_digests=[_segment_digest(s.frames) for s in train_segs],
                     test_digests=[_segment_digest(s.frames) for s in test_segs])
        scaler = fit_scaler(train_segs)
        x_train, y_train = segments_to_arrays([apply_scaler(s, scaler) for s in train_segs])
        x_val, y_val = segments_to_arrays([apply_scaler(s, scaler) for s in val_segs])
        x_test, y_test = segments_to_arrays([apply_scaler(s, scaler) for s in test_segs])
        result = train_classifier_arrays(x_train, y_train, x_val, y_val,
                                         cfg=cfg, seed=seed + r, train_cfg=train_cfg)
        pred = predict_batch(result.model, x_test)
        fold_confusion = confusion_matrix(pred.tolist(), y_test.tolist())
        confusion += fold_confusion
        per_fold.append({
            "round": r,
            "accuracy": float((pred == y_test).mean()),
            "best_epoch": result.best_epoch,
            "best_val_accuracy": result.best_val_accuracy,
            "history": result.history,
        })
    accs = [f["accuracy"] for f in per_fold]
    return MetricsReport(task="classification",
                         accuracy=float(np.mean(accs)), accuracy_std=float(np.std(accs)),
                         f1_positive=None, f1_positive_std=None,
                         confusion=confusion, per_fold=per_fold, audit=audit)


def _cross_validate_detection(dataset, plan, seed, cfg, train_cfg) -> MetricsReport:
    audit: list = []
    per_fold = []
    confusion = np.zeros((2, 2), dtype=np.int64)
    by_subject: dict = {}
    for session in dataset.sessions:
        by_subject.setdefault(session.subject_id, []).append(session)

    def pairs(ids, scaler):
        out = []
        for sid in ids:
            for s in by_subject.get(sid, []):
                out.append((scale_rows(s.sequence.channels, scaler), s.labels))
        return out

    for r, (train_ids, val_ids, test_ids) in enumerate(plan.rounds()):
        train_sessions = [s for sid in train_ids for s in by_subject.get(sid, [])]
        test_sessions = [s for sid in test_ids for s in by_subject.get(sid, [])]
        _audit_round(r, train_ids, val_ids, test_ids, audit,
                     train_digests=[_segment_digest(s.sequence.channels) for s in train_sessions],
                     test_digests=[_segment_digest(s.sequence.channels) for s in test_sessions])
        scaler = fit_scaler([s.sequence for s in train_sessions])
        result = train_detector(pairs(train_ids, scaler), pairs(val_ids, scaler),
                                cfg=cfg, seed=seed + r, train_cfg=train_cfg)
        fold_confusion = np.zeros((2, 2), dtype=np.int64)
        for channels, labels in pairs(test_ids, scaler):
            pred, _ = predict_frames(result.model, channels)
            fold_confusion += frame_metrics(pred, labels).confusion
        confusion += fold_confusion
        fold_report = MetricsReport(task="detection", accuracy=0.0, accuracy_std=0.0,
                                    f1_positive=None, f1_positive_std=None,
                                    confusion=fold_confusion)
        tp, fp, fn = fold_confusion[1, 1], fold_confusion[0, 1], fold_confusion[1, 0]
        denom = 2 * tp + fp + fn
        per_fold.append({
            "round": r,
            "accuracy": float(np.trace(fold_confusion) / fold_confusion.sum()),
            "f1_positive": float(2 * tp / denom) if denom else 0.0,
            "best_epoch": result.best_epoch,
            "best_val_f1": result.best_val_f1,
            "history": result.history,
        })
    accs = [f["accuracy"] for f in per_fold]
    f1s = [f["f1_positive"] for f in per_fold]
    return MetricsReport(task="detection",
                         accuracy=float(np.mean(accs)), accuracy_std=float(np.std(accs)),
                         f1_positive=float(np.mean(f1s)), f1_positive_std=float(np.std(f1s)),
                         confusion=confusion, per_fold=per_fold, audit=audit)


# ---------------------------------------------------------------------------
# Ablations
# ---------------------------------------------------------------------------

ABLATION_KINDS = ("segment_length", "sensor_subset", "sample_rate",
                  "context_transfer", "finetune")

#: (window length, impact index) variants, all cut from the extended shots.
SEGMENT_LENGTH_VARIANTS = ((120, 60), (180, 120), (240, 120), (240, 180))

SENSOR_SUBSETS = ("accel_only", "gyro_only", "both")

SAMPLE_RATES = (30.0, 60.0, 120.0)


@dataclass
class AblationReport:
    kind: str
    baseline_name: str
    variants: dict  # name -> MetricsReport
    notes: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "baseline": self.baseline_name,
            "variants": {k: v.to_dict() for k, v in self.variants.items()},
            "notes": self.notes,
        }

    def to_table(self) -> str:
        """Aligned-column text table of variant metrics vs the baseline."""
        base = self.variants.get(self.baseline_name)
        rows = [("variant", "accuracy", "std", "delta")]
        for name, rep in self.variants.items():
            delta = (f"{rep.accuracy - base.accuracy:+.4f}"
                     if base is not None else "n/a")
            rows.append((name, f"{rep.accuracy:.4f}", f"{rep.accuracy_std:.4f}", delta))
        widths = [max(len(r[i]) for r in rows) for i in range(4)]
        lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
        lines[1:1] = ["  ".join("-" * w for w in widths)]
        return "\n".join(lines + [f"note: {n}" for n in self.notes])


def _resample_windows(x: np.ndarray, src_rate: float, dst_rate: float) -> np.ndarray:
    """(N, L, 6) windows linearly resampled along time to dst_rate."""
    n, length, _ = x.shape
    out_len = int(round(length * dst_rate / src_rate))
    t_src = np.arange(length) / src_rate
    t_dst = np.arange(out_len) / dst_rate
    out = np.empty((n, out_len, 6), dtype=x.dtype)
    for i in range(n):
        for c in range(6):
            out[i, :, c] = np.interp(t_dst, t_src, x[i, :, c].astype(np.float64))
    return out


def _windows_cv(dataset, plan, windows: np.ndarray, labels: np.ndarray,
                subject_ids: list, cfg: ClassifierConfig, train_cfg, seed,
                channel_slice=slice(None)) -> MetricsReport:
    """Cross-validate raw (N, L, 6) windows with the standard protocol."""
    per_fold = []
    audit: list = []
    confusion = np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64)
    sid_arr = np.array(subject_ids)
    for r, (train_ids, val_ids, test_ids) in enumerate(plan.rounds()):
        tr = np.isin(sid_arr, train_ids)
        va = np.isin(sid_arr, val_ids)
        te = np.isin(sid_arr, test_ids)
        _audit_round(r, train_ids, val_ids, test_ids, audit)
        scaler = fit_scaler([windows[i] for i in np.flatnonzero(tr)])

        def prep(mask):
            x = scale_rows(windows[mask], scaler)[:, :, channel_slice]
            return x.transpose(0, 2, 1).astype(np.float32), labels[mask]

        x_train, y_train = prep(tr)
        x_val, y_val = prep(va)
        x_test, y_test = prep(te)
        result = train_classifier_arrays(x_train, y_train, x_val, y_val,
                                         cfg=cfg, seed=seed + r, train_cfg=train_cfg)
        pred = predict_batch(result.model, x_test)
        confusion += confusion_matrix(pred.tolist(), y_test.tolist())
        per_fold.append({"round": r, "accuracy": float((pred == y_test).mean())})
    accs = [f["accuracy"] for f in per_fold]
    return MetricsReport(task="classification",
                         accuracy=float(np.mean(accs)), accuracy_std=float(np.std(accs)),
                         f1_positive=None, f1_positive_std=None,
                         confusion=confusion, per_fold=per_fold, audit=audit)


def run_ablation(kind: str, dataset, plan: Optional[FoldPlan] = None,
                 params: Optional[dict] = None, seed: int = 0,
                 train_cfg: TrainConfig = TrainConfig(),
                 base_cfg: ClassifierConfig = ClassifierConfig(),
                 detection_dataset=None) -> AblationReport:
    """Rerun cross-validation under one controlled change.

    ``dataset`` is a synth.ClassificationDataset; ``detection_dataset``
    (synth.DetectionDataset) supplies rally recordings for context_transfer.
    ``params`` narrows the variant list, e.g. {"rates": [60, 120]}.
    """
    if kind not in ABLATION_KINDS:
        raise ValueError(f"unknown ablation kind {kind!r}; expected one of {ABLATION_KINDS}")
    params = dict(params or {})
    if plan is None:
        plan = make_folds(dataset.subjects, seed=seed)
    subject_ids = [s.subject_id for s in dataset.segments]
    _, labels = segments_to_arrays(dataset.segments)
    ext_impact = dataset.ext_impact
    extended = np.asarray(dataset.extended, dtype=np.float64)

    if kind == "segment_length":
        variants = tuple(tuple(v) for v in params.pop("variants", SEGMENT_LENGTH_VARIANTS))
        _reject_unknown(params)
        bad = [v for v in variants if v not in SEGMENT_LENGTH_VARIANTS]
        if bad:
            raise ValueError(f"unsupported segment_length variants {bad}; "
                             f"choose from {SEGMENT_LENGTH_VARIANTS}")
        report = AblationReport(kind=kind, baseline_name="180@120", variants={})
        for length, impact in variants:
            start = ext_impact - impact
            windows = extended[:, start:start + length, :]
            cfg = _replace_cfg(base_cfg, segment_len=length)
            report.variants[f"{length}@{impact}"] = _windows_cv(
                dataset, plan, windows, labels, subject_ids, cfg, train_cfg, seed)
        return report

    if kind == "sensor_subset":
        subsets = tuple(params.pop("subsets", SENSOR_SUBSETS))
        _reject_unknown(params)
        bad = [s for s in subsets if s not in SENSOR_SUBSETS]
        if bad:
            raise ValueError(f"unsupported sensor subsets {bad}; choose from {SENSOR_SUBSETS}")
        start = ext_impact - base_cfg.segment_len * 2 // 3
        windows = extended[:, start:start + base_cfg.segment_len, :]
        slices = {"accel_only": slice(0, 3), "gyro_only": slice(3, 6), "both": slice(None)}
        report = AblationReport(kind=kind, baseline_name="both", variants={})
        for name in subsets:
            n_chan = 3 if name != "both" else 6
            cfg = _replace_cfg(base_cfg, input_channels=n_chan)
            report.variants[name] = _windows_cv(
                dataset, plan, windows, labels, subject_ids, cfg, train_cfg, seed,
                channel_slice=slices[name])
        return report

    if kind == "sample_rate":
        rates = tuple(float(r) for r in params.pop("rates", SAMPLE_RATES))
        _reject_unknown(params)
        bad = [r for r in rates if r not in SAMPLE_RATES]
        if bad:
            raise ValueError(f"unsupported sample rates {bad}; choose from {SAMPLE_RATES}")
        start = ext_impact - base_cfg.segment_len * 2 // 3
        windows_120 = extended[:, start:start + base_cfg.segment_len, :]
        report = AblationReport(kind=kind, baseline_name="120Hz", variants={})
        for rate in rates:
            windows = (_resample_windows(windows_120, 120.0, rate)
                       if rate != 120.0 else windows_120)
            cfg = _replace_cfg(base_cfg, rate=rate, segment_len=windows.shape[1],
                               band_spec=base_cfg.band_spec.for_rate(rate))
            report.variants[f"{rate:.0f}Hz"] = _windows_cv(
                dataset, plan, windows, labels, subject_ids, cfg, train_cfg, seed)
        return report

    if kind == "context_transfer":
        _reject_unknown(params)
        report = AblationReport(kind=kind, baseline_name="ball_feed", variants={})
        sessions = getattr(detection_dataset, "sessions", None) or []
        rally_segs = []
        for session in sessions:
            seq = session.sequence
            if seq.subject.handedness == "left":
                seq = mirror_handedness(seq)
            for event in session.events:
                try:
                    rally_segs.append(extract_window(seq, event.impact_frame,
                                                     label=event.shot_class))
                except ValueError:
                    continue
        if not rally_segs:
            report.notes.append("context_transfer skipped: no rally-labeled data available")
            return report
        scaler = fit_scaler(dataset.segments)
        x_train, y_train = segments_to_arrays(
            [apply_scaler(s, scaler) for s in dataset.segments])
        result = train_classifier_arrays(x_train, y_train, None, None,
                                         cfg=base_cfg, seed=seed, train_cfg=train_cfg)
        x_rally, y_rally = segments_to_arrays(
            [apply_scaler(s, scaler) for s in rally_segs])
        for name, (x, y) in (("ball_feed", (x_train, y_train)),
                             ("rally", (x_rally, y_rally))):
            pred = predict_batch(result.model, x)
            report.variants[name] = MetricsReport(
                task="classification", accuracy=float((pred == y).mean()),
                accuracy_std=0.0, f1_positive=None, f1_positive_std=None,
                confusion=confusion_matrix(pred.tolist(), y.tolist()))
        report.notes.append("rally evaluation reuses training subjects; "
                            "this measures context shift, not generalization")
        return report

    # kind == "finetune"
    fraction = float(params.pop("fraction", 0.1))
    lr = float(params.pop("lr", 1e-6))
    epochs = int(params.pop("epochs", train_cfg.epochs))
    _reject_unknown(params)
    if not (0.0 < fraction < 1.0):
        raise ValueError(f"finetune fraction must be in (0, 1), got {fraction}")
    train_ids, val_ids, test_ids = plan.rounds()[0]
    train_segs = dataset.segments_for(train_ids)
    val_segs = dataset.segments_for(val_ids)
    scaler = fit_scaler(train_segs)
    x_train, y_train = segments_to_arrays([apply_scaler(s, scaler) for s in train_segs])
    x_val, y_val = segments_to_arrays([apply_scaler(s, scaler) for s in val_segs])
    result = train_classifier_arrays(x_train, y_train, x_val, y_val,
                                     cfg=base_cfg, seed=seed, train_cfg=train_cfg)
    rng = np.random.default_rng(seed)
    pre_rows, post_rows = [], []
    for sid in test_ids:
        segs = [apply_scaler(s, scaler) for s in dataset.segments_for([sid])]
        perm = rng.permutation(len(segs))
        n_adapt = max(1, int(round(fraction * len(segs))))
        adapt = [segs[i] for i in perm[:n_adapt]]
        held = [segs[i] for i in perm[n_adapt:]]
        x_held, y_held = segments_to_arrays(held)
        pre_rows.append(float((predict_batch(result.model, x_held) == y_held).mean()))
        tuned = fine_tune(result.model, adapt, lr=lr, epochs=epochs, seed=seed)
        post_rows.append(float((predict_batch(tuned, x_held) == y_held).mean()))
    report = AblationReport(kind=kind, baseline_name="pretrained", variants={})
    for name, rows in (("pretrained", pre_rows), ("finetuned", post_rows)):
        report.variants[name] = MetricsReport(
            task="classification", accuracy=float(np.mean(rows)),
            accuracy_std=float(np.std(rows)), f1_positive=None, f1_positive_std=None,
            confusion=np.zeros((NUM_CLASSES, NUM_CLASSES), dtype=np.int64),
            per_fold=[{"subject": sid, "accuracy": a} for sid, a in zip(test_ids, rows)])
    report.notes.append(
        f"fine-tuned on {fraction:.0%} of each held-out subject at lr {lr:g}")
    return report


def _reject_unknown(params: dict) -> None:
    if params:
        raise ValueError(f"unknown ablation parameters: {sorted(params)}")


def _replace_cfg(cfg: ClassifierConfig, **changes) -> ClassifierConfig:
    d = cfg.to_dict()
    band = changes.pop("band_spec", None)
    d.update(changes)
    if band is not None:
        d["band_low_cut"] = band.low_cut
        d["band_high_cut"] = band.high_cut
    return ClassifierConfig.from_dict(d)


def write_fold_curves(report: MetricsReport, path) -> None:
    """Per-fold training curves as CSV: round, epoch, loss, validation metric."""
    from pathlib import Path

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    metric = "val_accuracy" if report.task == "classification" else "val_f1"
    with open(path, "w") as fh:
        fh.write(f"round,epoch,loss,{metric}\n")
        for fold in report.per_fold:
            for row in fold.get("history", []):
                fh.write(f"{fold['round']},{row['epoch']},{row['loss']!r},"
                         f"{row[metric]!r}\n")
