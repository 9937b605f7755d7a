"""End-to-end session analysis: recording in, shot report out.

The detector scans the whole normalized recording for shot windows; the
classifier then labels the 180-frame segment around each refined event.
Both models carry their own scaler, fitted on their training folds, so the
recording is normalized independently for each.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import CheckpointError, ModelCheckpoint
from .imu import (
    SEGMENT_RATE,
    SHOT_CLASSES,
    ImuSequence,
    ShotClass,
    apply_scaler,
    extract_window,
    mirror_handedness,
    resample,
    scale_rows,
)
from .models.classifier import predict as classify_segment
from .models.detector import RefineConfig, predict_frames, refine

REPORT_VERSION = 1

#: Shortest recording the pipeline accepts, in seconds.
MIN_DURATION_S = 1.5


@dataclass
class ReportEvent:
    t_s: float  # impact estimate in seconds from the recording start
    shot_class: ShotClass
    confidence: float  # classifier main-head max probability

    def to_dict(self) -> dict:
        return {"t_s": self.t_s, "class": self.shot_class.value,
                "confidence": self.confidence}


@dataclass
class SessionReport:
    session_id: str
    start: float  # first timestamp of the recording, seconds
    duration_s: float
    events: list = field(default_factory=list)  # ReportEvent, sorted by t_s
    version: int = REPORT_VERSION

    @property
    def tallies(self) -> dict:
        out = {c.value: 0 for c in SHOT_CLASSES}
        for e in self.events:
            out[e.shot_class.value] += 1
        return out

    def to_dict(self) -> dict:
        return {
            "version": self.version,
            "session": {"id": self.session_id, "start": self.start,
                        "duration_s": self.duration_s},
            "events": [e.to_dict() for e in self.events],
            "tallies": self.tallies,
        }

    def to_json(self) -> str:
        """Byte-stable serialization (sorted keys, repr-exact floats)."""
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_json())

    @classmethod
    def from_dict(cls, d: dict) -> "SessionReport":
        if d.get("version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {d.get('version')}")
        events = [ReportEvent(t_s=float(e["t_s"]), shot_class=ShotClass(e["class"]),
                              confidence=float(e["confidence"]))
                  for e in d["events"]]
        report = cls(session_id=str(d["session"]["id"]),
                     start=float(d["session"]["start"]),
                     duration_s=float(d["session"]["duration_s"]),
                     events=events)
        if d.get("tallies") != report.tallies:
            raise ValueError("report tallies do not match its event list")
        return report

    @classmethod
    def load(cls, path) -> "SessionReport":
        return cls.from_dict(json.loads(Path(path).read_text()))


def render_report(report: SessionReport) -> str:
    """Human-readable timeline plus per-class tally table."""
    lines = [f"session {report.session_id}: {report.duration_s:.1f} s, "
             f"{len(report.events)} shots", "", "timeline:"]
    if not report.events:
        lines.append("  (no shots detected)")
    for e in report.events:
        lines.append(f"  {e.t_s:8.2f} s  {e.shot_class.value:<15s} "
                     f"confidence {e.confidence:.3f}")
    lines += ["", "tally:"]
    width = max(len(c.value) for c in SHOT_CLASSES)
    for name, count in report.tallies.items():
        lines.append(f"  {name:<{width}s}  {count}")
    return "\n".join(lines) + "\n"


def run_pipeline(recording: ImuSequence, det_ckpt: ModelCheckpoint,
                 cls_ckpt: ModelCheckpoint, session_id: str = "session",
                 refine_cfg: RefineConfig = RefineConfig()) -> SessionReport:
    """Detect, refine, and classify every shot in one recording.

    Steps: resample to 120 Hz if needed, mirror left-handed players into the
    canonical orientation, normalize with the detector's scaler, predict
    frame labels, refine into fixed windows, then cut and classify each
    window with the classifier's scaler.
    """
    det_ckpt.expect_kind("detector")
    cls_ckpt.expect_kind("classifier")
    if det_ckpt.scaler is None or cls_ckpt.scaler is None:
        raise CheckpointError("malformed_header",
                              "pipeline checkpoints must carry their scalers")
    if recording.duration < MIN_DURATION_S:
        raise ValueError(
            f"recording of {recording.duration:.3f} s is shorter than the "
            f"minimum {MIN_DURATION_S} s")

    seq = recording
    if abs(seq.rate - SEGMENT_RATE) > 1e-6:
        seq = resample(seq, SEGMENT_RATE)
    if seq.subject.handedness == "left":
        seq = mirror_handedness(seq)

    detector = det_ckpt.build_model()
    classifier = cls_ckpt.build_model()

    det_input = scale_rows(seq.channels, det_ckpt.scaler)
    labels, probs = predict_frames(detector, det_input)
    events = refine(labels, probs, refine_cfg)

    report = SessionReport(session_id=session_id, start=float(seq.times[0]),
                           duration_s=seq.duration)
    for event in events:
        # The impact estimate sits 30 frames past the window center, so the
        # classification window [impact-120, impact+60) coincides exactly
        # with the refined window and is always in bounds.
        segment = extract_window(seq, event.impact_frame)
        cls, class_probs = classify_segment(classifier,
                                            apply_scaler(segment, cls_ckpt.scaler))
        report.events.append(ReportEvent(
            t_s=float(seq.times[0] + event.impact_frame / SEGMENT_RATE),
            shot_class=cls,
            confidence=float(class_probs.max())))
    report.events.sort(key=lambda e: e.t_s)
    return report
