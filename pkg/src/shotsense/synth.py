"""Parametric synthetic IMU generator with exact ground truth.

Each shot class has a closed-form template: class-specific low-frequency
arcs plus a mid-frequency burst near the impact, on class-specific channel
patterns. Subject profiles warp amplitude and timing; white noise is added
on top. Templates make no claim of biomechanical realism; they exist so the
pipeline can be verified end to end at desk scale with known labels.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .imu import (
    IMPACT_INDEX,
    MIRROR_SIGNS,
    SEGMENT_LEN,
    SEGMENT_RATE,
    SHOT_CLASSES,
    ImuSequence,
    ShotClass,
    ShotSegment,
    SubjectMeta,
    save_sequence,
)

# Noise scale per channel group: gyro numbers (degree/s) run much larger
# than accel (m/s^2), so sigma is interpreted in accel units and scaled up
# for the gyro channels.
GYRO_NOISE_RATIO = 15.0
DEFAULT_SIGMA = 1.6

#: Extended template extent used by the segment-length ablation:
#: 1.5 s before the impact, 1 s after.
EXT_BEFORE = 180
EXT_AFTER = 120
EXT_LEN = EXT_BEFORE + EXT_AFTER


def _stable_hash(*parts) -> int:
    digest = hashlib.sha256("|".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _rng_for(*parts) -> np.random.Generator:
    return np.random.default_rng(_stable_hash(*parts))


@dataclass(frozen=True)
class SubjectProfile:
    id: str
    amplitude_scale: dict  # ShotClass -> float in [0.6, 1.4]
    timing_offset: dict  # ShotClass -> float seconds in [-0.1, 0.1]
    sigma: float = DEFAULT_SIGMA
    handedness: str = "right"

    def __post_init__(self):
        if any(v <= 0 for v in self.amplitude_scale.values()):
            raise ValueError("amplitude scales must be positive")
        if self.sigma < 0:
            raise ValueError("sigma must be non-negative")


def make_profile(subject_id: str, seed: int, handedness: str = "right",
                 sigma: float = DEFAULT_SIGMA) -> SubjectProfile:
    rng = _rng_for("profile", seed, subject_id)
    return SubjectProfile(
        id=subject_id,
        amplitude_scale={c: float(rng.uniform(0.6, 1.4)) for c in SHOT_CLASSES},
        timing_offset={c: float(rng.uniform(-0.1, 0.1)) for c in SHOT_CLASSES},
        sigma=sigma,
        handedness=handedness,
    )


# ---------------------------------------------------------------------------
# Class templates
# ---------------------------------------------------------------------------

# Per class: low-frequency arc (freq Hz, envelope center s, envelope width s),
# mid-frequency burst (freq Hz, width s), and per-channel amplitude patterns
# for the arc and the burst (ax, ay, az, gx, gy, gz). Accel amplitudes are
# m/s^2-scale, gyro amplitudes degree/s-scale.
_TEMPLATE_PARAMS = {
    ShotClass.SERVE: dict(
        f_low=1.0, c_low=-0.35, w_low=0.30, f_mid=9.0, w_mid=0.10,
        arc=(9.0, -4.0, 3.0, 60.0, 140.0, -40.0),
        burst=(3.5, 1.5, -2.0, 30.0, -20.0, 45.0),
    ),
    ShotClass.SMASH: dict(
        f_low=2.4, c_low=-0.15, w_low=0.22, f_mid=13.0, w_mid=0.08,
        arc=(-6.0, 8.0, -5.0, -120.0, 40.0, 90.0),
        burst=(2.0, -3.5, 1.0, -40.0, 35.0, -25.0),
    ),
    ShotClass.FOREHAND_STROKE: dict(
        f_low=1.6, c_low=-0.25, w_low=0.35, f_mid=10.5, w_mid=0.12,
        arc=(7.0, 6.0, -8.0, -80.0, -110.0, 60.0),
        burst=(-3.0, 2.5, 2.0, 25.0, 40.0, -35.0),
    ),
    ShotClass.BACKHAND_STROKE: dict(
        f_low=1.3, c_low=-0.20, w_low=0.32, f_mid=8.0, w_mid=0.11,
        arc=(-8.0, -5.0, 6.0, 100.0, -70.0, -90.0),
        burst=(2.5, 3.0, -3.0, -30.0, 25.0, 40.0),
    ),
    ShotClass.FOREHAND_VOLLEY: dict(
        f_low=2.9, c_low=-0.08, w_low=0.15, f_mid=14.5, w_mid=0.07,
        arc=(4.0, -3.0, -4.0, 50.0, 70.0, 100.0),
        burst=(-2.0, 2.0, 1.5, 35.0, -30.0, 20.0),
    ),
    ShotClass.BACKHAND_VOLLEY: dict(
        f_low=2.1, c_low=-0.10, w_low=0.16, f_mid=11.5, w_mid=0.09,
        arc=(-4.0, 4.0, 5.0, -60.0, 90.0, -110.0),
        burst=(1.8, -2.2, -2.5, 40.0, 30.0, -30.0),
    ),
}


def class_template(cls: ShotClass, t: np.ndarray,
                   amplitude: float = 1.0, offset: float = 0.0) -> np.ndarray:
    """Noiseless template evaluated at times t (seconds, impact at 0).

    Returns (len(t), 6) frames. ``amplitude`` and ``offset`` apply the
    subject warp: values scale multiplicatively and time shifts by offset.
    """
    p = _TEMPLATE_PARAMS[cls]
    ts = np.asarray(t, dtype=np.float64) - offset
    env_low = np.exp(-0.5 * ((ts - p["c_low"]) / p["w_low"]) ** 2)
    env_mid = np.exp(-0.5 * (ts / p["w_mid"]) ** 2)
    arc = np.sin(2 * np.pi * p["f_low"] * (ts - p["c_low"])) * env_low
    burst = np.sin(2 * np.pi * p["f_mid"] * ts) * env_mid
    frames = (np.outer(arc, p["arc"]) + np.outer(burst, p["burst"])) * amplitude
    return frames


def noise_vector() -> np.ndarray:
    """Per-channel noise scale for sigma = 1 (accel units)."""
    return np.array([1.0, 1.0, 1.0, GYRO_NOISE_RATIO, GYRO_NOISE_RATIO, GYRO_NOISE_RATIO])


def template_separation(sigma: float = DEFAULT_SIGMA) -> float:
    """Smallest pairwise noise-whitened L2 distance between canonical
    templates over the standard 180-frame window."""
    t = (np.arange(SEGMENT_LEN) - IMPACT_INDEX) / SEGMENT_RATE
    whiten = sigma * noise_vector()
    temps = [class_template(c, t) / whiten for c in SHOT_CLASSES]
    dists = [
        float(np.linalg.norm(temps[i] - temps[j]))
        for i in range(len(temps))
        for j in range(i + 1, len(temps))
    ]
    return min(dists)


# ---------------------------------------------------------------------------
# Generation
# ---------------------------------------------------------------------------


def gen_shot_extended(cls: ShotClass, profile: SubjectProfile, seed: int,
                      instance: int = 0) -> np.ndarray:
    """(EXT_LEN, 6) frames: impact at index EXT_BEFORE; deterministic per
    (class, profile id, seed, instance)."""
    rng = _rng_for("shot", seed, profile.id, cls.value, instance)
    t = (np.arange(EXT_LEN) - EXT_BEFORE) / SEGMENT_RATE
    frames = class_template(cls, t, amplitude=profile.amplitude_scale[cls],
                            offset=profile.timing_offset[cls])
    frames = frames + rng.normal(size=frames.shape) * (profile.sigma * noise_vector())
    if profile.handedness == "left":
        frames = frames * MIRROR_SIGNS
    return frames


def slice_window(extended: np.ndarray, length: int, impact_pos: int,
                 ext_impact: int = EXT_BEFORE) -> np.ndarray:
    """Cut a (length, 6) window from an extended shot with the impact at
    ``impact_pos``."""
    start = ext_impact - impact_pos
    stop = start + length
    if start < 0 or stop > len(extended):
        raise ValueError(f"window [{start}, {stop}) exceeds extended shot of {len(extended)}")
    return extended[start:stop]


def gen_shot(cls: ShotClass, profile: SubjectProfile, seed: int,
             instance: int = 0) -> ShotSegment:
    """One labeled 180x6 segment with the impact at frame 120."""
    extended = gen_shot_extended(cls, profile, seed, instance)
    return ShotSegment(frames=slice_window(extended, SEGMENT_LEN, IMPACT_INDEX),
                       label=cls, subject_id=profile.id)


@dataclass(frozen=True)
class SessionScript:
    shots: tuple  # ((impact_time_s, ShotClass), ...)
    length_s: float

    def __post_init__(self):
        times = [t for t, _ in self.shots]
        if any(t < 1.0 or t > self.length_s - 1.0 for t in times):
            raise ValueError("impact times must be at least 1 s from the session ends")
        if any(b - a < 1.5 for a, b in zip(times, times[1:])):
            raise ValueError("impacts must be at least 1.5 s apart")

    @property
    def n_frames(self) -> int:
        return int(round(self.length_s * SEGMENT_RATE))


def make_script(n_shots: int, seed: int, spacing_s: float = 4.0,
                jitter_s: float = 0.4) -> SessionScript:
    """Regularly spaced shots with jitter and random classes."""
    rng = _rng_for("script", seed)
    times = 1.5 + spacing_s * np.arange(n_shots) + rng.uniform(-jitter_s, jitter_s, n_shots)
    classes = [SHOT_CLASSES[i] for i in rng.integers(0, len(SHOT_CLASSES), n_shots)]
    length = float(times[-1]) + 1.5 if n_shots else 10.0
    return SessionScript(shots=tuple(zip(times.tolist(), classes)), length_s=length)


@dataclass
class TrueShot:
    impact_frame: int
    shot_class: ShotClass


def gen_session(script: SessionScript, profile: SubjectProfile,
                rate: float = SEGMENT_RATE, seed: int = 0,
                subject: Optional[SubjectMeta] = None,
                arm: str = "passive",
                impact_spikes: bool = False):
    """A scripted rally: idle noise plus inserted shot templates.

    Returns (ImuSequence, frame labels, list of TrueShot). Frame labels are
    1 exactly on each shot's 180-frame window. ``impact_spikes`` adds the
    sharp dominant-arm acceleration jerk at each impact.
    """
    if abs(rate - SEGMENT_RATE) > 1e-9:
        raise ValueError("sessions are generated at 120 Hz; resample afterwards if needed")
    rng = _rng_for("session", seed, profile.id)
    n = script.n_frames
    frames = rng.normal(size=(n, 6)) * (0.25 * profile.sigma * noise_vector())
    # Gentle body sway so idle stretches are not pure white noise.
    t_all = np.arange(n) / rate
    frames[:, 0] += 0.4 * np.sin(2 * np.pi * 0.3 * t_all)
    frames[:, 4] += 4.0 * np.sin(2 * np.pi * 0.45 * t_all + 1.0)

    labels = np.zeros(n, dtype=np.int64)
    events: list[TrueShot] = []
    last_stop = -1
    for i, (time_s, cls) in enumerate(script.shots):
        impact = int(round(time_s * rate))
        start = impact - IMPACT_INDEX
        stop = impact + (SEGMENT_LEN - IMPACT_INDEX)
        if start < 0 or stop > n:
            raise ValueError(f"scripted shot at {time_s} s does not fit in the session")
        if start < last_stop:
            raise ValueError(f"scripted shots overlap at {time_s} s")
        last_stop = stop
        t = (np.arange(start, stop) - impact) / rate
        shot = class_template(cls, t, amplitude=profile.amplitude_scale[cls],
                              offset=profile.timing_offset[cls])
        shot = shot + rng.normal(size=shot.shape) * (0.75 * profile.sigma * noise_vector())
        frames[start:stop] += shot
        if impact_spikes:
            spike = np.exp(-0.5 * ((np.arange(start, stop) - impact) / 1.5) ** 2)
            frames[start:stop, 0:3] += 60.0 * spike[:, None]
        labels[start:stop] = 1
        events.append(TrueShot(impact_frame=impact, shot_class=cls))

    if profile.handedness == "left":
        frames = frames * MIRROR_SIGNS
    if subject is None:
        subject = SubjectMeta(id=profile.id, handedness=profile.handedness)
    seq = ImuSequence(rate=rate, times=np.arange(n) / rate, channels=frames,
                      subject=subject, arm=arm)
    return seq, labels, events


# ---------------------------------------------------------------------------
# Cohort
# ---------------------------------------------------------------------------


@dataclass
class ClassificationDataset:
    subjects: list  # SubjectMeta
    segments: list  # ShotSegment (mirrored to right-handed canonical form)
    extended: np.ndarray  # (N, EXT_LEN, 6), aligned with segments
    ext_impact: int = EXT_BEFORE

    def segments_for(self, subject_ids) -> list:
        wanted = set(subject_ids)
        return [s for s in self.segments if s.subject_id in wanted]


@dataclass
class DetectionSession:
    subject_id: str
    sequence: ImuSequence
    labels: np.ndarray
    events: list  # TrueShot


@dataclass
class DetectionDataset:
    subjects: list  # SubjectMeta
    sessions: list  # DetectionSession


@dataclass
class CohortDataset:
    classification: ClassificationDataset
    detection: DetectionDataset
    profiles: list = field(default_factory=list)


def _cohort_meta(i: int, n_subjects: int) -> SubjectMeta:
    # Structured grid so the fold-balancing sort sees contiguous groups:
    # experience splits the cohort in half, gender alternates, backhand
    # alternates at period two. A couple of left-handers exercise mirroring.
    experience = 1.0 + 5.0 * (i >= n_subjects // 2) + (i % 3)
    return SubjectMeta(
        id=f"S{i:02d}",
        handedness="left" if i % 10 == 9 else "right",
        experience_years=float(experience),
        gender="F" if i % 2 else "M",
        backhand="two_hand" if (i // 2) % 2 else "one_hand",
    )


def gen_cohort(n_subjects: int = 20, seed: int = 0, shots_per_class: int = 50,
               n_detection_subjects: int = 10, shots_per_session: int = 8,
               sigma: float = DEFAULT_SIGMA) -> CohortDataset:
    """Labeled classification segments for every subject plus scripted rally
    sessions for the first ``n_detection_subjects`` subjects.

    Segments are stored in canonical (right-handed) orientation: left-handed
    subjects are generated left-handed and mirrored, exactly as real data
    would flow through preprocessing.
    """
    subjects = [_cohort_meta(i, n_subjects) for i in range(n_subjects)]
    profiles = [make_profile(m.id, seed, handedness=m.handedness, sigma=sigma)
                for m in subjects]

    segments: list[ShotSegment] = []
    extended_rows = []
    for profile in profiles:
        for cls in SHOT_CLASSES:
            for j in range(shots_per_class):
                ext = gen_shot_extended(cls, profile, seed, instance=j)
                if profile.handedness == "left":
                    ext = ext * MIRROR_SIGNS  # canonical orientation
                extended_rows.append(np.asarray(ext, dtype=np.float32))
                segments.append(ShotSegment(
                    frames=slice_window(ext, SEGMENT_LEN, IMPACT_INDEX),
                    label=cls, subject_id=profile.id))
    extended = np.stack(extended_rows) if extended_rows else np.zeros((0, EXT_LEN, 6), np.float32)

    sessions = []
    for profile, meta in zip(profiles[:n_detection_subjects], subjects[:n_detection_subjects]):
        script = make_script(shots_per_session, seed=_stable_hash(seed, profile.id))
        seq, labels, events = gen_session(script, profile, seed=seed, subject=meta)
        sessions.append(DetectionSession(subject_id=meta.id, sequence=seq,
                                         labels=labels, events=events))

    return CohortDataset(
        classification=ClassificationDataset(subjects=subjects, segments=segments,
                                             extended=extended),
        detection=DetectionDataset(subjects=subjects[:n_detection_subjects],
                                   sessions=sessions),
        profiles=profiles,
    )


def nearest_template_accuracy(segments: Sequence[ShotSegment]) -> float:
    """Oracle: classify by L2 distance to the canonical noiseless templates
    in noise-whitened space."""
    t = (np.arange(SEGMENT_LEN) - IMPACT_INDEX) / SEGMENT_RATE
    whiten = noise_vector()
    temps = np.stack([class_template(c, t) / whiten for c in SHOT_CLASSES])
    correct = 0
    for seg in segments:
        x = seg.frames / whiten
        dists = np.linalg.norm(temps - x[None], axis=(1, 2))
        if SHOT_CLASSES[int(dists.argmin())] is seg.label:
            correct += 1
    return correct / len(segments)


# ---------------------------------------------------------------------------
# On-disk form (same CSV + sidecar schema as real recordings)
# ---------------------------------------------------------------------------


def write_cohort(dataset: CohortDataset, root) -> None:
    """Write ball-feed style classification recordings and rally sessions.

    Classification: one recording per (subject, class) containing every
    segment embedded at 2 s spacing, with a shot-label sidecar. Detection:
    one rally recording per session with a frame-label sidecar.
    """
    root = Path(root)
    by_subject_class: dict[tuple, list[ShotSegment]] = {}
    for seg in dataset.classification.segments:
        by_subject_class.setdefault((seg.subject_id, seg.label), []).append(seg)

    meta_by_id = {m.id: m for m in dataset.classification.subjects}
    for (subject_id, cls), segs in by_subject_class.items():
        spacing = SEGMENT_LEN + 60
        n = spacing * len(segs) + 120
        frames = np.zeros((n, 6))
        shot_rows = []
        for j, seg in enumerate(segs):
            start = 60 + j * spacing
            frames[start:start + SEGMENT_LEN] = seg.frames
            shot_rows.append((start + IMPACT_INDEX, cls))
        # Written segments are already in canonical orientation.
        meta = meta_by_id[subject_id]
        seq = ImuSequence(rate=SEGMENT_RATE, times=np.arange(n) / SEGMENT_RATE,
                          channels=frames,
                          subject=SubjectMeta(**{**meta.to_dict(), "handedness": "right"}),
                          arm="passive")
        save_sequence(seq, root / "classification" / subject_id / f"{cls.value}.csv",
                      shot_labels=shot_rows)

    for session in dataset.detection.sessions:
        save_sequence(session.sequence,
                      root / "detection" / session.subject_id / "rally.csv",
                      frame_labels=session.labels,
                      shot_labels=[(e.impact_frame, e.shot_class) for e in session.events])

    subjects_doc = [m.to_dict() for m in dataset.classification.subjects]
    import json

    (root / "cohort.json").write_text(json.dumps(
        {"subjects": subjects_doc,
         "detection_subjects": [m.id for m in dataset.detection.subjects]},
        indent=2, sort_keys=True) + "\n")


def load_cohort(root) -> CohortDataset:
    """Read a written cohort directory back into in-memory datasets.

    Extended windows are re-cut from the stored recordings, so flanks that
    fall into the silent gaps between embedded segments come back as zeros.
    """
    import json

    root = Path(root)
    doc_path = root / "cohort.json"
    if not doc_path.exists():
        raise FileNotFoundError(f"cohort manifest not found: {doc_path}")
    doc = json.loads(doc_path.read_text())
    subjects = [SubjectMeta.from_dict(d) for d in doc["subjects"]]

    from .imu import load_frame_labels, load_sequence, load_shot_labels

    segments: list[ShotSegment] = []
    extended_rows = []
    for meta in subjects:
        subject_dir = root / "classification" / meta.id
        for path in sorted(subject_dir.glob("*.csv")):
            if path.suffixes[-2:] == [".shots", ".csv"]:
                continue
            seq = load_sequence(path)
            for impact, cls in load_shot_labels(path.with_suffix(".shots.csv")):
                segments.append(ShotSegment(
                    frames=seq.channels[impact - IMPACT_INDEX:
                                        impact + SEGMENT_LEN - IMPACT_INDEX],
                    label=cls, subject_id=meta.id))
                ext = np.zeros((EXT_LEN, 6), dtype=np.float32)
                lo = max(0, impact - EXT_BEFORE)
                hi = min(len(seq), impact + EXT_AFTER)
                ext[lo - (impact - EXT_BEFORE):EXT_LEN - (impact + EXT_AFTER - hi)] = \
                    seq.channels[lo:hi]
                extended_rows.append(ext)
    extended = (np.stack(extended_rows) if extended_rows
                else np.zeros((0, EXT_LEN, 6), np.float32))

    sessions = []
    for sid in doc["detection_subjects"]:
        path = root / "detection" / sid / "rally.csv"
        seq = load_sequence(path)
        labels = load_frame_labels(path.with_suffix(".labels.txt"), expected_len=len(seq))
        events = [TrueShot(impact_frame=f, shot_class=c)
                  for f, c in load_shot_labels(path.with_suffix(".shots.csv"))]
        sessions.append(DetectionSession(subject_id=sid, sequence=seq,
                                         labels=labels, events=events))

    detection_ids = set(doc["detection_subjects"])
    return CohortDataset(
        classification=ClassificationDataset(subjects=subjects, segments=segments,
                                             extended=extended),
        detection=DetectionDataset(
            subjects=[m for m in subjects if m.id in detection_ids],
            sessions=sessions),
    )
