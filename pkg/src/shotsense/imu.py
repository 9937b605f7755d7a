"""Core IMU data model, file ingestion, and preprocessing.

Channel order is fixed everywhere as (ax, ay, az, gx, gy, gz):
acceleration in m/s^2, angular velocity in degree/s.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np

CHANNELS = ("ax", "ay", "az", "gx", "gy", "gz")
ACCEL_SLICE = slice(0, 3)
GYRO_SLICE = slice(3, 6)

#: Fixed shot-window geometry: 1.5 s at 120 Hz, impact 1 s in.
SEGMENT_LEN = 180
IMPACT_INDEX = 120
SEGMENT_RATE = 120.0

# Channels whose sign flips when aligning left-handed players with
# right-handed ones: y acceleration, x and z angular velocity.
MIRROR_SIGNS = np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0])


class ShotClass(Enum):
    SERVE = "Serve"
    SMASH = "Smash"
    FOREHAND_STROKE = "ForehandStroke"
    BACKHAND_STROKE = "BackhandStroke"
    FOREHAND_VOLLEY = "ForehandVolley"
    BACKHAND_VOLLEY = "BackhandVolley"


SHOT_CLASSES = tuple(ShotClass)
NUM_CLASSES = len(SHOT_CLASSES)


class ParseError(ValueError):
    """Malformed recording file; carries the offending path and line."""

    def __init__(self, path, line: Optional[int], message: str):
        self.path = str(path)
        self.line = line
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")


@dataclass(frozen=True)
class SubjectMeta:
    id: str
    handedness: str = "right"  # "left" | "right"
    experience_years: float = 0.0
    gender: str = ""
    backhand: str = "one_hand"  # "one_hand" | "two_hand"

    def __post_init__(self):
        if self.handedness not in ("left", "right"):
            raise ValueError(f"handedness must be left/right, got {self.handedness!r}")
        if self.backhand not in ("one_hand", "two_hand"):
            raise ValueError(f"backhand must be one_hand/two_hand, got {self.backhand!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "handedness": self.handedness,
            "experience_years": self.experience_years,
            "gender": self.gender,
            "backhand": self.backhand,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SubjectMeta":
        return cls(
            id=str(d["id"]),
            handedness=d.get("handedness", "right"),
            experience_years=float(d.get("experience_years", 0.0)),
            gender=str(d.get("gender", "")),
            backhand=d.get("backhand", "one_hand"),
        )


@dataclass(frozen=True)
class ImuSample:
    t: float
    accel: np.ndarray  # (3,)
    gyro: np.ndarray  # (3,)


@dataclass(frozen=True)
class ImuSequence:
    """Uniformly-or-raw sampled 6-channel inertial stream.

    ``channels`` is (N, 6) in canonical order, ``times`` is (N,) seconds.
    Instances are immutable; all operations return new sequences.
    """

    rate: float
    times: np.ndarray
    channels: np.ndarray
    subject: SubjectMeta = field(default_factory=lambda: SubjectMeta(id="unknown"))
    arm: str = "passive"  # "dominant" | "passive"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        channels = np.asarray(self.channels, dtype=np.float64)
        if self.rate <= 0:
            raise ValueError(f"rate must be positive, got {self.rate}")
        if self.arm not in ("dominant", "passive"):
            raise ValueError(f"arm must be dominant/passive, got {self.arm!r}")
        if times.ndim != 1 or len(times) < 1:
            raise ValueError("sequence must contain at least one sample")
        if channels.shape != (len(times), 6):
            raise ValueError(f"channels must be (N, 6), got {channels.shape}")
        if not np.all(np.isfinite(channels)) or not np.all(np.isfinite(times)):
            raise ValueError("sequence contains non-finite values")
        if np.any(np.diff(times) <= 0):
            raise ValueError("timestamps must be strictly increasing")
        times.flags.writeable = False
        channels.flags.writeable = False
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "channels", channels)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def duration(self) -> float:
        return float(self.times[-1] - self.times[0])

    def sample(self, i: int) -> ImuSample:
        return ImuSample(
            t=float(self.times[i]),
            accel=self.channels[i, ACCEL_SLICE].copy(),
            gyro=self.channels[i, GYRO_SLICE].copy(),
        )

    def with_channels(self, channels: np.ndarray, **changes) -> "ImuSequence":
        return replace(self, channels=np.array(channels), **changes)


@dataclass(frozen=True)
class ShotSegment:
    """Fixed 180x6 window around an impact; impact at frame 120."""

    frames: np.ndarray  # (180, 6)
    label: Optional[ShotClass] = None
    subject_id: str = ""
    impact_index: int = IMPACT_INDEX

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.shape != (SEGMENT_LEN, 6):
            raise ValueError(f"segment frames must be ({SEGMENT_LEN}, 6), got {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("segment contains non-finite values")
        if self.impact_index != IMPACT_INDEX:
            raise ValueError(f"impact_index is fixed at {IMPACT_INDEX}")
        frames.flags.writeable = False
        object.__setattr__(self, "frames", frames)


@dataclass(frozen=True)
class NormScaler:
    """Min-max scaler with one scalar pair per sensor group.

    Accel bounds pool the three acceleration axes; gyro bounds pool the
    three angular-velocity axes. Values outside the fitted range are not
    clipped at apply time.
    """

    accel_min: float
    accel_max: float
    gyro_min: float
    gyro_max: float

    def __post_init__(self):
        if not (self.accel_max > self.accel_min):
            raise ValueError("degenerate accel range (max must exceed min)")
        if not (self.gyro_max > self.gyro_min):
            raise ValueError("degenerate gyro range (max must exceed min)")

    def to_dict(self) -> dict:
        return {
            "accel_min": self.accel_min,
            "accel_max": self.accel_max,
            "gyro_min": self.gyro_min,
            "gyro_max": self.gyro_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormScaler":
        return cls(
            accel_min=float(d["accel_min"]),
            accel_max=float(d["accel_max"]),
            gyro_min=float(d["gyro_min"]),
            gyro_max=float(d["gyro_max"]),
        )


ArrayLikeRows = Union[ImuSequence, ShotSegment, np.ndarray]


def _rows_of(x: ArrayLikeRows) -> np.ndarray:
    if isinstance(x, ImuSequence):
        return x.channels
    if isinstance(x, ShotSegment):
        return x.frames
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] != 6:
        raise ValueError(f"expected (N, 6) array, got shape {arr.shape}")
    return arr


# ---------------------------------------------------------------------------
# File ingestion
# ---------------------------------------------------------------------------


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".meta.json")


def load_sequence(path, fmt: Optional[str] = None) -> ImuSequence:
    """Load one recording (CSV or JSONL) plus its metadata sidecar.

    CSV schema: header ``t,ax,ay,az,gx,gy,gz``; JSONL: one object with the
    same keys per line. Rows are sorted by time. Raises ParseError with the
    offending line number on malformed input.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"recording not found: {path}")
    if fmt is None:
        fmt = "jsonl" if path.suffix == ".jsonl" else "csv"
    if fmt not in ("csv", "jsonl"):
        raise ValueError(f"unknown format {fmt!r}")

    rows = []
    if fmt == "csv":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            try:
                header = next(reader)
            except StopIteration:
                raise ParseError(path, 1, "empty file") from None
            header = [h.strip() for h in header]
            if header != ["t", *CHANNELS]:
                raise ParseError(path, 1, f"bad header {header!r}, expected t,{','.join(CHANNELS)}")
            for lineno, row in enumerate(reader, start=2):
                if not row:
                    continue
                if len(row) != 7:
                    raise ParseError(path, lineno, f"expected 7 columns, got {len(row)}")
                try:
                    rows.append([float(v) for v in row])
                except ValueError:
                    raise ParseError(path, lineno, f"malformed number in row {row!r}") from None
    else:
        with open(path) as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError:
                    raise ParseError(path, lineno, "malformed JSON") from None
                try:
                    rows.append([float(obj["t"])] + [float(obj[c]) for c in CHANNELS])
                except KeyError as exc:
                    raise ParseError(path, lineno, f"missing field {exc}") from None
                except (TypeError, ValueError):
                    raise ParseError(path, lineno, "non-numeric field") from None

    if not rows:
        raise ParseError(path, None, "no data rows")

    data = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(data)):
        bad = int(np.argwhere(~np.isfinite(data))[0][0])
        raise ParseError(path, bad + 2, "non-finite value")
    order = np.argsort(data[:, 0], kind="stable")
    data = data[order]
    if np.any(np.diff(data[:, 0]) <= 0):
        dup = int(np.argwhere(np.diff(data[:, 0]) <= 0)[0][0])
        raise ParseError(path, None, f"duplicate timestamp at sorted row {dup}")

    meta_path = _sidecar_path(path)
    subject = SubjectMeta(id="unknown")
    arm = "passive"
    rate = None
    if meta_path.exists():
        meta = json.loads(meta_path.read_text())
        subject = SubjectMeta.from_dict(meta.get("subject", {"id": "unknown"}))
        arm = meta.get("arm", "passive")
        rate = meta.get("rate")
    if rate is None:
        # Infer from median spacing when the sidecar does not state it.
        if len(data) < 2:
            raise ParseError(path, None, "cannot infer rate from a single sample; provide a sidecar")
        rate = 1.0 / float(np.median(np.diff(data[:, 0])))

    try:
        return ImuSequence(
            rate=float(rate), times=data[:, 0], channels=data[:, 1:], subject=subject, arm=arm
        )
    except ValueError as exc:
        raise ParseError(path, None, str(exc)) from None


def save_sequence(seq: ImuSequence, path, frame_labels: Optional[np.ndarray] = None,
                  shot_labels: Optional[Sequence] = None) -> None:
    """Write a recording as CSV plus its metadata sidecar.

    ``shot_labels`` is a list of (impact_frame, ShotClass) rows. Output is
    byte-stable for identical inputs (repr-based float formatting).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write("t," + ",".join(CHANNELS) + "\n")
        for t, row in zip(seq.times, seq.channels):
            fh.write(repr(float(t)) + "," + ",".join(repr(float(v)) for v in row) + "\n")

    meta = {"subject": seq.subject.to_dict(), "arm": seq.arm, "rate": seq.rate}
    if frame_labels is not None:
        labels_path = path.with_suffix(".labels.txt")
        labels_path.write_text("".join(f"{int(v)}\n" for v in frame_labels))
        meta["frame_labels"] = labels_path.name
    if shot_labels is not None:
        shots_path = path.with_suffix(".shots.csv")
        with open(shots_path, "w") as sfh:
            sfh.write("impact_frame,class_name\n")
            for frame, cls in shot_labels:
                sfh.write(f"{int(frame)},{cls.value}\n")
        meta["shot_labels"] = shots_path.name
    _sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def load_frame_labels(path, expected_len: Optional[int] = None) -> np.ndarray:
    path = Path(path)
    values = []
    for lineno, line in enumerate(path.read_text().splitlines(), start=1):
        line = line.strip()
        if not line:
            continue
        if line not in ("0", "1"):
            raise ParseError(path, lineno, f"frame label must be 0 or 1, got {line!r}")
        values.append(int(line))
    labels = np.array(values, dtype=np.int64)
    if expected_len is not None and len(labels) != expected_len:
        raise ParseError(path, None, f"expected {expected_len} labels, got {len(labels)}")
    return labels


def load_shot_labels(path):
    """Read a shot-label sidecar: rows of ``impact_frame,class_name``."""
    path = Path(path)
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["impact_frame", "class_name"]:
            raise ParseError(path, 1, f"bad shot-label header {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                frame = int(row[0])
                cls = ShotClass(row[1])
            except (ValueError, IndexError):
                raise ParseError(path, lineno, f"malformed shot label {row!r}") from None
            out.append((frame, cls))
    return out


# ---------------------------------------------------------------------------
# Preprocessing
# ---------------------------------------------------------------------------


def mirror_handedness(seq: ImuSequence) -> ImuSequence:
    """Align left-handed data with right-handed: negate ay, gx, gz.

    An involution: applying it twice restores the input (including the
    handedness flag, which is toggled).
    """
    flipped = "right" if seq.subject.handedness == "left" else "left"
    return replace(
        seq,
        channels=seq.channels * MIRROR_SIGNS,
        subject=replace(seq.subject, handedness=flipped),
    )


def mirror_frames(frames: np.ndarray) -> np.ndarray:
    """Sign-flip rule applied to a bare (N, 6) frame matrix."""
    return np.asarray(frames, dtype=np.float64) * MIRROR_SIGNS


def resample(seq: ImuSequence, target_rate: float) -> ImuSequence:
    """Resample to a uniform grid by per-channel linear interpolation.

    The new grid runs from the first to the last original timestamp at
    1/target_rate spacing; the first sample is preserved exactly.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if len(seq) < 2:
        raise ValueError("cannot resample a single-sample sequence")
    t0, t1 = float(seq.times[0]), float(seq.times[-1])
    n = int(np.floor((t1 - t0) * target_rate + 1e-9)) + 1
    new_times = t0 + np.arange(n, dtype=np.float64) / target_rate
    new_channels = np.empty((n, 6), dtype=np.float64)
    for c in range(6):
        new_channels[:, c] = np.interp(new_times, seq.times, seq.channels[:, c])
    return replace(seq, rate=float(target_rate), times=new_times, channels=new_channels)


def fit_scaler(train: Iterable[ArrayLikeRows]) -> NormScaler:
    """Fit pooled min/max bounds per sensor group on training data only."""
    accel_min = accel_max = gyro_min = gyro_max = None
    count = 0
    for item in train:
        rows = _rows_of(item)
        a, g = rows[:, ACCEL_SLICE], rows[:, GYRO_SLICE]
        lo_a, hi_a = float(a.min()), float(a.max())
        lo_g, hi_g = float(g.min()), float(g.max())
        if count == 0:
            accel_min, accel_max, gyro_min, gyro_max = lo_a, hi_a, lo_g, hi_g
        else:
            accel_min = min(accel_min, lo_a)
            accel_max = max(accel_max, hi_a)
            gyro_min = min(gyro_min, lo_g)
            gyro_max = max(gyro_max, hi_g)
        count += 1
    if count == 0:
        raise ValueError("cannot fit a scaler on an empty training list")
    return NormScaler(accel_min, accel_max, gyro_min, gyro_max)


def scale_rows(rows: np.ndarray, scaler: NormScaler) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    out = np.empty_like(rows)
    out[..., ACCEL_SLICE] = (rows[..., ACCEL_SLICE] - scaler.accel_min) / (
        scaler.accel_max - scaler.accel_min
    )
    out[..., GYRO_SLICE] = (rows[..., GYRO_SLICE] - scaler.gyro_min) / (
        scaler.gyro_max - scaler.gyro_min
    )
    return out


def unscale_rows(rows: np.ndarray, scaler: NormScaler) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.float64)
    out = np.empty_like(rows)
    out[..., ACCEL_SLICE] = rows[..., ACCEL_SLICE] * (scaler.accel_max - scaler.accel_min) + scaler.accel_min
    out[..., GYRO_SLICE] = rows[..., GYRO_SLICE] * (scaler.gyro_max - scaler.gyro_min) + scaler.gyro_min
    return out


def apply_scaler(x: ArrayLikeRows, scaler: NormScaler) -> ArrayLikeRows:
    """Map accel/gyro values to the fitted [0, 1] range (no clipping)."""
    if isinstance(x, ImuSequence):
        return x.with_channels(scale_rows(x.channels, scaler))
    if isinstance(x, ShotSegment):
        return replace(x, frames=scale_rows(x.frames, scaler))
    return scale_rows(x, scaler)


def extract_window(seq: ImuSequence, impact_frame: int,
                   label: Optional[ShotClass] = None) -> ShotSegment:
    """Cut the fixed shot window [impact-120, impact+60) at 120 Hz."""
    if abs(seq.rate - SEGMENT_RATE) > 1e-6:
        raise ValueError(f"extract_window requires a {SEGMENT_RATE:.0f} Hz sequence, got {seq.rate}")
    start = impact_frame - IMPACT_INDEX
    stop = impact_frame + (SEGMENT_LEN - IMPACT_INDEX)
    if start < 0 or stop > len(seq):
        raise ValueError(
            f"window [{start}, {stop}) out of bounds for sequence of length {len(seq)}"
        )
    return ShotSegment(frames=seq.channels[start:stop].copy(), label=label,
                       subject_id=seq.subject.id)
