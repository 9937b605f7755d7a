"""Tennis shot detection and classification from passive-arm IMU data."""

from .imu import (
    CHANNELS,
    IMPACT_INDEX,
    SEGMENT_LEN,
    SEGMENT_RATE,
    SHOT_CLASSES,
    ImuSequence,
    NormScaler,
    ParseError,
    ShotClass,
    ShotSegment,
    SubjectMeta,
    apply_scaler,
    extract_window,
    fit_scaler,
    load_sequence,
    mirror_handedness,
    resample,
    save_sequence,
)
from .pipeline import SessionReport, run_pipeline
from .checkpoint import (
    CheckpointError,
    ModelCheckpoint,
    checkpoint_from_model,
    load_checkpoint,
    save_checkpoint,
)

__version__ = "0.1.0"

__all__ = [
    "CHANNELS", "IMPACT_INDEX", "SEGMENT_LEN", "SEGMENT_RATE", "SHOT_CLASSES",
    "ImuSequence", "NormScaler", "ParseError", "ShotClass", "ShotSegment",
    "SubjectMeta", "apply_scaler", "extract_window", "fit_scaler",
    "load_sequence", "mirror_handedness", "resample", "save_sequence",
    "SessionReport", "run_pipeline",
    "CheckpointError", "ModelCheckpoint", "checkpoint_from_model",
    "load_checkpoint", "save_checkpoint",
    "__version__",
]
