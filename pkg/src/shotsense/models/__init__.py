from .classifier import (
    ClassifierConfig,
    ClassifierOutput,
    ShotClassifier,
    TrainConfig,
    TrainResult,
    classifier_loss,
    clone_classifier,
    fine_tune,
    predict,
    predict_batch,
    segments_to_arrays,
    train_classifier,
    train_classifier_arrays,
)
from .detector import (
    DetectorConfig,
    DetectorTrainConfig,
    DetectorTrainResult,
    RefineConfig,
    ShotDetector,
    ShotEvent,
    detector_loss,
    positive_runs,
    predict_frames,
    refine,
    train_detector,
)

__all__ = [
    "ClassifierConfig", "ClassifierOutput", "ShotClassifier", "TrainConfig",
    "TrainResult", "classifier_loss", "clone_classifier", "fine_tune",
    "predict", "predict_batch", "segments_to_arrays", "train_classifier",
    "train_classifier_arrays",
    "DetectorConfig", "DetectorTrainConfig", "DetectorTrainResult",
    "RefineConfig", "ShotDetector", "ShotEvent", "detector_loss",
    "positive_runs", "predict_frames", "refine", "train_detector",
]
