"""Multi-stage TCN frame-wise shot detector and window refinement.

Each stage maps its input to per-frame binary logits through a 1x1 conv,
four dilated residual units (dilation 2^l), and a 1x1 output conv. Stages
after the first consume the softmax of the previous stage's logits.
Refinement turns runs of >= k positive frames into fixed 180-frame windows
and merges overlaps at the mean center.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .. import nn
from ..imu import IMPACT_INDEX, SEGMENT_LEN
from ..nn import Tensor


@dataclass(frozen=True)
class DetectorConfig:
    stages: int = 3
    layers_per_stage: int = 4
    hidden: int = 64
    kernel: int = 3
    num_classes: int = 2
    class_weight_positive: float = 5.0
    input_channels: int = 6

    def __post_init__(self):
        if self.stages < 1 or self.layers_per_stage < 1 or self.hidden < 1:
            raise ValueError("invalid detector dimensions")
        if self.kernel % 2 != 1:
            raise ValueError("kernel size must be odd")
        if self.num_classes != 2:
            raise ValueError("the detector is binary (num_classes = 2)")
        if self.class_weight_positive <= 0:
            raise ValueError("class_weight_positive must be positive")

    def to_dict(self) -> dict:
        return {
            "stages": self.stages,
            "layers_per_stage": self.layers_per_stage,
            "hidden": self.hidden,
            "kernel": self.kernel,
            "num_classes": self.num_classes,
            "class_weight_positive": self.class_weight_positive,
            "input_channels": self.input_channels,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DetectorConfig":
        return cls(
            stages=int(d["stages"]),
            layers_per_stage=int(d["layers_per_stage"]),
            hidden=int(d["hidden"]),
            kernel=int(d["kernel"]),
            num_classes=int(d["num_classes"]),
            class_weight_positive=float(d["class_weight_positive"]),
            input_channels=int(d["input_channels"]),
        )


class DilatedResidual(nn.Module):
    def __init__(self, hidden: int, kernel: int, dilation: int,
                 rng: np.random.Generator, dtype):
        self.conv_dilated = nn.Conv1d(hidden, hidden, kernel, dilation=dilation,
                                      rng=rng, dtype=dtype)
        self.conv_out = nn.Conv1d(hidden, hidden, 1, rng=rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        return nn.add(x, self.conv_out(nn.relu(self.conv_dilated(x))))


class Stage(nn.Module):
    def __init__(self, in_channels: int, cfg: DetectorConfig,
                 rng: np.random.Generator, dtype):
        self.conv_in = nn.Conv1d(in_channels, cfg.hidden, 1, rng=rng, dtype=dtype)
        self.layers = [DilatedResidual(cfg.hidden, cfg.kernel, 2 ** l, rng, dtype)
                       for l in range(cfg.layers_per_stage)]
        self.conv_logits = nn.Conv1d(cfg.hidden, cfg.num_classes, 1, rng=rng, dtype=dtype)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.conv_in(x)
        for layer in self.layers:
            h = layer(h)
        return self.conv_logits(h)


class ShotDetector(nn.Module):
    def __init__(self, cfg: DetectorConfig, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        ins = [cfg.input_channels] + [cfg.num_classes] * (cfg.stages - 1)
        self.stages = [Stage(ins[s], cfg, rng, dtype) for s in range(cfg.stages)]

    def forward(self, x) -> list[Tensor]:
        """(B, C, T) -> per-stage frame logits, each (B, 2, T)."""
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim != 3 or x.shape[1] != self.cfg.input_channels:
            raise ValueError(f"expected (B, {self.cfg.input_channels}, T) input, got {x.shape}")
        outputs = []
        h = x
        for i, stage in enumerate(self.stages):
            if i > 0:
                h = nn.softmax(outputs[-1], axis=1)
            h = stage(h)
            outputs.append(h)
        return outputs

    __call__ = forward


def detector_loss(stage_logits: Sequence[Tensor], labels: np.ndarray,
                  positive_weight: float = 5.0) -> Tensor:
    """Sum over stages of weighted frame-wise cross-entropy (weights 1:w)."""
    labels = np.asarray(labels).reshape(-1)
    weights = np.array([1.0, positive_weight])
    loss = None
    for logits in stage_logits:
        b, c, t = logits.shape
        flat = _flatten_frames(logits)
        term = nn.weighted_cross_entropy(flat, np.tile(labels, b), weights)
        loss = term if loss is None else nn.add(loss, term)
    return loss


def _flatten_frames(logits: Tensor) -> Tensor:
    """(B, C, T) -> (B*T, C) view through the graph."""
    b, c, t = logits.shape
    data = logits.data.transpose(0, 2, 1).reshape(b * t, c)

    def backward(g):
        logits.accumulate_grad(g.reshape(b, t, c).transpose(0, 2, 1))

    out = Tensor(data)
    if logits.requires_grad:
        out.requires_grad = True
        out._parents = (logits,)
        out._backward = backward
    return out


def predict_frames(model: ShotDetector, channels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Final-stage frame labels and positive probabilities for (T, 6) data."""
    x = np.asarray(channels, dtype=np.float32).T[None]
    logits = model.forward(x)[-1].data[0].astype(np.float64)  # (2, T)
    probs = nn.softmax_np(logits, axis=0)[1]
    return (probs > 0.5).astype(np.int64), probs


# ---------------------------------------------------------------------------
# Refinement heuristic
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RefineConfig:
    k: int = 15
    window_len: int = SEGMENT_LEN

    def __post_init__(self):
        if not (1 <= self.k <= self.window_len):
            raise ValueError(f"need 1 <= k <= window_len, got k={self.k}")


@dataclass(frozen=True)
class ShotEvent:
    """A refined detection: fixed-length window centered at center_frame."""

    center_frame: int
    start: int
    stop: int
    confidence: float

    @property
    def impact_frame(self) -> int:
        # The classification window puts the impact 120 frames in while the
        # detection window is center-aligned, so the impact estimate sits
        # IMPACT_INDEX - len/2 frames after the center.
        return self.center_frame + (IMPACT_INDEX - SEGMENT_LEN // 2)


def positive_runs(labels: np.ndarray) -> list[tuple[int, int]]:
    """Maximal runs of 1s as (start, stop) half-open intervals."""
    labels = np.asarray(labels).astype(bool)
    if len(labels) == 0:
        return []
    padded = np.concatenate([[False], labels, [False]])
    diff = np.diff(padded.astype(np.int8))
    starts = np.flatnonzero(diff == 1)
    stops = np.flatnonzero(diff == -1)
    return list(zip(starts.tolist(), stops.tolist()))


def refine(labels: np.ndarray, probs: Optional[np.ndarray] = None,
           cfg: RefineConfig = RefineConfig()) -> list[ShotEvent]:
    """Turn frame labels into non-overlapping fixed-length shot windows.

    Every maximal run of >= k true frames yields a candidate window of
    window_len frames centered at the run midpoint (floored). Overlapping
    windows are merged left-to-right at the floored mean of their centers
    until a fixed point; windows exceeding the sequence bounds are shifted
    minimally inside (which may trigger further merging).
    """
    labels = np.asarray(labels).reshape(-1)
    n = len(labels)
    half = cfg.window_len // 2
    centers = [
        (start + stop - 1) // 2
        for start, stop in positive_runs(labels)
        if stop - start >= cfg.k
    ]
    centers.sort()

    if centers and n < cfg.window_len:
        raise ValueError(f"sequence of {n} frames is shorter than one window ({cfg.window_len})")

    while True:
        changed = False
        # Clamp windows inside [0, n).
        for i, c in enumerate(centers):
            clamped = min(max(c, half), n - cfg.window_len + half)
            if clamped != c:
                centers[i] = clamped
                changed = True
        centers.sort()
        # Left-to-right pairwise merge of overlapping windows.
        i = 0
        while i + 1 < len(centers):
            if centers[i + 1] - centers[i] < cfg.window_len:
                merged = (centers[i] + centers[i + 1]) // 2
                centers[i:i + 2] = [merged]
                changed = True
            else:
                i += 1
        if not changed:
            break

    events = []
    for c in centers:
        start, stop = c - half, c - half + cfg.window_len
        if probs is not None:
            conf = float(np.mean(probs[start:stop]))
        else:
            conf = float(np.mean(labels[start:stop]))
        events.append(ShotEvent(center_frame=c, start=start, stop=stop, confidence=conf))
    return events


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DetectorTrainConfig:
    epochs: int = 500
    lr: float = 1e-3


@dataclass
class DetectorTrainResult:
    model: ShotDetector
    history: list
    best_epoch: int
    best_val_f1: float


def _frame_f1(pred: np.ndarray, truth: np.ndarray) -> float:
    tp = int(np.sum((pred == 1) & (truth == 1)))
    fp = int(np.sum((pred == 1) & (truth == 0)))
    fn = int(np.sum((pred == 0) & (truth == 1)))
    return 2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0


def train_detector(train_pairs: Sequence[tuple[np.ndarray, np.ndarray]],
                   val_pairs: Sequence[tuple[np.ndarray, np.ndarray]],
                   cfg: DetectorConfig = DetectorConfig(),
                   seed: int = 0,
                   train_cfg: DetectorTrainConfig = DetectorTrainConfig(),
                   model: Optional[ShotDetector] = None) -> DetectorTrainResult:
    """Batch-1 Adam training over full sequences; best-validation-F1 snapshot.

    ``train_pairs`` holds (channels (T, 6) normalized, labels (T,)) tuples.
    """
    if len(train_pairs) == 0:
        raise ValueError("empty training set")
    for channels, labels in list(train_pairs) + list(val_pairs):
        if len(channels) != len(labels):
            raise ValueError(
                f"sequence/label length mismatch: {len(channels)} vs {len(labels)}")

    xs = [np.asarray(c, dtype=np.float32).T[None] for c, _ in train_pairs]
    ys = [np.asarray(l).reshape(-1) for _, l in train_pairs]
    if model is None:
        model = ShotDetector(cfg, seed=seed)
    else:
        cfg = model.cfg
    opt = nn.Adam(model.named_parameters(), lr=train_cfg.lr)
    rng = np.random.default_rng(seed)

    history = []
    best_state = {k: v.copy() for k, v in model.state_arrays().items()}
    best_f1 = -1.0
    best_epoch = -1
    for epoch in range(train_cfg.epochs):
        perm = rng.permutation(len(xs))
        total = 0.0
        for i in perm:
            outputs = model.forward(xs[i])
            loss = detector_loss(outputs, ys[i], cfg.class_weight_positive)
            opt.zero_grad()
            loss.backward()
            opt.step()
            total += loss.item()
        epoch_loss = total / len(xs)
        if val_pairs:
            f1s = [_frame_f1(predict_frames(model, c)[0], np.asarray(l)) for c, l in val_pairs]
            val_f1 = float(np.mean(f1s))
        else:
            val_f1 = float("nan")
        history.append({"epoch": epoch, "loss": epoch_loss, "val_f1": val_f1})
        if not val_pairs or val_f1 > best_f1:
            best_f1 = val_f1
            best_epoch = epoch
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}

    model.load_state_arrays(best_state)
    return DetectorTrainResult(model=model, history=history, best_epoch=best_epoch,
                               best_val_f1=best_f1)
