"""Shot-classification network: conv backbone with frequency-band attention.

The 6x180 input follows two paths. Four cascaded conv blocks (conv k=11,
batch norm, Mish) form the feature path; the same input is split into
low/mid/high frequency bands, each of which produces a 1x180 sigmoid
attention vector that gates the output of sub-blocks 1-3. Sub-block 4 feeds
the two backbone blocks (->256, ->128), global average pooling, and a linear
head over the six shot classes. Each attention vector also feeds a small
auxiliary classifier used only in the training loss.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

from .. import nn
from ..dsp import BandSpec, band_decompose
from ..imu import NUM_CLASSES, SHOT_CLASSES, ShotClass, ShotSegment
from ..nn import Tensor


@dataclass(frozen=True)
class ClassifierConfig:
    input_channels: int = 6
    segment_len: int = 180
    rate: float = 120.0
    kernel: int = 11
    sub_block_channels: tuple = (32, 64, 128, 128)
    backbone_channels: tuple = (256, 128)
    attention_classifier_channels: int = 16
    num_classes: int = NUM_CLASSES
    band_spec: BandSpec = field(default_factory=BandSpec)

    def __post_init__(self):
        if len(self.sub_block_channels) != 4:
            raise ValueError("exactly four sub-blocks are required")
        if len(self.backbone_channels) != 2:
            raise ValueError("exactly two backbone blocks are required")
        if self.num_classes != NUM_CLASSES:
            raise ValueError(f"num_classes is fixed at {NUM_CLASSES}")
        if self.kernel % 2 != 1 or self.kernel < 1:
            raise ValueError("kernel size must be odd and positive")
        if self.input_channels < 1 or self.segment_len < self.kernel or self.rate <= 0:
            raise ValueError("invalid input geometry")
        self.band_spec.validate_rate(self.rate)

    def to_dict(self) -> dict:
        return {
            "input_channels": self.input_channels,
            "segment_len": self.segment_len,
            "rate": self.rate,
            "kernel": self.kernel,
            "sub_block_channels": list(self.sub_block_channels),
            "backbone_channels": list(self.backbone_channels),
            "attention_classifier_channels": self.attention_classifier_channels,
            "num_classes": self.num_classes,
            "band_low_cut": self.band_spec.low_cut,
            "band_high_cut": self.band_spec.high_cut,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClassifierConfig":
        return cls(
            input_channels=int(d["input_channels"]),
            segment_len=int(d["segment_len"]),
            rate=float(d["rate"]),
            kernel=int(d["kernel"]),
            sub_block_channels=tuple(d["sub_block_channels"]),
            backbone_channels=tuple(d["backbone_channels"]),
            attention_classifier_channels=int(d["attention_classifier_channels"]),
            num_classes=int(d["num_classes"]),
            band_spec=BandSpec(low_cut=float(d["band_low_cut"]),
                               high_cut=float(d["band_high_cut"])),
        )


@dataclass
class ClassifierOutput:
    main_logits: Tensor  # (B, 6)
    aux_logits: list  # 3 tensors of (B, 6)


class AttentionClassifier(nn.Module):
    """conv 1->16 (k per config), ReLU, GAP, linear to the class logits."""

    def __init__(self, channels: int, kernel: int, num_classes: int,
                 rng: np.random.Generator, dtype):
        self.conv = nn.Conv1d(1, channels, kernel, rng=rng, dtype=dtype)
        self.fc = nn.Linear(channels, num_classes, rng=rng, dtype=dtype)

    def __call__(self, att: Tensor) -> Tensor:
        return self.fc(nn.gap(nn.relu(self.conv(att))))


class ShotClassifier(nn.Module):
    def __init__(self, cfg: ClassifierConfig, seed: int = 0, dtype=np.float32):
        rng = np.random.default_rng(seed)
        self.cfg = cfg
        k = cfg.kernel
        chans = [cfg.input_channels, *cfg.sub_block_channels]
        self.sub_blocks = [nn.ConvBlock(chans[i], chans[i + 1], k, rng=rng, dtype=dtype)
                           for i in range(4)]
        self.attention_convs = [nn.Conv1d(cfg.input_channels, 1, k, rng=rng, dtype=dtype)
                                for _ in range(3)]
        self.attention_classifiers = [
            AttentionClassifier(cfg.attention_classifier_channels, k, cfg.num_classes,
                                rng, dtype)
            for _ in range(3)
        ]
        bb = [cfg.sub_block_channels[-1], *cfg.backbone_channels]
        self.backbone = [nn.ConvBlock(bb[i], bb[i + 1], k, rng=rng, dtype=dtype)
                         for i in range(2)]
        self.head = nn.Linear(cfg.backbone_channels[-1], cfg.num_classes, rng=rng, dtype=dtype)
        self.use_attention = True  # attention identity + no aux heads when False

    def compute_bands(self, x: np.ndarray) -> np.ndarray:
        """(B, C, L) -> (B, 3, C, L) band decomposition of the raw input."""
        out = np.empty((x.shape[0], 3, x.shape[1], x.shape[2]), dtype=x.dtype)
        for i in range(x.shape[0]):
            triple = band_decompose(x[i].T, self.cfg.rate, self.cfg.band_spec)
            out[i] = triple.stacked().transpose(0, 2, 1)
        return out

    def forward(self, x, bands: Optional[np.ndarray] = None,
                training: bool = False) -> ClassifierOutput:
        x = x if isinstance(x, Tensor) else Tensor(x)
        if x.data.ndim != 3 or x.shape[1] != self.cfg.input_channels:
            raise ValueError(f"expected (B, {self.cfg.input_channels}, L) input, got {x.shape}")
        attentions = []
        if self.use_attention:
            if bands is None:
                bands = self.compute_bands(x.data)
            for i in range(3):
                attentions.append(nn.sigmoid(self.attention_convs[i](Tensor(bands[:, i]))))

        h = x
        for i, block in enumerate(self.sub_blocks):
            h = block(h, training)
            if self.use_attention and i < 3:
                h = nn.mul(h, attentions[i])
        for block in self.backbone:
            h = block(h, training)
        main = self.head(nn.gap(h))
        aux = [self.attention_classifiers[i](attentions[i]) for i in range(3)] \
            if self.use_attention else []
        return ClassifierOutput(main_logits=main, aux_logits=aux)

    __call__ = forward


def classifier_loss(out: ClassifierOutput, targets: np.ndarray) -> Tensor:
    """Unweighted cross-entropy on the main head plus every aux head."""
    loss = nn.weighted_cross_entropy(out.main_logits, targets)
    for aux in out.aux_logits:
        loss = nn.add(loss, nn.weighted_cross_entropy(aux, targets))
    return loss


def class_index(label: ShotClass) -> int:
    return SHOT_CLASSES.index(label)


def segments_to_arrays(segments: Sequence[ShotSegment], dtype=np.float32):
    """Stack segments into (N, C, L) inputs and (N,) integer targets."""
    x = np.stack([s.frames.T for s in segments]).astype(dtype)
    y = np.array([class_index(s.label) if s.label is not None else -1 for s in segments])
    return x, y


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-4


@dataclass
class TrainResult:
    model: ShotClassifier
    history: list  # per-epoch dicts: loss, val_accuracy
    best_epoch: int
    best_val_accuracy: float


def _accuracy(model: ShotClassifier, x: np.ndarray, bands: np.ndarray,
              y: np.ndarray, chunk: int = 256) -> float:
    correct = 0
    for i in range(0, len(x), chunk):
        out = model.forward(x[i:i + chunk], bands=bands[i:i + chunk], training=False)
        correct += int((out.main_logits.data.argmax(axis=1) == y[i:i + chunk]).sum())
    return correct / len(x)


def train_classifier(train_segments: Sequence[ShotSegment],
                     val_segments: Sequence[ShotSegment],
                     cfg: ClassifierConfig = ClassifierConfig(),
                     seed: int = 0,
                     train_cfg: TrainConfig = TrainConfig(),
                     model: Optional[ShotClassifier] = None) -> TrainResult:
    """Adam training with per-epoch shuffling; returns the best-validation
    snapshot. Segments must already be normalized with a scaler fitted on
    the training folds only.
    """
    if len(train_segments) == 0:
        raise ValueError("empty training set")
    x_train, y_train = segments_to_arrays(train_segments)
    x_val, y_val = segments_to_arrays(val_segments) if len(val_segments) else (None, None)
    return train_classifier_arrays(x_train, y_train, x_val, y_val, cfg=cfg, seed=seed,
                                   train_cfg=train_cfg, model=model)


def train_classifier_arrays(x_train: np.ndarray, y_train: np.ndarray,
                            x_val: Optional[np.ndarray], y_val: Optional[np.ndarray],
                            cfg: ClassifierConfig = ClassifierConfig(),
                            seed: int = 0,
                            train_cfg: TrainConfig = TrainConfig(),
                            model: Optional[ShotClassifier] = None) -> TrainResult:
    """Array-based training core: x is (N, C, L) normalized, y is (N,) ints.

    Used directly by ablations whose window geometry differs from the
    standard segment shape.
    """
    if len(x_train) == 0:
        raise ValueError("empty training set")
    x_train = np.asarray(x_train, dtype=np.float32)
    y_train = np.asarray(y_train, dtype=np.int64)
    if x_val is not None:
        x_val = np.asarray(x_val, dtype=np.float32)
        y_val = np.asarray(y_val, dtype=np.int64)
    if model is None:
        model = ShotClassifier(cfg, seed=seed)
    else:
        cfg = model.cfg
    bands_train = model.compute_bands(x_train)
    bands_val = model.compute_bands(x_val) if x_val is not None else None

    opt = nn.Adam(model.named_parameters(), lr=train_cfg.lr)
    rng = np.random.default_rng(seed)
    history = []
    best_state = {k: v.copy() for k, v in model.state_arrays().items()}
    best_acc = -1.0
    best_epoch = -1

    for epoch in range(train_cfg.epochs):
        perm = rng.permutation(len(x_train))
        total_loss = 0.0
        for start in range(0, len(perm), train_cfg.batch_size):
            idx = perm[start:start + train_cfg.batch_size]
            out = model.forward(x_train[idx], bands=bands_train[idx], training=True)
            loss = classifier_loss(out, y_train[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            total_loss += loss.item() * len(idx)
        epoch_loss = total_loss / len(x_train)
        val_acc = _accuracy(model, x_val, bands_val, y_val) if x_val is not None else float("nan")
        history.append({"epoch": epoch, "loss": epoch_loss, "val_accuracy": val_acc})
        if x_val is None or val_acc > best_acc:
            best_acc = val_acc
            best_epoch = epoch
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}

    model.load_state_arrays(best_state)
    return TrainResult(model=model, history=history, best_epoch=best_epoch,
                       best_val_accuracy=best_acc)


def clone_classifier(model: ShotClassifier) -> ShotClassifier:
    """A new classifier with copies of the model's parameters and buffers."""
    out = ShotClassifier(model.cfg)
    out.use_attention = model.use_attention
    out.load_state_arrays({k: v.copy() for k, v in model.state_arrays().items()})
    return out


def fine_tune(model: ShotClassifier, user_segments: Sequence[ShotSegment],
              lr: float = 1e-6, epochs: int = 100, seed: int = 0,
              batch_size: int = 64) -> ShotClassifier:
    """A copy of the model trained further at a lower rate on a user's data.

    The input model is left untouched.
    """
    tuned = clone_classifier(model)
    if epochs == 0 or len(user_segments) == 0:
        return tuned
    result = train_classifier(user_segments, [], cfg=tuned.cfg, seed=seed,
                              train_cfg=TrainConfig(epochs=epochs, batch_size=batch_size, lr=lr),
                              model=tuned)
    return result.model


def predict(model: ShotClassifier, segment: ShotSegment) -> tuple[ShotClass, np.ndarray]:
    """Main-head prediction on one normalized segment (eval-mode)."""
    if segment.frames.shape[0] != model.cfg.segment_len:
        raise ValueError(
            f"segment length {segment.frames.shape[0]} does not match model "
            f"config {model.cfg.segment_len}")
    x = segment.frames.T[None].astype(np.float32)
    out = model.forward(x, training=False)
    probs = nn.softmax_np(out.main_logits.data[0].astype(np.float64))
    return SHOT_CLASSES[int(probs.argmax())], probs


def predict_batch(model: ShotClassifier, x: np.ndarray, chunk: int = 256) -> np.ndarray:
    """Eval-mode class indices for (N, C, L) inputs."""
    preds = np.empty(len(x), dtype=np.int64)
    for i in range(0, len(x), chunk):
        out = model.forward(x[i:i + chunk].astype(np.float32), training=False)
        preds[i:i + chunk] = out.main_logits.data.argmax(axis=1)
    return preds
