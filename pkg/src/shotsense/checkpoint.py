"""Model persistence: a JSON header plus a little-endian float32 blob.

File layout:

    8 bytes   magic ``b"SHOTCKPT"``
    4 bytes   header length, unsigned little-endian
    N bytes   UTF-8 JSON header (sorted keys)
    M bytes   concatenated float32 arrays, little-endian, in header order

The header records the format version, model kind, config, scaler, training
metadata, the name and shape of every array, and a sha256 of the blob, so
corruption and mismatched loads fail with distinct error codes.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .imu import NormScaler
from .models.classifier import ClassifierConfig, ShotClassifier
from .models.detector import DetectorConfig, ShotDetector

MAGIC = b"SHOTCKPT"
FORMAT_VERSION = 1

KINDS = ("classifier", "detector")


class CheckpointError(ValueError):
    """Unusable checkpoint file; ``code`` names the failure mode."""

    #: possible codes
    CODES = ("truncated", "bad_magic", "version_mismatch", "checksum",
             "shape_mismatch", "kind_mismatch", "malformed_header")

    def __init__(self, code: str, message: str):
        if code not in self.CODES:
            raise ValueError(f"unknown checkpoint error code {code!r}")
        self.code = code
        super().__init__(f"{code}: {message}")


@dataclass
class ModelCheckpoint:
    kind: str  # "classifier" | "detector"
    config: dict
    params: dict  # name -> float32 ndarray (parameters and buffers)
    scaler: Optional[NormScaler] = None
    metadata: dict = field(default_factory=dict)
    version: int = FORMAT_VERSION

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"kind must be one of {KINDS}, got {self.kind!r}")

    def build_model(self):
        """Instantiate the network and load every array into it."""
        if self.kind == "classifier":
            model = ShotClassifier(ClassifierConfig.from_dict(self.config))
            if "use_attention" in self.metadata:
                model.use_attention = bool(self.metadata["use_attention"])
        else:
            model = ShotDetector(DetectorConfig.from_dict(self.config))
        try:
            model.load_state_arrays(self.params)
        except ValueError as exc:
            raise CheckpointError("shape_mismatch", str(exc)) from None
        return model

    def expect_kind(self, kind: str) -> "ModelCheckpoint":
        if self.kind != kind:
            raise CheckpointError(
                "kind_mismatch", f"needed a {kind} checkpoint, found {self.kind}")
        return self


def checkpoint_from_model(model, scaler: Optional[NormScaler] = None,
                          metadata: Optional[dict] = None) -> ModelCheckpoint:
    if isinstance(model, ShotClassifier):
        kind = "classifier"
        metadata = dict(metadata or {})
        metadata.setdefault("use_attention", model.use_attention)
    elif isinstance(model, ShotDetector):
        kind = "detector"
        metadata = dict(metadata or {})
    else:
        raise TypeError(f"unsupported model type {type(model).__name__}")
    params = {name: np.ascontiguousarray(a, dtype=np.float32)
              for name, a in model.state_arrays().items()}
    return ModelCheckpoint(kind=kind, config=model.cfg.to_dict(), params=params,
                           scaler=scaler, metadata=metadata)


def save_checkpoint(ckpt: ModelCheckpoint, path) -> None:
    """Write the checkpoint; identical checkpoints produce identical bytes."""
    names = sorted(ckpt.params)
    blob = b"".join(
        np.ascontiguousarray(ckpt.params[n], dtype="<f4").tobytes() for n in names)
    header = {
        "version": ckpt.version,
        "kind": ckpt.kind,
        "config": ckpt.config,
        "scaler": ckpt.scaler.to_dict() if ckpt.scaler is not None else None,
        "metadata": ckpt.metadata,
        "arrays": [{"name": n, "shape": list(ckpt.params[n].shape)} for n in names],
        "blob_sha256": hashlib.sha256(blob).hexdigest(),
    }
    encoded = json.dumps(header, sort_keys=True, separators=(",", ":")).encode()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(len(encoded).to_bytes(4, "little"))
        fh.write(encoded)
        fh.write(blob)


def load_checkpoint(path) -> ModelCheckpoint:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) + 4:
        raise CheckpointError("truncated", f"{path} holds only {len(raw)} bytes")
    if raw[:len(MAGIC)] != MAGIC:
        raise CheckpointError("bad_magic", f"{path} does not start with {MAGIC!r}")
    header_len = int.from_bytes(raw[len(MAGIC):len(MAGIC) + 4], "little")
    header_start = len(MAGIC) + 4
    if len(raw) < header_start + header_len:
        raise CheckpointError("truncated", f"{path}: header cut short")
    try:
        header = json.loads(raw[header_start:header_start + header_len].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("malformed_header", str(exc)) from None
    if header.get("version") != FORMAT_VERSION:
        raise CheckpointError(
            "version_mismatch",
            f"{path}: format version {header.get('version')} (supported: {FORMAT_VERSION})")
    if header.get("kind") not in KINDS:
        raise CheckpointError("malformed_header", f"unknown kind {header.get('kind')!r}")

    blob = raw[header_start + header_len:]
    expected = sum(int(np.prod(a["shape"])) for a in header["arrays"]) * 4
    if len(blob) != expected:
        raise CheckpointError(
            "truncated", f"{path}: blob holds {len(blob)} bytes, expected {expected}")
    if hashlib.sha256(blob).hexdigest() != header["blob_sha256"]:
        raise CheckpointError("checksum", f"{path}: blob sha256 does not match header")

    params = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(int(s) for s in entry["shape"])
        size = int(np.prod(shape)) * 4
        params[entry["name"]] = np.frombuffer(
            blob[offset:offset + size], dtype="<f4").reshape(shape).copy()
        offset += size
    scaler = NormScaler.from_dict(header["scaler"]) if header["scaler"] else None
    return ModelCheckpoint(kind=header["kind"], config=header["config"], params=params,
                           scaler=scaler, metadata=header["metadata"],
                           version=header["version"])
