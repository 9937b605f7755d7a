import numpy as np
import pytest

from shotsense.checkpoint import (
    FORMAT_VERSION,
    MAGIC,
    CheckpointError,
    ModelCheckpoint,
    checkpoint_from_model,
    load_checkpoint,
    save_checkpoint,
)
from shotsense.imu import NormScaler
from shotsense.models.classifier import ClassifierConfig, ShotClassifier
from shotsense.models.detector import DetectorConfig, ShotDetector

TINY_CLS = ClassifierConfig(segment_len=32, kernel=3,
                            sub_block_channels=(4, 4, 6, 4),
                            backbone_channels=(6, 4),
                            attention_classifier_channels=3)
TINY_DET = DetectorConfig(stages=2, layers_per_stage=2, hidden=4)


@pytest.fixture()
def classifier_path(tmp_path):
    model = ShotClassifier(TINY_CLS, seed=3)
    scaler = NormScaler(accel_min=-1.0, accel_max=1.0, gyro_min=-10.0, gyro_max=10.0)
    path = tmp_path / "cls.ckpt"
    save_checkpoint(checkpoint_from_model(model, scaler=scaler,
                                          metadata={"note": "test"}), path)
    return model, path


class TestRoundTrip:
    def test_classifier_bitwise(self, classifier_path, rng):
        model, path = classifier_path
        loaded = load_checkpoint(path)
        restored = loaded.build_model()
        x = rng.normal(size=(2, 6, 32)).astype(np.float32)
        np.testing.assert_array_equal(model.forward(x).main_logits.data,
                                      restored.forward(x).main_logits.data)
        assert loaded.scaler == NormScaler(-1.0, 1.0, -10.0, 10.0)
        assert loaded.metadata["note"] == "test"

    def test_detector_bitwise(self, tmp_path, rng):
        model = ShotDetector(TINY_DET, seed=5)
        path = tmp_path / "det.ckpt"
        save_checkpoint(checkpoint_from_model(model), path)
        restored = load_checkpoint(path).build_model()
        x = rng.normal(size=(1, 6, 40)).astype(np.float32)
        np.testing.assert_array_equal(model.forward(x)[-1].data,
                                      restored.forward(x)[-1].data)

    def test_resave_is_byte_identical(self, classifier_path, tmp_path):
        _, path = classifier_path
        other = tmp_path / "copy.ckpt"
        save_checkpoint(load_checkpoint(path), other)
        assert path.read_bytes() == other.read_bytes()

    def test_use_attention_flag_persists(self, tmp_path, rng):
        model = ShotClassifier(TINY_CLS, seed=0)
        model.use_attention = False
        path = tmp_path / "noatt.ckpt"
        save_checkpoint(checkpoint_from_model(model), path)
        restored = load_checkpoint(path).build_model()
        assert restored.use_attention is False
        x = rng.normal(size=(1, 6, 32)).astype(np.float32)
        np.testing.assert_array_equal(model.forward(x).main_logits.data,
                                      restored.forward(x).main_logits.data)


class TestCorruption:
    def test_missing_file(self, tmp_path):
        with pytest.raises(FileNotFoundError):
            load_checkpoint(tmp_path / "absent.ckpt")

    def test_flipped_blob_byte_is_checksum_error(self, classifier_path):
        _, path = classifier_path
        raw = bytearray(path.read_bytes())
        raw[-1] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.code == "checksum"

    def test_truncation(self, classifier_path):
        _, path = classifier_path
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 100])
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.code == "truncated"
        path.write_bytes(raw[:6])
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.code == "truncated"

    def test_bad_magic(self, classifier_path):
        _, path = classifier_path
        raw = bytearray(path.read_bytes())
        raw[:8] = b"NOTCKPT!"
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.code == "bad_magic"

    def test_garbled_header(self, classifier_path):
        _, path = classifier_path
        raw = bytearray(path.read_bytes())
        raw[len(MAGIC) + 4] = ord("X")  # breaks the JSON opening brace
        path.write_bytes(bytes(raw))
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.code == "malformed_header"

    def test_version_mismatch(self, tmp_path):
        model = ShotDetector(TINY_DET, seed=0)
        ckpt = checkpoint_from_model(model)
        ckpt.version = FORMAT_VERSION + 1
        path = tmp_path / "future.ckpt"
        save_checkpoint(ckpt, path)
        with pytest.raises(CheckpointError) as exc:
            load_checkpoint(path)
        assert exc.value.code == "version_mismatch"


class TestValidation:
    def test_expect_kind(self, classifier_path):
        _, path = classifier_path
        ckpt = load_checkpoint(path)
        assert ckpt.expect_kind("classifier") is ckpt
        with pytest.raises(CheckpointError) as exc:
            ckpt.expect_kind("detector")
        assert exc.value.code == "kind_mismatch"

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="kind"):
            ModelCheckpoint(kind="regressor", config={}, params={})

    def test_build_model_shape_mismatch(self, classifier_path):
        _, path = classifier_path
        ckpt = load_checkpoint(path)
        name = sorted(ckpt.params)[0]
        ckpt.params[name] = np.zeros((1, 1), dtype=np.float32)
        with pytest.raises(CheckpointError) as exc:
            ckpt.build_model()
        assert exc.value.code == "shape_mismatch"

    def test_unsupported_model_type(self):
        with pytest.raises(TypeError, match="unsupported"):
            checkpoint_from_model(object())

    def test_unknown_error_code_rejected(self):
        with pytest.raises(ValueError, match="unknown checkpoint error code"):
            CheckpointError("bogus", "msg")
