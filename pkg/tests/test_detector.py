import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shotsense.models.detector import (
    DetectorConfig,
    DetectorTrainConfig,
    RefineConfig,
    ShotDetector,
    ShotEvent,
    detector_loss,
    positive_runs,
    predict_frames,
    refine,
    train_detector,
)


class TestConfig:
    def test_defaults_match_architecture(self):
        cfg = DetectorConfig()
        assert (cfg.stages, cfg.layers_per_stage, cfg.hidden) == (3, 4, 64)
        assert cfg.class_weight_positive == 5.0

    def test_round_trip(self):
        cfg = DetectorConfig(stages=2, hidden=16)
        assert DetectorConfig.from_dict(cfg.to_dict()) == cfg

    def test_validation(self):
        with pytest.raises(ValueError):
            DetectorConfig(kernel=4)
        with pytest.raises(ValueError):
            DetectorConfig(class_weight_positive=0.0)


class TestForward:
    def test_stage_output_shapes(self, rng):
        model = ShotDetector(DetectorConfig(hidden=8), seed=0)
        x = rng.normal(size=(2, 6, 50)).astype(np.float32)
        outputs = model.forward(x)
        assert len(outputs) == 3
        for out in outputs:
            assert out.shape == (2, 2, 50)

    def test_input_validation(self, rng):
        model = ShotDetector(DetectorConfig(hidden=4), seed=0)
        with pytest.raises(ValueError, match="expected"):
            model.forward(rng.normal(size=(2, 5, 50)).astype(np.float32))

    def test_uniform_loss_value(self):
        # Zero logits from every stage: each stage contributes
        # ln(2) * mean(weight[y]); with 10% positives and weight 5 that is
        # 1.4 ln 2, summed over 3 stages.
        from shotsense.nn import Tensor

        labels = np.zeros(100, dtype=np.int64)
        labels[:10] = 1
        logits = [Tensor(np.zeros((1, 2, 100))) for _ in range(3)]
        loss = detector_loss(logits, labels, positive_weight=5.0)
        assert loss.item() == pytest.approx(3 * 1.4 * np.log(2.0), abs=1e-12)

    def test_predict_frames_threshold(self, rng):
        model = ShotDetector(DetectorConfig(hidden=4), seed=0)
        channels = rng.normal(size=(64, 6))
        labels, probs = predict_frames(model, channels)
        assert labels.shape == probs.shape == (64,)
        np.testing.assert_array_equal(labels, (probs > 0.5).astype(np.int64))


class TestPositiveRuns:
    def test_basic(self):
        labels = np.array([0, 1, 1, 0, 0, 1, 1, 1, 0])
        assert positive_runs(labels) == [(1, 3), (5, 8)]

    def test_edges(self):
        assert positive_runs(np.array([1, 1, 0, 1])) == [(0, 2), (3, 4)]
        assert positive_runs(np.array([])) == []
        assert positive_runs(np.zeros(5)) == []


def brute_force_refine(labels, k=15, window_len=180):
    """Independent reference: plain-python runs, clamping, and merging."""
    labels = list(np.asarray(labels).reshape(-1).astype(int))
    n = len(labels)
    half = window_len // 2
    runs = []
    i = 0
    while i < n:
        if labels[i]:
            j = i
            while j < n and labels[j]:
                j += 1
            runs.append((i, j))
            i = j
        else:
            i += 1
    centers = sorted((a + b - 1) // 2 for a, b in runs if b - a >= k)
    if centers and n < window_len:
        raise ValueError("too short")
    while True:
        changed = False
        clamped = []
        for c in centers:
            lo, hi = half, n - window_len + half
            c2 = min(max(c, lo), hi)
            changed |= c2 != c
            clamped.append(c2)
        centers = sorted(clamped)
        i = 0
        while i + 1 < len(centers):
            if centers[i + 1] - centers[i] < window_len:
                centers[i:i + 2] = [(centers[i] + centers[i + 1]) // 2]
                changed = True
            else:
                i += 1
        if not changed:
            return centers


class TestRefine:
    def test_single_run_window(self):
        labels = np.zeros(400, dtype=int)
        labels[100:115] = 1  # 15-frame run, center (100 + 114) // 2 = 107
        events = refine(labels)
        assert len(events) == 1
        e = events[0]
        assert (e.center_frame, e.start, e.stop) == (107, 17, 197)

    def test_run_below_k_ignored(self):
        labels = np.zeros(400, dtype=int)
        labels[100:114] = 1  # 14 frames < k = 15
        assert refine(labels) == []

    def test_overlapping_windows_merge_at_mean(self):
        labels = np.zeros(500, dtype=int)
        labels[93:108] = 1   # center 100
        labels[143:158] = 1  # center 150; 50 < 180 apart, merge to 125
        events = refine(labels)
        assert [e.center_frame for e in events] == [125]

    def test_clamping_at_boundaries(self):
        labels = np.zeros(200, dtype=int)
        labels[:20] = 1  # center 9 clamps to 90
        events = refine(labels)
        assert events[0].center_frame == 90
        assert events[0].start == 0 and events[0].stop == 180

    def test_too_short_sequence_raises(self):
        labels = np.ones(50, dtype=int)
        with pytest.raises(ValueError, match="shorter"):
            refine(labels)

    def test_impact_estimate_offset(self):
        event = ShotEvent(center_frame=200, start=110, stop=290, confidence=1.0)
        assert event.impact_frame == 230  # impact sits 30 frames past center

    def test_confidence_is_mean_prob(self):
        labels = np.zeros(400, dtype=int)
        labels[100:115] = 1
        probs = np.zeros(400)
        probs[17:197] = 0.8
        events = refine(labels, probs)
        assert events[0].confidence == pytest.approx(0.8)

    def test_refine_config_validation(self):
        with pytest.raises(ValueError):
            RefineConfig(k=0)
        with pytest.raises(ValueError):
            RefineConfig(k=200, window_len=180)

    @given(labels=arrays(np.int8, st.integers(180, 400),
                         elements=st.integers(0, 1)),
           k=st.integers(1, 30))
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force(self, labels, k):
        events = refine(labels, cfg=RefineConfig(k=k))
        assert [e.center_frame for e in events] == brute_force_refine(labels, k=k)

    @given(labels=arrays(np.int8, st.integers(180, 400),
                         elements=st.integers(0, 1)))
    @settings(max_examples=100, deadline=None)
    def test_windows_disjoint_and_in_bounds(self, labels):
        events = refine(labels)
        for e in events:
            assert 0 <= e.start and e.stop <= len(labels)
            assert e.stop - e.start == 180
        for a, b in zip(events, events[1:]):
            assert a.stop <= b.start


class TestTraining:
    def test_validates_length_mismatch(self, rng):
        pairs = [(rng.normal(size=(40, 6)), np.zeros(39))]
        with pytest.raises(ValueError, match="length mismatch"):
            train_detector(pairs, [], train_cfg=DetectorTrainConfig(epochs=1))

    def test_empty_training_set(self):
        with pytest.raises(ValueError, match="empty"):
            train_detector([], [], train_cfg=DetectorTrainConfig(epochs=1))

    def test_loss_decreases_on_learnable_data(self, rng):
        # One strong channel marks the positive frames.
        pairs = []
        for _ in range(3):
            labels = np.zeros(120, dtype=np.int64)
            labels[40:80] = 1
            x = rng.normal(size=(120, 6)) * 0.1
            x[40:80, 0] += 3.0
            pairs.append((x, labels))
        cfg = DetectorConfig(stages=2, layers_per_stage=2, hidden=8)
        result = train_detector(pairs, [], cfg=cfg, seed=0,
                                train_cfg=DetectorTrainConfig(epochs=8, lr=1e-2))
        losses = [h["loss"] for h in result.history]
        assert losses[-1] < losses[0] * 0.5

    def test_deterministic_given_seed(self, rng):
        labels = np.zeros(60, dtype=np.int64)
        labels[20:40] = 1
        pairs = [(rng.normal(size=(60, 6)), labels)]
        cfg = DetectorConfig(stages=2, layers_per_stage=1, hidden=4)
        r1 = train_detector(pairs, [], cfg=cfg, seed=7,
                            train_cfg=DetectorTrainConfig(epochs=2, lr=1e-3))
        r2 = train_detector(pairs, [], cfg=cfg, seed=7,
                            train_cfg=DetectorTrainConfig(epochs=2, lr=1e-3))
        assert [h["loss"] for h in r1.history] == [h["loss"] for h in r2.history]
