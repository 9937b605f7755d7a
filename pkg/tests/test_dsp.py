import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from shotsense.dsp import (
    BandSpec,
    accel_power,
    band_decompose,
    band_masks,
    detect_peaks_threshold,
)
from shotsense.imu import ImuSequence


class TestBandSpec:
    def test_defaults(self):
        spec = BandSpec()
        assert spec.low_cut == 4.0 and spec.high_cut == 20.0

    def test_order_validated(self):
        with pytest.raises(ValueError):
            BandSpec(low_cut=20.0, high_cut=4.0)

    def test_rate_validation(self):
        BandSpec().validate_rate(120.0)
        with pytest.raises(ValueError, match="Nyquist"):
            BandSpec().validate_rate(30.0)

    def test_for_rate_clamps_low_rates(self):
        spec = BandSpec().for_rate(30.0)
        assert spec.high_cut == pytest.approx(13.5)  # 0.45 * 30
        spec.validate_rate(30.0)

    def test_for_rate_identity_when_valid(self):
        assert BandSpec().for_rate(120.0) == BandSpec()


class TestBandMasks:
    def test_masks_partition_all_bins(self):
        low, mid, high = band_masks(180, 120.0, BandSpec())
        total = low.astype(int) + mid.astype(int) + high.astype(int)
        assert np.all(total == 1)

    def test_dc_in_low_nyquist_in_high(self):
        low, mid, high = band_masks(180, 120.0, BandSpec())
        assert low[0]  # DC
        assert high[90]  # Nyquist bin for even n

    def test_edge_bins_inclusive(self):
        # At 120 Hz over 180 frames the bin spacing is 2/3 Hz, so bin 6 is
        # exactly 4 Hz (low includes it) and bin 30 exactly 20 Hz (mid).
        low, mid, high = band_masks(180, 120.0, BandSpec())
        assert low[6] and not mid[6]
        assert mid[30] and not high[30]
        assert mid[7] and high[31]


class TestBandDecompose:
    def test_pure_tones_route_to_their_bands(self):
        t = np.arange(360) / 120.0
        for freq, band in ((2.0, "low"), (10.0, "mid"), (40.0, "high")):
            x = np.sin(2 * np.pi * freq * t)
            triple = band_decompose(x, 120.0)
            energy = {name: float(np.sum(getattr(triple, name) ** 2))
                      for name in ("low", "mid", "high")}
            total = sum(energy.values())
            assert energy[band] / total >= 0.999, (freq, energy)

    def test_reconstruction_identity(self, rng):
        frames = rng.normal(size=(180, 6))
        triple = band_decompose(frames, 120.0)
        np.testing.assert_allclose(triple.low + triple.mid + triple.high,
                                   frames, rtol=0, atol=1e-9)

    @given(frames=arrays(np.float64, (64, 2),
                         elements=st.floats(-100, 100, allow_nan=False)))
    @settings(max_examples=50, deadline=None)
    def test_reconstruction_property(self, frames):
        triple = band_decompose(frames, 120.0)
        scale = max(1.0, float(np.abs(frames).max()))
        err = np.abs(triple.low + triple.mid + triple.high - frames).max()
        assert err / scale < 1e-9

    def test_stacked_shape(self, rng):
        triple = band_decompose(rng.normal(size=(90, 6)), 120.0)
        assert triple.stacked().shape == (3, 90, 6)

    def test_rejects_non_finite(self):
        bad = np.zeros((16, 1))
        bad[3] = np.inf
        with pytest.raises(ValueError, match="finite"):
            band_decompose(bad, 120.0)


class TestAccelPower:
    def test_matches_brute_force(self, rng):
        channels = rng.normal(size=(50, 6))
        seq = ImuSequence(rate=120.0, times=np.arange(50) / 120.0, channels=channels)
        expected = np.array([np.dot(row[:3], row[:3]) for row in channels])
        np.testing.assert_allclose(accel_power(seq), expected)


def brute_force_peaks(power, threshold, min_separation):
    p = np.asarray(power, dtype=np.float64)
    n = len(p)
    candidates = []
    for i in range(n):
        left = p[i - 1] if i > 0 else -np.inf
        right = p[i + 1] if i < n - 1 else -np.inf
        if p[i] > threshold and p[i] > left and p[i] >= right:
            candidates.append(i)
    kept = []
    for i in sorted(candidates, key=lambda j: (-p[j], j)):
        if all(abs(i - j) >= min_separation for j in kept):
            kept.append(i)
    return sorted(kept)


class TestPeakDetection:
    def test_single_peak(self):
        power = np.array([0.0, 1.0, 5.0, 1.0, 0.0])
        assert detect_peaks_threshold(power, 0.5) == [2]

    def test_threshold_excludes(self):
        power = np.array([0.0, 1.0, 5.0, 1.0, 0.0])
        assert detect_peaks_threshold(power, 5.0) == []

    def test_plateau_takes_leading_edge(self):
        power = np.array([0.0, 3.0, 3.0, 3.0, 0.0])
        assert detect_peaks_threshold(power, 1.0) == [1]

    def test_suppression_keeps_highest(self):
        power = np.zeros(100)
        power[10] = 5.0
        power[40] = 7.0
        assert detect_peaks_threshold(power, 1.0, min_separation=60) == [40]
        assert detect_peaks_threshold(power, 1.0, min_separation=20) == [10, 40]

    def test_invalid_arguments(self):
        with pytest.raises(ValueError):
            detect_peaks_threshold(np.ones(5), -1.0)
        with pytest.raises(ValueError):
            detect_peaks_threshold(np.ones(5), 1.0, min_separation=0)

    @given(power=arrays(np.float64, st.integers(1, 80),
                        elements=st.floats(0, 10, allow_nan=False)),
           threshold=st.floats(0.1, 9.0),
           min_separation=st.integers(1, 40))
    @settings(max_examples=200, deadline=None)
    def test_matches_brute_force(self, power, threshold, min_separation):
        assert detect_peaks_threshold(power, threshold, min_separation) == \
            brute_force_peaks(power, threshold, min_separation)
