"""Frequency-band decomposition and threshold peak detection.

Band decomposition splits a segment into low / mid / high frequency parts
via the FFT. The bin partition is exhaustive (every bin lands in exactly
one band) so the three parts sum back to the input.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imu import ACCEL_SLICE, ImuSequence


@dataclass(frozen=True)
class BandSpec:
    """Band edges in Hz: low = [0, low_cut], mid = (low_cut, high_cut],
    high = (high_cut, Nyquist]."""

    low_cut: float = 4.0
    high_cut: float = 20.0

    def __post_init__(self):
        if not (0 < self.low_cut < self.high_cut):
            raise ValueError(f"need 0 < low_cut < high_cut, got {self.low_cut}, {self.high_cut}")

    def validate_rate(self, rate: float) -> None:
        if self.high_cut >= rate / 2:
            raise ValueError(f"high_cut {self.high_cut} must be below Nyquist {rate / 2}")

    def for_rate(self, rate: float) -> "BandSpec":
        """Clamp the upper edge below Nyquist for low-rate data."""
        if self.high_cut < rate / 2:
            return self
        high = 0.45 * rate
        low = min(self.low_cut, high / 2)
        return BandSpec(low_cut=low, high_cut=high)


@dataclass(frozen=True)
class BandTriple:
    low: np.ndarray
    mid: np.ndarray
    high: np.ndarray

    def stacked(self) -> np.ndarray:
        return np.stack([self.low, self.mid, self.high])


def accel_power(seq: ImuSequence) -> np.ndarray:
    """Per-frame sum of squared acceleration across the three axes."""
    a = seq.channels[:, ACCEL_SLICE]
    return np.einsum("ij,ij->i", a, a)


def detect_peaks_threshold(power: np.ndarray, threshold: float,
                           min_separation: int = 180) -> list[int]:
    """Local maxima above a threshold, suppressed within min_separation.

    Within any min_separation-frame neighbourhood only the highest candidate
    survives; ties break toward the earlier frame. Returns sorted indices.
    """
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    if min_separation < 1:
        raise ValueError("min_separation must be >= 1")
    p = np.asarray(power, dtype=np.float64)
    n = len(p)
    candidates = []
    for i in range(n):
        if p[i] <= threshold:
            continue
        left = p[i - 1] if i > 0 else -np.inf
        right = p[i + 1] if i < n - 1 else -np.inf
        # Local maximum with earlier-frame tie break: strictly above the
        # left neighbour, at least the right neighbour.
        if p[i] > left and p[i] >= right:
            candidates.append(i)

    # Greedy suppression: highest value first (earlier frame wins ties),
    # drop every other candidate within min_separation of a keeper.
    order = sorted(candidates, key=lambda i: (-p[i], i))
    kept: list[int] = []
    for i in order:
        if all(abs(i - j) >= min_separation for j in kept):
            kept.append(i)
    return sorted(kept)


def band_masks(n: int, rate: float, spec: BandSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean FFT-bin masks for the three bands; a partition of all bins.

    DC goes to low; the Nyquist bin (even n) goes to high. Masks are
    symmetric in +/- frequency so each band inverse-transforms to a real
    signal.
    """
    freqs = np.abs(np.fft.fftfreq(n, d=1.0 / rate))
    low = freqs <= spec.low_cut
    mid = (freqs > spec.low_cut) & (freqs <= spec.high_cut)
    high = freqs > spec.high_cut
    return low, mid, high


def band_decompose(frames: np.ndarray, rate: float, spec: BandSpec = BandSpec()) -> BandTriple:
    """Split (L, C) frames into three band-limited parts of the same shape.

    Per channel: FFT, zero the complement of each band, inverse FFT. The
    masks partition the bins, so low + mid + high reconstructs the input.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if not np.all(np.isfinite(frames)):
        raise ValueError("band_decompose requires finite input")
    spec.validate_rate(rate)
    squeeze = frames.ndim == 1
    if squeeze:
        frames = frames[:, None]
    n = frames.shape[0]
    spectrum = np.fft.fft(frames, axis=0)
    low_m, mid_m, high_m = band_masks(n, rate, spec)
    parts = []
    for mask in (low_m, mid_m, high_m):
        band = np.fft.ifft(spectrum * mask[:, None], axis=0).real
        parts.append(band[:, 0] if squeeze else band)
    return BandTriple(*parts)
