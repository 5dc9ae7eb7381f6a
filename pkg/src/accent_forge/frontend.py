"""Audio IO, duration normalization, and log filterbank feature extraction."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path
from typing import Tuple

import numpy as np
from scipy.io import wavfile
from scipy.signal import resample_poly


class AudioError(ValueError):
    pass


@dataclass
class Waveform:
    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=np.float64)
        if self.samples.size == 0:
            raise AudioError("waveform must be non-empty")

    @property
    def duration_sec(self) -> float:
        return len(self.samples) / self.sample_rate


@dataclass
class FeatureSpec:
    """Log linear-filterbank configuration. Window/hop are in seconds."""

    num_bins: int = 60
    window_sec: float = 0.025
    hop_sec: float = 0.010
    sample_rate: int = 16000
    segment_sec: float = 4.0
    log_floor: float = 1e-10

    def window_samples(self) -> int:
        return int(round(self.window_sec * self.sample_rate))

    def hop_samples(self) -> int:
        return int(round(self.hop_sec * self.sample_rate))


@dataclass
class FeatureMatrix:
    values: np.ndarray  # [frequency_bins, frames]
    frame_hop_sec: float
    bin_spec: Tuple[str, int]


def save_audio(path, samples: np.ndarray, sample_rate: int) -> None:
    """Writes 16-bit linear PCM RIFF."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    clipped = np.clip(samples, -1.0, 1.0)
    wavfile.write(path, sample_rate, (clipped * 32767.0).astype(np.int16))


def load_audio(path, target_rate: int) -> Waveform:
    """Mono waveform at target_rate; peak-normalized only if |peak| > 1."""
    try:
        rate, data = wavfile.read(Path(path))
    except Exception as exc:
        raise AudioError(f"cannot decode {path}: {exc}") from exc
    data = np.asarray(data)
    if data.ndim > 1:
        data = data.mean(axis=1)
    if data.dtype == np.int16:
        samples = data / 32768.0
    elif data.dtype == np.int32:
        samples = data / 2147483648.0
    elif data.dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    else:
        samples = data.astype(np.float64)
    if rate != target_rate:
        frac = Fraction(target_rate, int(rate))
        samples = resample_poly(samples, frac.numerator, frac.denominator)
    peak = float(np.max(np.abs(samples))) if samples.size else 0.0
    if peak > 1.0:
        samples = samples / peak
    return Waveform(samples=samples, sample_rate=target_rate)


def fix_duration(wave: Waveform, target_sec: float, mode: str = "tile", rng_key: int = 0) -> Waveform:
    """Forces exactly target_sec * rate samples by tiling or cropping."""
    if target_sec <= 0:
        raise AudioError("target_sec must be positive")
    if mode not in ("tile", "crop_center", "crop_random"):
        raise AudioError(f"unknown duration mode {mode!r}")
    target = int(round(target_sec * wave.sample_rate))
    samples = wave.samples
    if len(samples) == target:
        return Waveform(samples.copy(), wave.sample_rate)
    if len(samples) < target:
        reps = -(-target // len(samples))
        samples = np.tile(samples, reps)
    if mode == "tile" or len(wave.samples) < target:
        return Waveform(samples[:target], wave.sample_rate)
    if mode == "crop_center":
        start = (len(samples) - target) // 2
    else:
        digest = hashlib.sha256(f"crop:{rng_key}".encode()).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "big"))
        start = int(rng.integers(0, len(samples) - target + 1))
    return Waveform(samples[start : start + target], wave.sample_rate)


def linear_filterbank(num_bins: int, n_fft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters with linearly spaced centers over [0, Nyquist]."""
    edges = np.linspace(0.0, sample_rate / 2.0, num_bins + 2)
    fft_freqs = np.fft.rfftfreq(n_fft, d=1.0 / sample_rate)
    bank = np.zeros((num_bins, len(fft_freqs)))
    for b in range(num_bins):
        left, center, right = edges[b], edges[b + 1], edges[b + 2]
        up = (fft_freqs - left) / (center - left)
        down = (right - fft_freqs) / (right - center)
        bank[b] = np.maximum(0.0, np.minimum(up, down))
    return bank


def filterbank_centers(spec: FeatureSpec) -> np.ndarray:
    edges = np.linspace(0.0, spec.sample_rate / 2.0, spec.num_bins + 2)
    return edges[1:-1]


def extract_features(wave: Waveform, spec: FeatureSpec) -> FeatureMatrix:
    """Log-power filterbank energies, frames = floor((N - window)/hop) + 1."""
    if wave.sample_rate != spec.sample_rate:
        raise AudioError(f"waveform rate {wave.sample_rate} != configured {spec.sample_rate}")
    window = spec.window_samples()
    hop = spec.hop_samples()
    samples = wave.samples
    if len(samples) < window:
        raise AudioError(f"waveform shorter than one analysis window ({len(samples)} < {window})")
    n_frames = (len(samples) - window) // hop + 1
    n_fft = 1
    while n_fft < window:
        n_fft *= 2
    win = np.hanning(window)
    frames = np.lib.stride_tricks.sliding_window_view(samples, window)[::hop][:n_frames]
    spectrum = np.fft.rfft(frames * win, n=n_fft, axis=-1)
    power = np.abs(spectrum) ** 2
    bank = linear_filterbank(spec.num_bins, n_fft, spec.sample_rate)
    energies = power @ bank.T
    values = np.log(np.maximum(energies, spec.log_floor)).T
    return FeatureMatrix(values=values, frame_hop_sec=spec.hop_sec, bin_spec=("linear", spec.num_bins))
