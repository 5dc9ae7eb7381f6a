"""Training-time waveform augmentations: additive noise, pitch shift, time stretch.

All transforms are pure functions of their inputs and explicit keys, so a
sample augmented on any worker in any order reproduces bit-identically.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Tuple

import numpy as np
from scipy.signal import resample_poly

PV_N_FFT = 1024
PV_HOP = 256


class AugmentError(ValueError):
    pass


@dataclass
class AugmentConfig:
    noise_snr_db_range: Tuple[float, float] = (10.0, 40.0)
    pitch_semitone_range: Tuple[float, float] = (-2.0, 2.0)
    stretch_rate_range: Tuple[float, float] = (0.9, 1.1)
    apply_prob: float = 0.5
    enabled: bool = True

    def __post_init__(self):
        for name in ("noise_snr_db_range", "pitch_semitone_range", "stretch_rate_range"):
            low, high = getattr(self, name)
            if low > high:
                raise AugmentError(f"{name}: low {low} exceeds high {high}")
        if not 0.0 <= self.apply_prob <= 1.0:
            raise AugmentError("apply_prob must be in [0, 1]")


def _keyed_rng(*parts) -> np.random.Generator:
    digest = hashlib.sha256(":".join(str(p) for p in parts).encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "big"))


def add_gaussian_noise(wave: np.ndarray, snr_db: float, rng_key: int) -> np.ndarray:
    """Adds Gaussian noise at exactly the requested SNR (noise rescaled to target power)."""
    if math.isinf(snr_db) and snr_db > 0:
        return wave.copy()
    signal_power = float(np.mean(wave**2))
    if len(wave) == 0 or signal_power == 0.0:
        raise AugmentError("SNR is undefined for empty or all-zero input")
    rng = _keyed_rng("noise", rng_key)
    noise = rng.standard_normal(len(wave))
    target_power = signal_power / (10.0 ** (snr_db / 10.0))
    noise *= math.sqrt(target_power / float(np.mean(noise**2)))
    return wave + noise


def _stft(y: np.ndarray, n_fft: int, hop: int) -> np.ndarray:
    pad = n_fft // 2
    y = np.pad(y, (pad, pad), mode="reflect" if len(y) > pad else "constant")
    n_frames = 1 + (len(y) - n_fft) // hop
    window = np.hanning(n_fft)
    frames = np.lib.stride_tricks.sliding_window_view(y, n_fft)[::hop][:n_frames]
    return np.fft.rfft(frames * window, axis=-1).T


def _istft(spec: np.ndarray, n_fft: int, hop: int, length: int) -> np.ndarray:
    window = np.hanning(n_fft)
    frames = np.fft.irfft(spec.T, n=n_fft, axis=-1) * window
    out_len = n_fft + hop * (frames.shape[0] - 1)
    out = np.zeros(out_len)
    norm = np.zeros(out_len)
    for i, frame in enumerate(frames):
        start = i * hop
        out[start : start + n_fft] += frame
        norm[start : start + n_fft] += window**2
    out[norm > 1e-10] /= norm[norm > 1e-10]
    pad = n_fft // 2
    out = out[pad : pad + length]
    if len(out) < length:
        out = np.pad(out, (0, length - len(out)))
    return out


def _phase_vocoder(spec: np.ndarray, rate: float, hop: int) -> np.ndarray:
    n_bins, n_frames = spec.shape
    time_steps = np.arange(0, n_frames, rate)
    phi_advance = np.linspace(0, np.pi * hop, n_bins)
    out = np.zeros((n_bins, len(time_steps)), dtype=complex)
    phase_acc = np.angle(spec[:, 0])
    padded = np.concatenate([spec, np.zeros((n_bins, 2), dtype=complex)], axis=1)
    for t, step in enumerate(time_steps):
        idx = int(step)
        frac = step - idx
        c1, c2 = padded[:, idx], padded[:, idx + 1]
        mag = (1 - frac) * np.abs(c1) + frac * np.abs(c2)
        out[:, t] = mag * np.exp(1j * phase_acc)
        dphase = np.angle(c2) - np.angle(c1) - phi_advance
        dphase -= 2 * np.pi * np.round(dphase / (2 * np.pi))
        phase_acc += phi_advance + dphase
    return out


def time_stretch(wave: np.ndarray, rate: float) -> np.ndarray:
    """Changes duration by 1/rate while preserving pitch (phase vocoder)."""
    if not 0.25 < rate < 4:
        raise AugmentError(f"stretch rate {rate} outside (0.25, 4)")
    if rate == 1.0:
        return wave.copy()
    target_len = int(round(len(wave) / rate))
    spec = _stft(wave, PV_N_FFT, PV_HOP)
    stretched = _phase_vocoder(spec, rate, PV_HOP)
    return _istft(stretched, PV_N_FFT, PV_HOP, target_len)


def pitch_shift(wave: np.ndarray, semitones: float, sample_rate: int) -> np.ndarray:
    """Scales the fundamental frequency by 2^(semitones/12) at constant duration."""
    if abs(semitones) > 12:
        raise AugmentError(f"|semitones| must be <= 12, got {semitones}")
    if semitones == 0:
        return wave.copy()
    rate = 2.0 ** (-semitones / 12.0)
    stretched = time_stretch(wave, rate)
    frac = Fraction(rate).limit_denominator(1000)
    shifted = resample_poly(stretched, frac.numerator, frac.denominator)
    if len(shifted) >= len(wave):
        return shifted[: len(wave)]
    return np.pad(shifted, (0, len(wave) - len(shifted)))


def apply_random(
    wave: np.ndarray,
    config: AugmentConfig,
    utt_id: str,
    epoch: int,
    global_seed: int,
    sample_rate: int = 16000,
) -> np.ndarray:
    """Stochastic per-sample augmentation keyed on (global_seed, utt_id, epoch).

    Each transform fires independently with probability apply_prob, with
    parameters drawn uniformly from its range. Output is clipped to [-1, 1].
    """
    if not config.enabled:
        return wave.copy()
    rng = _keyed_rng("augment", global_seed, utt_id, epoch)
    out = wave
    if rng.random() < config.apply_prob:
        low, high = config.pitch_semitone_range
        semitones = rng.uniform(low, high) if low < high else low
        out = pitch_shift(out, semitones, sample_rate)
    if rng.random() < config.apply_prob:
        low, high = config.stretch_rate_range
        rate = rng.uniform(low, high) if low < high else low
        out = time_stretch(out, rate)
    if rng.random() < config.apply_prob:
        low, high = config.noise_snr_db_range
        snr_db = rng.uniform(low, high) if low < high else low
        noise_key = int(rng.integers(0, 2**31))
        out = add_gaussian_noise(out, snr_db, noise_key)
    return np.clip(out, -1.0, 1.0)
