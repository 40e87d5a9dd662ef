"""Audio preprocessing: resample to 32 kHz, center-crop or center-pad to
exactly 10 s, then 64-bin log-mel spectrogram with a 1024-point Hann
window and hop 320."""

from __future__ import annotations

import math

import numpy as np
from scipy.signal import get_window, resample_poly

TARGET_RATE = 32_000
TARGET_SAMPLES = 320_000
N_FFT = 1024
HOP = 320
N_MELS = 64


def resample(waveform: np.ndarray, rate: int,
             target_rate: int = TARGET_RATE) -> np.ndarray:
    if rate == target_rate:
        return waveform
    g = math.gcd(rate, target_rate)
    out = resample_poly(waveform.astype(np.float64), target_rate // g,
                        rate // g)
    return out.astype(np.float32)


def center_fix(waveform: np.ndarray,
               target: int = TARGET_SAMPLES) -> np.ndarray:
    """Center-crop long input, center-pad short input with zeros."""
    n = waveform.shape[0]
    if n == target:
        return waveform
    if n > target:
        start = (n - target) // 2
        return waveform[start:start + target]
    left = (target - n) // 2
    right = target - n - left
    return np.concatenate([
        np.zeros(left, dtype=waveform.dtype), waveform,
        np.zeros(right, dtype=waveform.dtype)])


def _mel_filterbank(n_mels: int, n_fft: int, rate: int) -> np.ndarray:
    def hz_to_mel(f):
        return 2595.0 * np.log10(1.0 + f / 700.0)

    def mel_to_hz(m):
        return 700.0 * (10.0 ** (m / 2595.0) - 1.0)

    n_bins = n_fft // 2 + 1
    mel_points = np.linspace(hz_to_mel(0.0), hz_to_mel(rate / 2.0),
                             n_mels + 2)
    hz_points = mel_to_hz(mel_points)
    bins = np.floor((n_fft + 1) * hz_points / rate).astype(int)
    fb = np.zeros((n_mels, n_bins))
    for m in range(1, n_mels + 1):
        lo, center, hi = bins[m - 1], bins[m], bins[m + 1]
        for k in range(lo, center):
            if center > lo:
                fb[m - 1, k] = (k - lo) / (center - lo)
        for k in range(center, hi):
            if hi > center:
                fb[m - 1, k] = (hi - k) / (hi - center)
    return fb


def log_mel(waveform: np.ndarray, rate: int = TARGET_RATE,
            n_fft: int = N_FFT, hop: int = HOP,
            n_mels: int = N_MELS) -> np.ndarray:
    """(frames, n_mels) log power mel spectrogram; no frame centering."""
    if waveform.shape[0] < n_fft:
        raise ValueError(
            f"waveform of {waveform.shape[0]} samples is shorter than one "
            f"{n_fft}-point window")
    window = get_window("hann", n_fft)
    frames = np.lib.stride_tricks.sliding_window_view(
        waveform, n_fft)[::hop]
    spectrum = np.abs(np.fft.rfft(frames * window, axis=1)) ** 2
    fb = _mel_filterbank(n_mels, n_fft, rate)
    mel = spectrum @ fb.T
    return np.log10(np.maximum(mel, 1e-10)).astype(np.float32)


def process(waveform: np.ndarray, rate: int) -> tuple:
    """Full pipeline; returns (fixed 32 kHz waveform, log-mel matrix)."""
    fixed = center_fix(resample(waveform, rate))
    return fixed, log_mel(fixed)
