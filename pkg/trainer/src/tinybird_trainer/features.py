"""Standalone MFCC front end.

This mirrors the streaming toolkit's feature definition without sharing any
code with it: Hann window, power spectrum (np.fft here), 16 triangular Mel
filters over 250-8000 Hz, natural log with a 1e-10 floor, orthonormal
DCT-II, and Q8.8 output (round-half-up to 1/256).  The golden-vector test
pins both implementations to each other within 2 quantization steps.
"""

from __future__ import annotations

import numpy as np

N_MFCC = 16
LOG_FLOOR = 1e-10
F_MIN = 250.0
F_MAX = 8000.0
Q_STEP = 1.0 / 256.0


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_weights(fft_size: int, sample_rate: int, n_filters: int = N_MFCC,
                f_min: float = F_MIN, f_max: float = F_MAX) -> np.ndarray:
    n_bins = fft_size // 2 + 1
    bin_hz = np.arange(n_bins) * sample_rate / fft_size
    edges = mel_to_hz(np.linspace(hz_to_mel(f_min), hz_to_mel(f_max),
                                  n_filters + 2))
    weights = np.zeros((n_filters, n_bins))
    for k in range(n_filters):
        lo, center, hi = edges[k], edges[k + 1], edges[k + 2]
        rising = (bin_hz - lo) / (center - lo)
        falling = (hi - bin_hz) / (hi - center)
        weights[k] = np.clip(np.minimum(rising, falling), 0.0, None)
    return weights


def dct_matrix(n: int) -> np.ndarray:
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * np.sqrt(2.0 / n)
    mat[0] *= np.sqrt(0.5)
    return mat


class MfccFrontEnd:
    def __init__(self, block_size: int = 256, sample_rate: int = 16000):
        self.block_size = block_size
        self.sample_rate = sample_rate
        self.window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(block_size)
                                         / block_size)
        self.weights = mel_weights(block_size, sample_rate)
        self.dct = dct_matrix(N_MFCC)

    def mfcc_float(self, frames: np.ndarray) -> np.ndarray:
        """(..., block_size) int16 samples -> (..., 16) float coefficients."""
        x = np.asarray(frames, dtype=np.float64) / 32768.0
        x = x * self.window
        power = np.abs(np.fft.rfft(x, axis=-1)) ** 2
        energies = power @ self.weights.T
        logs = np.log(np.maximum(energies, LOG_FLOOR))
        return logs @ self.dct.T

    def mfcc_q(self, frames: np.ndarray) -> np.ndarray:
        """Q8.8 int16 output, round-half-up, saturating."""
        q = np.floor(self.mfcc_float(frames) * 256.0 + 0.5)
        return np.clip(q, -32768, 32767).astype(np.int16)


def frame(pcm: np.ndarray, block_size: int = 256) -> np.ndarray:
    """Non-overlapping blocks, trailing partial block zero-padded."""
    pcm = np.asarray(pcm, dtype=np.int16)
    n_full, rem = divmod(len(pcm), block_size)
    n_blocks = n_full + (1 if rem else 0)
    out = np.zeros((n_blocks, block_size), dtype=np.int16)
    out[:n_full] = pcm[:n_full * block_size].reshape(n_full, block_size)
    if rem:
        out[-1, :rem] = pcm[n_full * block_size:]
    return out
