"""Block-level spectral features: FFT magnitude, Mel filterbank, MFCCs,
spectrogram export.

The FFT is an iterative radix-2 decimation-in-time transform, vectorized
over leading axes so a whole stream of blocks transforms in one call.  MFCCs
are 16 coefficients (log Mel filter energies followed by an orthonormal
DCT-II) delivered on a Q8.8 fixed-point scale; the quantized detector and
classifier consume them through the input quantizer stored in the weight
file.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .audio import AudioBlock
from .errors import ConfigError

N_MFCC = 16
LOG_FLOOR = 1e-10
Q8_8_STEP = 1.0 / 256.0

MEL_FMIN = 250.0    # zebra-finch vocal band lower edge
MEL_FMAX = 8000.0

DB_FLOOR = -80.0


# ------------------------------------------------------------------- FFT

def fft_radix2(x: np.ndarray) -> np.ndarray:
    """Iterative radix-2 DIT FFT along the last axis (length power of two)."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n == 0 or n & (n - 1):
        raise ConfigError(f"FFT length must be a power of two, got {n}")
    levels = n.bit_length() - 1
    # bit-reversal permutation
    rev = np.zeros(n, dtype=np.intp)
    for i in range(1, n):
        rev[i] = (rev[i >> 1] >> 1) | ((i & 1) << (levels - 1))
    out = np.asarray(x, dtype=np.complex128)[..., rev].copy()
    half = 1
    while half < n:
        m = half * 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / m)
        blocks = out.reshape(*out.shape[:-1], n // m, m)
        even = blocks[..., :half].copy()
        odd = blocks[..., half:] * twiddle
        blocks[..., :half] = even + odd
        blocks[..., half:] = even - odd
        half = m
    return out


def hann_window(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def fft_magnitude(block: AudioBlock, window: str = "rect") -> np.ndarray:
    """One-sided magnitude spectrum (block_size/2 + 1 bins) of one block."""
    x = block.samples.astype(np.float64)
    if window == "hann":
        x = x * hann_window(len(x))
    elif window != "rect":
        raise ConfigError(f"unknown window {window!r}")
    spectrum = fft_radix2(x)
    return np.abs(spectrum[:len(x) // 2 + 1])


# ------------------------------------------------------------ Mel filterbank

def _hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def _mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass
class MelFilterbank:
    """Triangular filters on the Mel scale, one row per filter.

    16 filters spanning 250-8000 Hz feed a square 16-point DCT, giving the
    16 MFCCs directly.
    """

    fft_size: int
    sample_rate: int
    n_filters: int = N_MFCC
    f_min: float = MEL_FMIN
    f_max: float = MEL_FMAX
    weights: np.ndarray = field(init=False, repr=False)
    centers_hz: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.f_max > self.sample_rate / 2:
            raise ConfigError("f_max above Nyquist")
        n_bins = self.fft_size // 2 + 1
        bin_hz = np.arange(n_bins) * self.sample_rate / self.fft_size
        edges_mel = np.linspace(_hz_to_mel(self.f_min), _hz_to_mel(self.f_max),
                                self.n_filters + 2)
        edges_hz = _mel_to_hz(edges_mel)
        weights = np.zeros((self.n_filters, n_bins))
        for k in range(self.n_filters):
            lo, center, hi = edges_hz[k], edges_hz[k + 1], edges_hz[k + 2]
            rising = (bin_hz - lo) / (center - lo)
            falling = (hi - bin_hz) / (hi - center)
            weights[k] = np.clip(np.minimum(rising, falling), 0.0, None)
            if weights[k].sum() <= 0.0:
                raise ConfigError(f"mel filter {k} covers no FFT bin")
        self.weights = weights
        self.centers_hz = edges_hz[1:-1]

    def apply(self, power_spectrum: np.ndarray) -> np.ndarray:
        return power_spectrum @ self.weights.T


def dct_ii_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II basis, rows = output coefficients."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    mat = np.cos(np.pi * k * (2 * i + 1) / (2 * n)) * math.sqrt(2.0 / n)
    mat[0] *= math.sqrt(0.5)
    return mat


@dataclass(frozen=True)
class MfccVector:
    """16 MFCCs on a Q8.8 scale: float value = q / 256."""

    q: np.ndarray  # int16[16]

    def __post_init__(self):
        if self.q.shape != (N_MFCC,):
            raise ConfigError(f"MfccVector needs {N_MFCC} coefficients")

    def as_float(self) -> np.ndarray:
        return self.q.astype(np.float64) * Q8_8_STEP


def quantize_q8_8(values: np.ndarray) -> np.ndarray:
    """Round-half-up to 1/256 steps, saturating at the int16 rails."""
    q = np.floor(np.asarray(values, dtype=np.float64) * 256.0 + 0.5)
    return np.clip(q, -32768, 32767).astype(np.int16)


def mfcc_float(samples: np.ndarray, fb: MelFilterbank,
               window: str = "hann") -> np.ndarray:
    """Unquantized MFCC pipeline; samples are normalized to [-1, 1) so a
    full-scale signal stays inside the Q8.8 range."""
    x = np.asarray(samples, dtype=np.float64) / 32768.0
    if window == "hann":
        x = x * hann_window(x.shape[-1])
    spectrum = fft_radix2(x)
    power = np.abs(spectrum[..., :x.shape[-1] // 2 + 1]) ** 2
    energies = fb.apply(power)
    logs = np.log(np.maximum(energies, LOG_FLOOR))
    return logs @ dct_ii_matrix(fb.n_filters).T[:, :N_MFCC]


def mfcc(block: AudioBlock, fb: MelFilterbank, window: str = "hann") -> MfccVector:
    if fb.fft_size != block.block_size or fb.sample_rate != block.sample_rate:
        raise ConfigError("filterbank does not match block geometry")
    return MfccVector(quantize_q8_8(mfcc_float(block.samples, fb, window)))


def mfcc_stream(pcm_blocks: np.ndarray, fb: MelFilterbank,
                window: str = "hann") -> np.ndarray:
    """Vectorized MFCCs for a (n_blocks, block_size) array; returns int16
    Q8.8 of shape (n_blocks, 16)."""
    return quantize_q8_8(mfcc_float(pcm_blocks, fb, window))


# ---------------------------------------------------------------- spectrogram

def spectrogram(pcm, block_size: int = 256, hop: int | None = None,
                sample_rate: int = 16000, window: str = "hann") -> np.ndarray:
    """dB-magnitude matrix, rows = frequency bins, cols = frames.

    0 dB corresponds to a full-scale sine; the floor is -80 dB.  Input
    shorter than one block is zero-padded into a single frame.
    """
    if hop is None:
        hop = block_size
    if hop > block_size or hop <= 0:
        raise ConfigError("hop must be in (0, block_size]")
    pcm = np.asarray(pcm, dtype=np.float64)
    if len(pcm) < block_size:
        pad = np.zeros(block_size)
        pad[:len(pcm)] = pcm
        frames = pad[None, :]
    else:
        n_frames = 1 + (len(pcm) - block_size) // hop
        idx = np.arange(block_size)[None, :] + hop * np.arange(n_frames)[:, None]
        frames = pcm[idx]
    if window == "hann":
        frames = frames * hann_window(block_size)[None, :]
    spectra = fft_radix2(frames)
    mags = np.abs(spectra[:, :block_size // 2 + 1])
    full_scale = 32768.0 * block_size / 2.0
    with np.errstate(divide="ignore"):
        db = 20.0 * np.log10(mags / full_scale)
    return np.maximum(db, DB_FLOOR).T


def spectrogram_to_csv(matrix: np.ndarray, path) -> None:
    """One CSV row per frequency bin (low to high), one column per frame."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in matrix:
            writer.writerow([f"{v:.2f}" for v in row])


def spectrogram_to_png(matrix: np.ndarray, path, sample_rate: int = 16000,
                       hop: int = 256, title: str | None = None) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    n_bins, n_frames = matrix.shape
    extent = (0.0, n_frames * hop / sample_rate, 0.0, sample_rate / 2 / 1000.0)
    fig, ax = plt.subplots(figsize=(8, 3.2))
    im = ax.imshow(matrix, origin="lower", aspect="auto", extent=extent,
                   cmap="magma", vmin=DB_FLOOR, vmax=0.0)
    ax.set_xlabel("time [s]")
    ax.set_ylabel("frequency [kHz]")
    if title:
        ax.set_title(title)
    fig.colorbar(im, ax=ax, label="dB")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
