"""Sample ingestion, fixed power-of-two framing, and the voiced/silent gate.

Audio enters as 16-bit mono PCM and is cut into non-overlapping blocks of a
power-of-two number of samples (default 256 at 16 kHz, i.e. 16 ms).  Each
block is classified Voiced or Silent by an RMS gate, either against a fixed
threshold or against an adaptive noise-floor estimate.
"""

from __future__ import annotations

import math
import wave
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError

DEFAULT_SAMPLE_RATE = 16000
DEFAULT_BLOCK_SIZE = 256

VOICED = "voiced"
SILENT = "silent"

# EMA coefficient for the adaptive noise floor: floor += (rms - floor) / 16,
# applied on Silent blocks only.
NOISE_FLOOR_EMA = 1.0 / 16.0
DEFAULT_THRESHOLD_FACTOR = 4.0


@dataclass(frozen=True)
class AudioBlock:
    """One fixed-size window of PCM samples.

    ``samples`` always has length ``block_size`` (a power of two); a final
    partial window is zero-padded and carries ``padded=True`` so downstream
    stages may exclude it from training or metrics.
    """

    index: int
    samples: np.ndarray  # int16, length == block size
    sample_rate: int
    padded: bool = False

    @property
    def block_size(self) -> int:
        return len(self.samples)

    @property
    def duration_s(self) -> float:
        return self.block_size / self.sample_rate

    def rms(self) -> float:
        x = self.samples.astype(np.float64)
        return float(math.sqrt(np.mean(x * x)))


@dataclass(frozen=True)
class GateState:
    """State threaded through gate_block.

    noise_floor is None until the first block calibrates it (adaptive mode).
    """

    mode: str = "fixed"  # "fixed" | "adaptive"
    threshold_factor: float = DEFAULT_THRESHOLD_FACTOR
    noise_floor: float | None = None

    def __post_init__(self):
        if self.mode not in ("fixed", "adaptive"):
            raise ConfigError(f"unknown gate mode {self.mode!r}")
        if self.mode == "adaptive" and self.threshold_factor <= 1.0:
            raise ConfigError("adaptive threshold_factor must be > 1")
        if self.noise_floor is not None and self.noise_floor < 0:
            raise ConfigError("noise_floor must be >= 0")


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


def frame_signal(pcm, block_size: int = DEFAULT_BLOCK_SIZE,
                 sample_rate: int = DEFAULT_SAMPLE_RATE) -> list[AudioBlock]:
    """Cut a PCM signal into non-overlapping AudioBlocks.

    A trailing partial window is zero-padded and flagged.  Concatenating the
    blocks' samples and truncating to the input length reproduces the input
    exactly.
    """
    if not is_power_of_two(block_size):
        raise ConfigError(f"block_size must be a power of two, got {block_size}")
    pcm = np.asarray(pcm, dtype=np.int16)
    if pcm.ndim != 1:
        raise ConfigError("pcm must be one-dimensional")
    if len(pcm) == 0:
        raise ConfigError("pcm must be non-empty")

    n_full, rem = divmod(len(pcm), block_size)
    blocks = []
    for i in range(n_full):
        blocks.append(AudioBlock(i, pcm[i * block_size:(i + 1) * block_size],
                                 sample_rate))
    if rem:
        tail = np.zeros(block_size, dtype=np.int16)
        tail[:rem] = pcm[n_full * block_size:]
        blocks.append(AudioBlock(n_full, tail, sample_rate, padded=True))
    return blocks


def unframe(blocks: list[AudioBlock], length: int | None = None) -> np.ndarray:
    """Inverse of frame_signal; optionally truncate trailing padding."""
    out = np.concatenate([b.samples for b in blocks]) if blocks else \
        np.zeros(0, dtype=np.int16)
    return out if length is None else out[:length]


def gate_block(block: AudioBlock, state: GateState,
               fixed_threshold: float = 500.0) -> tuple[str, GateState]:
    """Classify one block as VOICED or SILENT and advance the gate state.

    Fixed mode: Voiced iff RMS >= fixed_threshold.  Adaptive mode: Voiced iff
    RMS >= noise_floor * threshold_factor; the noise floor is EMA-updated on
    Silent blocks only, so it never rises on a Voiced block.  An all-zero
    block is Silent by definition.  The first adaptive block calibrates the
    floor and is classified Silent.
    """
    rms = block.rms()
    if rms == 0.0:
        decision = SILENT
    elif state.mode == "fixed":
        if fixed_threshold <= 0:
            raise ConfigError("fixed_threshold must be > 0")
        decision = VOICED if rms >= fixed_threshold else SILENT
    else:
        if state.noise_floor is None:
            return SILENT, replace(state, noise_floor=rms)
        threshold = state.noise_floor * state.threshold_factor
        decision = VOICED if rms >= threshold else SILENT

    if state.mode == "adaptive" and decision == SILENT and state.noise_floor is not None:
        floor = state.noise_floor + NOISE_FLOOR_EMA * (rms - state.noise_floor)
        return decision, replace(state, noise_floor=floor)
    return decision, state


def gate_stream(blocks, state: GateState, fixed_threshold: float = 500.0):
    """Gate a block sequence in order; returns list of (block, decision)."""
    out = []
    for block in blocks:
        decision, state = gate_block(block, state, fixed_threshold)
        out.append((block, decision))
    return out


def read_wav(path) -> tuple[np.ndarray, int]:
    """Read a 16-bit mono PCM WAV file; returns (samples, sample_rate)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2:
            raise ConfigError(f"{path}: expected 16-bit PCM, got "
                              f"{8 * wf.getsampwidth()}-bit")
        if wf.getnchannels() != 1:
            raise ConfigError(f"{path}: expected mono, got "
                              f"{wf.getnchannels()} channels")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    return np.frombuffer(raw, dtype="<i2").copy(), rate


def write_wav(path, pcm, sample_rate: int) -> None:
    pcm = np.asarray(pcm, dtype="<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate)
        wf.writeframes(pcm.tobytes())


def resample(pcm, rate_in: int, rate_out: int) -> np.ndarray:
    """Windowed-sinc anti-aliased resampler for the --resample convenience path.

    Low-passes at 90% of the narrower Nyquist, then samples the filtered
    signal on the output grid by linear interpolation.
    """
    if rate_in == rate_out:
        return np.asarray(pcm, dtype=np.int16)
    x = np.asarray(pcm, dtype=np.float64)
    cutoff = 0.9 * 0.5 * min(rate_in, rate_out)
    # 127-tap Hann-windowed sinc at the input rate
    taps = 127
    t = np.arange(taps) - (taps - 1) / 2
    h = np.sinc(2 * cutoff / rate_in * t) * np.hanning(taps)
    h *= 2 * cutoff / rate_in
    filtered = np.convolve(x, h, mode="same")
    n_out = int(round(len(x) * rate_out / rate_in))
    pos = np.arange(n_out) * (rate_in / rate_out)
    out = np.interp(pos, np.arange(len(x)), filtered)
    return np.clip(np.round(out), -32768, 32767).astype(np.int16)
