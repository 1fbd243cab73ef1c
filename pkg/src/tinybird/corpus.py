"""Deterministic synthetic songbird-like corpus with ground truth.

Eight syllable classes, each a harmonic stack with a distinct fundamental
and AM envelope — plainly artificial, but spectrally well separated so the
desk-scale detection/classification task is well posed.  Every random draw
comes from one seeded generator, so a given seed reproduces the WAV
byte-for-byte.

Envelopes keep a floor around 0.3 of peak so syllable edges carry real
energy: block-level voicing derived from the ground-truth events then
matches an amplitude gate exactly in the noiseless case.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

DEFAULT_AMPLITUDE_RMS = 6000.0
MOTIF_PAUSE_MS = (200.0, 500.0)
DURATION_LIMITS_MS = (30.0, 500.0)
GAP_LIMITS_MS = (5.0, 100.0)


@dataclass(frozen=True)
class SyllableTemplate:
    class_id: int
    f0_hz: float
    harmonic_weights: tuple
    duration_range_ms: tuple
    envelope: str

    def __post_init__(self):
        lo, hi = self.duration_range_ms
        if not (DURATION_LIMITS_MS[0] <= lo <= hi <= DURATION_LIMITS_MS[1]):
            raise ConfigError(f"class {self.class_id}: duration range {lo}-{hi} ms "
                              f"outside {DURATION_LIMITS_MS}")


TEMPLATES = (
    SyllableTemplate(0, 500.0, (1.0, 0.6, 0.4, 0.2), (60, 120), "flat"),
    SyllableTemplate(1, 710.0, (1.0, 0.2, 0.7), (80, 160), "rise"),
    SyllableTemplate(2, 1000.0, (0.3, 1.0, 0.5), (100, 200), "fall"),
    SyllableTemplate(3, 1420.0, (1.0, 0.8), (120, 240), "arch"),
    SyllableTemplate(4, 2000.0, (1.0, 0.3, 0.15), (150, 300), "tremolo"),
    SyllableTemplate(5, 2840.0, (0.5, 1.0), (40, 90), "attack"),
    SyllableTemplate(6, 4000.0, (1.0,), (180, 360), "dip"),
    SyllableTemplate(7, 5680.0, (1.0, 0.4), (220, 440), "warble"),
)


def _envelope(name: str, phase: np.ndarray) -> np.ndarray:
    if name == "flat":
        return np.ones_like(phase)
    if name == "rise":
        return 0.4 + 0.6 * phase
    if name == "fall":
        return 1.0 - 0.6 * phase
    if name == "arch":
        return 0.4 + 0.6 * np.sin(np.pi * phase)
    if name == "tremolo":
        return 0.65 + 0.35 * np.sin(2.0 * np.pi * 5.0 * phase)
    if name == "attack":
        return np.where(phase < 0.15, 0.4 + 4.0 * phase,
                        1.0 - 0.55 * (phase - 0.15) / 0.85)
    if name == "dip":
        return 1.0 - 0.6 * np.sin(np.pi * phase)
    if name == "warble":
        return 0.7 + 0.3 * np.sin(2.0 * np.pi * 2.5 * phase)
    raise ConfigError(f"unknown envelope {name!r}")


def synth_syllable(template: SyllableTemplate, duration_s: float,
                   sample_rate: int, amplitude_rms: float) -> np.ndarray:
    """Harmonic stack scaled to the requested RMS, float64 output."""
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    sig = np.zeros(n)
    for k, weight in enumerate(template.harmonic_weights, start=1):
        f = template.f0_hz * k
        if f >= sample_rate / 2:
            continue
        sig += weight * np.sin(2.0 * np.pi * f * t)
    env = _envelope(template.envelope, np.arange(n) / max(n - 1, 1))
    sig *= env
    rms = math.sqrt(float(np.mean(sig * sig)))
    return sig * (amplitude_rms / rms)


def generate(seed: int, n_motifs: int, snr_db: float = 20.0,
             sample_rate: int = 16000,
             gap_range_ms: tuple = GAP_LIMITS_MS,
             amplitude_rms: float = DEFAULT_AMPLITUDE_RMS
             ) -> tuple[np.ndarray, list[dict]]:
    """Render n_motifs motifs (each a shuffled pass over all 8 classes).

    Returns (int16 pcm, ground-truth events).  Events carry sample-exact
    onset/offset (offset exclusive) and the class label; audio outside
    events is white Gaussian noise at the configured SNR (or digital
    silence for snr_db = inf/None).
    """
    lo_gap, hi_gap = gap_range_ms
    if not (GAP_LIMITS_MS[0] <= lo_gap <= hi_gap <= GAP_LIMITS_MS[1]):
        raise ConfigError(f"gap range {gap_range_ms} outside {GAP_LIMITS_MS}")
    rng = np.random.default_rng(seed)
    chunks: list[np.ndarray] = []
    events: list[dict] = []
    cursor = 0

    def pause(ms_lo: float, ms_hi: float):
        nonlocal cursor
        n = int(round(rng.uniform(ms_lo, ms_hi) * sample_rate / 1000.0))
        chunks.append(np.zeros(n))
        cursor += n

    pause(*MOTIF_PAUSE_MS)
    for _ in range(n_motifs):
        order = rng.permutation(len(TEMPLATES))
        for pos, class_idx in enumerate(order):
            template = TEMPLATES[class_idx]
            duration = rng.uniform(*template.duration_range_ms) / 1000.0
            syllable = synth_syllable(template, duration, sample_rate,
                                      amplitude_rms)
            onset = cursor
            chunks.append(syllable)
            cursor += len(syllable)
            events.append({
                "label": int(template.class_id),
                "onset_sample": onset,
                "offset_sample": cursor,
                "onset_ms": round(1000.0 * onset / sample_rate, 3),
                "offset_ms": round(1000.0 * cursor / sample_rate, 3),
            })
            if pos < len(order) - 1:
                pause(lo_gap, hi_gap)
        pause(*MOTIF_PAUSE_MS)

    clean = np.concatenate(chunks)
    if snr_db is None or math.isinf(snr_db):
        noisy = clean
    else:
        noise_rms = amplitude_rms / (10.0 ** (snr_db / 20.0))
        noisy = clean + rng.normal(0.0, noise_rms, size=len(clean))
    pcm = np.clip(np.round(noisy), -32768, 32767).astype(np.int16)
    return pcm, events


def events_to_jsonl(events) -> str:
    return "\n".join(json.dumps(e) for e in events) + ("\n" if events else "")


def jsonl_to_events(text: str) -> list[dict]:
    return [json.loads(line) for line in text.splitlines() if line.strip()]


def voiced_block_truth(events, n_blocks: int, block_size: int) -> np.ndarray:
    """Block-level ground truth: True where any event overlaps the block."""
    voiced = np.zeros(n_blocks, dtype=bool)
    for e in events:
        first = e["onset_sample"] // block_size
        last = (e["offset_sample"] - 1) // block_size
        voiced[first:min(last + 1, n_blocks)] = True
    return voiced


def block_segments(events, n_blocks: int, block_size: int) -> list[tuple[int, int, list[int]]]:
    """Ground-truth segments at block granularity.

    Events whose gap contains no full silent block merge into one segment
    (sub-block gaps are irresolvable at this block size); each segment
    carries the labels of the events inside it, in order.
    """
    segments: list[tuple[int, int, list[int]]] = []
    for e in events:
        first = e["onset_sample"] // block_size
        last = min((e["offset_sample"] - 1) // block_size, n_blocks - 1)
        if segments and first <= segments[-1][1] + 1:
            onset, _, labels = segments[-1]
            segments[-1] = (onset, max(last, segments[-1][1]), labels + [e["label"]])
        else:
            segments.append((first, last, [e["label"]]))
    return segments
