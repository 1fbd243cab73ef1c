"""Corpus loading: WAV + ground-truth JSONL into training matrices."""

from __future__ import annotations

import json
import wave
from dataclasses import dataclass

import numpy as np

from .features import MfccFrontEnd, frame


def read_wav(path) -> tuple[np.ndarray, int]:
    with wave.open(str(path), "rb") as wf:
        if wf.getsampwidth() != 2 or wf.getnchannels() != 1:
            raise ValueError(f"{path}: need 16-bit mono PCM")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    return np.frombuffer(raw, dtype="<i2").copy(), rate


def read_events(path) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def select_three(first: int, last: int) -> list[int]:
    span = last - first
    return [first + int(np.floor(i * span / 2.0 + 0.5)) for i in range(3)]


@dataclass
class Dataset:
    """Block-level detector data plus per-syllable classifier data."""

    block_mfcc: np.ndarray       # (n_blocks, 16) float, Q8.8-rounded values
    block_voiced: np.ndarray     # (n_blocks,) bool
    syll_mfcc: np.ndarray        # (n_syllables, 3, 16) float
    syll_label: np.ndarray       # (n_syllables,) int


def build_dataset(wav_path, labels_path, block_size: int = 256,
                  boundary_jitter: bool = True) -> Dataset:
    """Features for every block and for every ground-truth syllable.

    Detector truth marks a block voiced when any event overlaps it.  The
    classifier sees first/middle/last blocks of each event; with
    boundary_jitter each event also contributes variants with the edges
    pulled in by one block, mimicking detector onset/offset noise.
    """
    pcm, rate = read_wav(wav_path)
    events = read_events(labels_path)
    frontend = MfccFrontEnd(block_size, rate)
    frames = frame(pcm, block_size)
    mfcc = frontend.mfcc_q(frames).astype(np.float64) / 256.0
    n_blocks = len(frames)

    voiced = np.zeros(n_blocks, dtype=bool)
    for e in events:
        first = e["onset_sample"] // block_size
        last = min((e["offset_sample"] - 1) // block_size, n_blocks - 1)
        voiced[first:last + 1] = True

    inputs = []
    labels = []
    for e in events:
        first = e["onset_sample"] // block_size
        last = min((e["offset_sample"] - 1) // block_size, n_blocks - 1)
        spans = [(first, last)]
        if boundary_jitter and last - first >= 2:
            spans += [(first + 1, last), (first, last - 1)]
        for lo, hi in spans:
            inputs.append(mfcc[select_three(lo, hi)])
            labels.append(e["label"])
    return Dataset(mfcc, voiced, np.stack(inputs), np.array(labels))


def merge_datasets(datasets: list[Dataset]) -> Dataset:
    """Concatenate corpora (e.g. renditions at several noise levels)."""
    if len(datasets) == 1:
        return datasets[0]
    return Dataset(
        np.concatenate([d.block_mfcc for d in datasets]),
        np.concatenate([d.block_voiced for d in datasets]),
        np.concatenate([d.syll_mfcc for d in datasets]),
        np.concatenate([d.syll_label for d in datasets]),
    )
