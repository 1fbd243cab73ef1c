"""Real-time event pipeline: detect per block, segment syllables, classify
each completed segment, emit compact events.

The detector runs on every block; the classifier only runs once per
completed segment, on three evenly distributed blocks between onset and
offset.  A segment closes after `hangover` consecutive negative blocks
(default 1: zebra-finch gaps can be shorter than one block, so any longer
hangover would merge real syllables).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import dsp, tinyml
from .audio import frame_signal
from .errors import ConfigError

DEFAULT_HANGOVER = 1
DEFAULT_MIN_LEN = 1

# measured on-device inference times, carried as metadata in timing reports
DETECT_MS = 1.2
CLASSIFY_MS = 4.2

EVENT_RECORD = struct.Struct("<IHB")   # gap_blocks u32, duration u16, label u8


@dataclass(frozen=True)
class SyllableEvent:
    onset_block: int
    offset_block: int        # inclusive
    label: int
    gap_blocks: int          # blocks since the previous event's offset

    def __post_init__(self):
        if self.onset_block > self.offset_block:
            raise ConfigError("event onset after offset")
        if self.gap_blocks < 0:
            raise ConfigError("negative gap")

    @property
    def duration_blocks(self) -> int:
        return self.offset_block - self.onset_block + 1


@dataclass
class TimingReport:
    block_count: int = 0
    detector_invocations: int = 0
    classifier_invocations: int = 0
    trailing_gap_blocks: int = 0
    block_ms: float = 16.0
    hangover_blocks: int = DEFAULT_HANGOVER
    detect_ms_per_call: float = DETECT_MS
    classify_ms_per_call: float = CLASSIFY_MS

    @property
    def modeled_inference_ms(self) -> float:
        return (self.detector_invocations * self.detect_ms_per_call
                + self.classifier_invocations * self.classify_ms_per_call)

    @property
    def modeled_event_latency_ms(self) -> float:
        """Delay from syllable offset to event emission: the hangover wait
        plus one classifier inference."""
        return self.hangover_blocks * self.block_ms + self.classify_ms_per_call


def segment(decisions, hangover: int = DEFAULT_HANGOVER,
            min_len: int = DEFAULT_MIN_LEN) -> list[tuple[int, int]]:
    """Turn per-block detector booleans into (onset, offset) segments.

    offset is the last positive block before `hangover` consecutive
    negatives; a run still open at stream end is closed there.  Segments
    shorter than min_len blocks are discarded.
    """
    segments = []
    in_syllable = False
    onset = 0
    last_positive = 0
    negatives = 0
    for i, d in enumerate(decisions):
        if d:
            if not in_syllable:
                in_syllable = True
                onset = i
            last_positive = i
            negatives = 0
        elif in_syllable:
            negatives += 1
            if negatives >= hangover:
                if last_positive - onset + 1 >= min_len:
                    segments.append((onset, last_positive))
                in_syllable = False
    if in_syllable and last_positive - onset + 1 >= min_len:
        segments.append((onset, last_positive))
    return segments


def select_blocks(onset: int, offset: int) -> list[int]:
    """First, middle and last block of a segment; short segments repeat.

    index_i = onset + round_half_up(i * (L - 1) / 2) for i in {0, 1, 2}.
    """
    if onset > offset:
        raise ConfigError("onset must not exceed offset")
    span = offset - onset
    return [onset + int(np.floor(i * span / 2.0 + 0.5)) for i in range(3)]


@dataclass
class PipelineConfig:
    sample_rate: int = 16000
    block_size: int = 256
    hangover: int = DEFAULT_HANGOVER
    min_len: int = DEFAULT_MIN_LEN
    window: str = "hann"


def run_pipeline(pcm, bundle: tinyml.ModelBundle,
                 config: PipelineConfig | None = None
                 ) -> tuple[list[SyllableEvent], TimingReport]:
    """Full detector -> segmenter -> classifier pass over a PCM signal."""
    config = config or PipelineConfig()
    blocks = frame_signal(pcm, config.block_size, config.sample_rate)
    fb = dsp.MelFilterbank(config.block_size, config.sample_rate)
    frames = np.stack([b.samples for b in blocks])
    mfccs_q = dsp.mfcc_stream(frames, fb, config.window)
    mfccs = mfccs_q.astype(np.float64) * dsp.Q8_8_STEP

    report = TimingReport(block_count=len(blocks),
                          block_ms=1000.0 * config.block_size / config.sample_rate,
                          hangover_blocks=config.hangover)
    decisions = []
    for vec in mfccs:
        result = tinyml.detect(vec, bundle.detector)
        report.detector_invocations += 1
        decisions.append(result["is_syllable"])

    events = []
    prev_end = 0
    for onset, offset in segment(decisions, config.hangover, config.min_len):
        picks = select_blocks(onset, offset)
        result = tinyml.classify(mfccs[picks], bundle.classifier)
        report.classifier_invocations += 1
        events.append(SyllableEvent(onset, offset, result["label"],
                                    gap_blocks=onset - prev_end))
        prev_end = offset + 1
    report.trailing_gap_blocks = len(blocks) - prev_end
    return events, report


def syllable_error_rate(predicted, reference) -> float:
    """Levenshtein edit distance (unit costs) divided by reference length."""
    reference = list(reference)
    predicted = list(predicted)
    if not reference:
        raise ConfigError("reference sequence must be non-empty")
    prev = list(range(len(reference) + 1))
    for i, p in enumerate(predicted, start=1):
        cur = [i] + [0] * len(reference)
        for j, r in enumerate(reference, start=1):
            cur[j] = min(prev[j] + 1,                      # deletion
                         cur[j - 1] + 1,                   # insertion
                         prev[j - 1] + (p != r))           # substitution
        prev = cur
    return prev[-1] / len(reference)


# ------------------------------------------------------------- event output

def events_to_jsonl(events, block_size: int, sample_rate: int) -> str:
    """One JSON object per line: onset_ms, offset_ms (end-exclusive), label,
    gap_ms."""
    ms = 1000.0 * block_size / sample_rate
    lines = []
    for e in events:
        lines.append(json.dumps({
            "onset_ms": round(e.onset_block * ms, 3),
            "offset_ms": round((e.offset_block + 1) * ms, 3),
            "label": e.label,
            "gap_ms": round(e.gap_blocks * ms, 3),
        }))
    return "\n".join(lines) + ("\n" if lines else "")


def events_to_records(events) -> bytes:
    """Compact binary mirror of the low-rate event link: 7 bytes per event."""
    return b"".join(EVENT_RECORD.pack(e.gap_blocks, e.duration_blocks, e.label)
                    for e in events)


def records_to_events(raw: bytes) -> list[SyllableEvent]:
    if len(raw) % EVENT_RECORD.size:
        raise ConfigError("event record buffer not a multiple of 7 bytes")
    events = []
    cursor = 0
    for off in range(0, len(raw), EVENT_RECORD.size):
        gap, duration, label = EVENT_RECORD.unpack_from(raw, off)
        onset = cursor + gap
        events.append(SyllableEvent(onset, onset + duration - 1, label, gap))
        cursor = onset + duration
    return events
