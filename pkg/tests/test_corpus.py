import math
from collections import Counter

import numpy as np
import pytest

from tinybird import audio, corpus, dsp
from tinybird.audio import VOICED, GateState
from tinybird.errors import ConfigError


def test_same_seed_identical_output():
    a_pcm, a_events = corpus.generate(seed=5, n_motifs=3, snr_db=20)
    b_pcm, b_events = corpus.generate(seed=5, n_motifs=3, snr_db=20)
    assert np.array_equal(a_pcm, b_pcm)
    assert a_events == b_events
    c_pcm, _ = corpus.generate(seed=6, n_motifs=3, snr_db=20)
    assert not np.array_equal(a_pcm, c_pcm)


def test_events_ordered_disjoint_and_in_bounds():
    pcm, events = corpus.generate(seed=1, n_motifs=5, snr_db=20)
    prev_end = 0
    for e in events:
        assert e["onset_sample"] >= prev_end
        assert e["offset_sample"] > e["onset_sample"]
        prev_end = e["offset_sample"]
    assert prev_end <= len(pcm)


def test_class_histogram_uniform():
    _, events = corpus.generate(seed=2, n_motifs=100, snr_db=math.inf)
    counts = Counter(e["label"] for e in events)
    assert set(counts) == set(range(8))
    # every motif holds each class exactly once
    assert all(c == 100 for c in counts.values())


def test_noiseless_gate_recovers_block_truth_exactly():
    pcm, events = corpus.generate(seed=3, n_motifs=5, snr_db=math.inf)
    blocks = audio.frame_signal(pcm, 256)
    truth = corpus.voiced_block_truth(events, len(blocks), 256)
    state = GateState(mode="fixed")
    decisions = [audio.gate_block(b, state, fixed_threshold=50.0)[0]
                 for b in blocks]
    got = np.array([d == VOICED for d in decisions])
    assert np.array_equal(got, truth)
    assert abs(got.mean() - truth.mean()) <= 0.01


def test_outside_events_is_noise_at_configured_level():
    snr_db = 20.0
    pcm, events = corpus.generate(seed=4, n_motifs=3, snr_db=snr_db)
    mask = np.ones(len(pcm), dtype=bool)
    for e in events:
        mask[e["onset_sample"]:e["offset_sample"]] = False
    noise = pcm[mask].astype(np.float64)
    expected_rms = corpus.DEFAULT_AMPLITUDE_RMS / 10 ** (snr_db / 20)
    assert math.sqrt(np.mean(noise ** 2)) == pytest.approx(expected_rms, rel=0.05)


def test_noiseless_outside_events_is_silence():
    pcm, events = corpus.generate(seed=4, n_motifs=2, snr_db=math.inf)
    mask = np.ones(len(pcm), dtype=bool)
    for e in events:
        mask[e["onset_sample"]:e["offset_sample"]] = False
    assert not pcm[mask].any()


def test_durations_and_gaps_within_template_limits():
    _, events = corpus.generate(seed=7, n_motifs=10, snr_db=math.inf)
    lo_ms, hi_ms = corpus.DURATION_LIMITS_MS
    for e in events:
        dur_ms = (e["offset_sample"] - e["onset_sample"]) / 16.0
        assert lo_ms <= dur_ms <= hi_ms + 1


def test_gap_range_validated():
    with pytest.raises(ConfigError):
        corpus.generate(seed=0, n_motifs=1, gap_range_ms=(1.0, 50.0))
    with pytest.raises(ConfigError):
        corpus.generate(seed=0, n_motifs=1, gap_range_ms=(10.0, 500.0))


def test_template_mfcc_means_pairwise_separated():
    pcm, events = corpus.generate(seed=8, n_motifs=10, snr_db=30)
    blocks = audio.frame_signal(pcm, 256)
    fb = dsp.MelFilterbank(256, 16000)
    frames = np.stack([b.samples for b in blocks])
    mfccs = dsp.mfcc_stream(frames, fb).astype(np.float64) / 256.0
    means = {}
    for label in range(8):
        rows = []
        for e in events:
            if e["label"] != label:
                continue
            first = e["onset_sample"] // 256 + 1
            last = (e["offset_sample"] - 1) // 256 - 1
            rows.extend(range(first, last + 1))
        means[label] = mfccs[rows].mean(axis=0)
    for a in range(8):
        for b in range(a + 1, 8):
            assert np.linalg.norm(means[a] - means[b]) > 1.0


def test_block_segments_merge_subblock_gaps():
    events = [
        {"label": 0, "onset_sample": 0, "offset_sample": 500},
        {"label": 1, "onset_sample": 520, "offset_sample": 900},   # same block
        {"label": 2, "onset_sample": 2000, "offset_sample": 2600},
    ]
    segments = corpus.block_segments(events, 20, 256)
    assert segments == [(0, 3, [0, 1]), (7, 10, [2])]


def test_jsonl_round_trip():
    _, events = corpus.generate(seed=9, n_motifs=2, snr_db=20)
    text = corpus.events_to_jsonl(events)
    assert corpus.jsonl_to_events(text) == events
