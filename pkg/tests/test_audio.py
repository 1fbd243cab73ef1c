import math

import numpy as np
import pytest

from tinybird import audio
from tinybird.audio import SILENT, VOICED, AudioBlock, GateState
from tinybird.errors import ConfigError


def rms_oracle(samples):
    # scalar reference, independent of AudioBlock.rms
    total = 0.0
    for s in samples:
        total += float(s) * float(s)
    return math.sqrt(total / len(samples))


def test_frame_exact_division():
    blocks = audio.frame_signal(np.arange(512, dtype=np.int16), 256)
    assert [b.index for b in blocks] == [0, 1]
    assert not any(b.padded for b in blocks)


def test_frame_partial_padded():
    blocks = audio.frame_signal(np.ones(300, dtype=np.int16), 256)
    assert len(blocks) == 2
    assert blocks[1].padded
    assert np.all(blocks[1].samples[44:] == 0)
    assert np.count_nonzero(blocks[1].samples == 0) == 212


def test_frame_one_second_cadence():
    blocks = audio.frame_signal(np.ones(16000, dtype=np.int16), 256, 16000)
    full = [b for b in blocks if not b.padded]
    assert len(full) == 62
    assert len(blocks) == 63
    # 256/16000 = 16 ms per block = 62.5 blocks/s
    assert blocks[0].duration_s == pytest.approx(0.016)


def test_frame_rejects_non_power_of_two():
    with pytest.raises(ConfigError):
        audio.frame_signal(np.zeros(100, dtype=np.int16), 100)
    with pytest.raises(ConfigError):
        audio.frame_signal(np.zeros(0, dtype=np.int16), 256)


def test_unframe_is_lossless_up_to_padding():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(1, 2000))
        pcm = rng.integers(-32768, 32768, size=n).astype(np.int16)
        blocks = audio.frame_signal(pcm, 64)
        assert np.array_equal(audio.unframe(blocks, n), pcm)


def test_gate_zero_block_is_silent():
    block = AudioBlock(0, np.zeros(256, dtype=np.int16), 16000)
    decision, _ = audio.gate_block(block, GateState(), fixed_threshold=1.0)
    assert decision == SILENT


def test_gate_full_scale_square_is_voiced():
    square = np.tile(np.array([32767, -32767], dtype=np.int16), 128)
    block = AudioBlock(0, square, 16000)
    decision, _ = audio.gate_block(block, GateState(), fixed_threshold=1000.0)
    assert decision == VOICED


def test_gate_adaptive_noise_then_tone():
    rng = np.random.default_rng(3)
    noise = rng.normal(0, 100, size=20 * 256)
    tone = 2000.0 * math.sqrt(2) * np.sin(2 * np.pi * 1000 *
                                          np.arange(10 * 256) / 16000)
    pcm = np.clip(np.round(np.concatenate([noise, tone])),
                  -32768, 32767).astype(np.int16)
    blocks = audio.frame_signal(pcm, 256)
    state = GateState(mode="adaptive", threshold_factor=4.0)
    decisions = []
    for b in blocks:
        d, state = audio.gate_block(b, state)
        decisions.append(d)
        # cross-check the gate statistic against the scalar oracle
        assert b.rms() == pytest.approx(rms_oracle(b.samples), rel=1e-12)
    assert all(d == SILENT for d in decisions[:20])
    assert all(d == VOICED for d in decisions[20:])


def test_gate_is_pure_replay():
    rng = np.random.default_rng(11)
    pcm = rng.integers(-3000, 3000, size=30 * 256).astype(np.int16)
    blocks = audio.frame_signal(pcm, 256)
    runs = []
    for _ in range(2):
        state = GateState(mode="adaptive")
        runs.append([audio.gate_block(b, state)[0] for b in blocks])
    assert runs[0] == runs[1]


def test_noise_floor_never_rises_on_voiced():
    rng = np.random.default_rng(5)
    pcm = rng.integers(-8000, 8000, size=50 * 256).astype(np.int16)
    state = GateState(mode="adaptive")
    for b in audio.frame_signal(pcm, 256):
        before = state.noise_floor
        decision, state = audio.gate_block(b, state)
        if decision == VOICED and before is not None:
            assert state.noise_floor == before


def test_wav_round_trip(tmp_path):
    pcm = np.array([0, 1, -1, 32767, -32768, 100], dtype=np.int16)
    path = tmp_path / "x.wav"
    audio.write_wav(path, pcm, 16000)
    back, rate = audio.read_wav(path)
    assert rate == 16000
    assert np.array_equal(back, pcm)


def test_resample_preserves_tone():
    t = np.arange(44100) / 44100
    pcm = (8000 * np.sin(2 * np.pi * 1000 * t)).astype(np.int16)
    out = audio.resample(pcm, 44100, 16000)
    assert len(out) == round(44100 * 16000 / 44100)
    spectrum = np.abs(np.fft.rfft(out[2000:2000 + 4096].astype(float)))
    peak_hz = np.argmax(spectrum) * 16000 / 4096
    assert abs(peak_hz - 1000) < 20
