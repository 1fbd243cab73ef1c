import math

import numpy as np
import pytest

from tinybird import dsp
from tinybird.audio import AudioBlock, frame_signal
from tinybird.codecs import CodecId
from tinybird.errors import ConfigError
from tinybird.protocol import StreamHeader, stream_decode, stream_encode


def naive_dft(x):
    """O(n^2) DFT oracle, written from the definition."""
    n = len(x)
    out = np.zeros(n, dtype=complex)
    for k in range(n):
        acc = 0j
        for i in range(n):
            acc += x[i] * np.exp(-2j * np.pi * k * i / n)
        out[k] = acc
    return out


def mfcc_oracle(samples, fb):
    """Double-precision reference of the same MFCC definition, built on
    np.fft and an explicit DCT sum — independent of the dsp internals."""
    x = np.asarray(samples, dtype=np.float64) / 32768.0
    x = x * (0.5 - 0.5 * np.cos(2 * np.pi * np.arange(len(x)) / len(x)))
    power = np.abs(np.fft.rfft(x)) ** 2
    energies = fb.weights @ power
    logs = np.log(np.maximum(energies, dsp.LOG_FLOOR))
    n = len(logs)
    out = np.zeros(dsp.N_MFCC)
    for k in range(dsp.N_MFCC):
        scale = math.sqrt(1.0 / n) if k == 0 else math.sqrt(2.0 / n)
        out[k] = scale * sum(logs[i] * math.cos(math.pi * k * (2 * i + 1) / (2 * n))
                             for i in range(n))
    return out


@pytest.mark.parametrize("n", [64, 128, 256, 512])
def test_fft_matches_naive_dft(n):
    rng = np.random.default_rng(n)
    x = rng.normal(size=n)
    mine = dsp.fft_radix2(x)
    ref = naive_dft(x)
    assert np.max(np.abs(mine - ref)) / np.max(np.abs(ref)) < 1e-6


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ConfigError):
        dsp.fft_radix2(np.zeros(100))


def test_fft_magnitude_dc_block():
    block = AudioBlock(0, np.full(256, 1000, dtype=np.int16), 16000)
    mags = dsp.fft_magnitude(block, window="rect")
    assert len(mags) == 129
    assert mags[0] == pytest.approx(1000 * 256)
    assert np.max(mags[1:]) < 1e-6


def test_fft_magnitude_sine_bin():
    t = np.arange(256) / 16000
    block = AudioBlock(0, (10000 * np.sin(2 * np.pi * 1000 * t))
                       .astype(np.int16), 16000)
    mags = dsp.fft_magnitude(block, window="rect")
    assert np.argmax(mags) == 16    # 1000 / 16000 * 256


def test_parseval_rect_window():
    rng = np.random.default_rng(4)
    x = rng.integers(-20000, 20000, size=256).astype(np.int16)
    block = AudioBlock(0, x, 16000)
    spectrum = dsp.fft_radix2(x.astype(np.float64))
    time_energy = float(np.sum(x.astype(np.float64) ** 2))
    freq_energy = float(np.sum(np.abs(spectrum) ** 2)) / 256
    assert abs(time_energy - freq_energy) / time_energy < 1e-3
    # and the one-sided magnitudes agree with the full spectrum
    mags = dsp.fft_magnitude(block, window="rect")
    assert np.allclose(mags, np.abs(spectrum[:129]))


def test_filterbank_invariants():
    fb = dsp.MelFilterbank(256, 16000)
    assert fb.weights.shape == (16, 129)
    assert np.all(fb.weights.sum(axis=1) > 0)
    assert np.all(np.diff(fb.centers_hz) > 0)
    bin_hz = np.arange(129) * 16000 / 256
    inside = (bin_hz > fb.f_min) & (bin_hz < fb.f_max)
    coverage = fb.weights.sum(axis=0)
    assert np.all(coverage[inside] > 0)


def test_filterbank_flat_spectrum_energies():
    fb = dsp.MelFilterbank(256, 16000)
    energies = fb.apply(np.ones(129))
    assert np.all(energies > 0)
    # triangle areas grow smoothly on the mel grid; neighbours stay close
    ratios = energies[1:] / energies[:-1]
    assert np.all(ratios > 0.5) and np.all(ratios < 2.0)


def test_mfcc_zero_block_constant_vector():
    fb = dsp.MelFilterbank(256, 16000)
    block = AudioBlock(0, np.zeros(256, dtype=np.int16), 16000)
    vec = dsp.mfcc(block, fb)
    floats = vec.as_float()
    # DCT of the constant log-floor vector: sqrt(16)*ln(eps) in c0, zeros after
    assert floats[0] == pytest.approx(4 * math.log(dsp.LOG_FLOOR),
                                      abs=2 * dsp.Q8_8_STEP)
    assert np.all(floats[1:] == 0)


def test_mfcc_tone_vs_noise_discriminable():
    rng = np.random.default_rng(8)
    fb = dsp.MelFilterbank(256, 16000)
    noise = AudioBlock(0, rng.integers(-6000, 6000, 256).astype(np.int16), 16000)
    t = np.arange(256) / 16000
    tone = AudioBlock(1, (6000 * np.sin(2 * np.pi * 2000 * t))
                      .astype(np.int16), 16000)
    d = np.linalg.norm(dsp.mfcc(noise, fb).as_float()
                       - dsp.mfcc(tone, fb).as_float())
    assert d > 1.0


def test_mfcc_matches_float_oracle():
    rng = np.random.default_rng(12)
    fb = dsp.MelFilterbank(256, 16000)
    for _ in range(200):
        samples = rng.integers(-32768, 32768, size=256).astype(np.int16)
        block = AudioBlock(0, samples, 16000)
        got = dsp.mfcc(block, fb).as_float()
        want = mfcc_oracle(samples, fb)
        assert np.max(np.abs(got - want)) <= 2 * dsp.Q8_8_STEP


def test_mfcc_scale_covariance():
    rng = np.random.default_rng(13)
    fb = dsp.MelFilterbank(256, 16000)
    x = rng.integers(-8000, 8000, size=256).astype(np.int16)
    base = dsp.mfcc(AudioBlock(0, x, 16000), fb).as_float()
    doubled = dsp.mfcc(AudioBlock(0, (2 * x.astype(np.int32))
                                  .astype(np.int16), 16000), fb).as_float()
    diff = doubled - base
    # log(4 * E) shifts every band equally: only c0 moves, by sqrt(16)*ln 4
    assert diff[0] == pytest.approx(4 * math.log(4), abs=4 * dsp.Q8_8_STEP)
    assert np.max(np.abs(diff[1:])) <= 2 * dsp.Q8_8_STEP


def test_mfcc_stream_matches_single_blocks():
    rng = np.random.default_rng(14)
    fb = dsp.MelFilterbank(256, 16000)
    pcm = rng.integers(-20000, 20000, size=10 * 256).astype(np.int16)
    blocks = frame_signal(pcm, 256)
    stream = dsp.mfcc_stream(np.stack([b.samples for b in blocks]), fb)
    for i, b in enumerate(blocks):
        assert np.array_equal(stream[i], dsp.mfcc(b, fb).q)


def test_spectrogram_silence_is_floor():
    matrix = dsp.spectrogram(np.zeros(4096, dtype=np.int16), 256)
    assert matrix.shape == (129, 16)
    assert np.all(matrix == dsp.DB_FLOOR)


def test_spectrogram_short_input_single_frame():
    matrix = dsp.spectrogram(np.ones(100, dtype=np.int16), 256)
    assert matrix.shape == (129, 1)


def test_spectrogram_chirp_ridge_monotone():
    rate = 16000
    n = rate  # 1 s
    t = np.arange(n) / rate
    # linear chirp 1 kHz -> 7 kHz
    phase = 2 * np.pi * (1000 * t + 0.5 * 6000 / 1.0 * t ** 2)
    pcm = (20000 * np.sin(phase)).astype(np.int16)
    matrix = dsp.spectrogram(pcm, 256, hop=256)
    ridge = np.argmax(matrix, axis=0)
    assert np.all(np.diff(ridge) >= 0)


def test_spectrogram_round_trip_differs_only_in_voiced_regions():
    rng = np.random.default_rng(15)
    t = np.arange(20 * 256) / 16000
    song = (9000 * np.sin(2 * np.pi * 2500 * t)).astype(np.int16)
    pcm = np.concatenate([np.zeros(10 * 256, np.int16), song,
                          np.zeros(10 * 256, np.int16)])
    blocks = frame_signal(pcm, 256)
    decisions = ["silent" if not b.samples.any() else "voiced" for b in blocks]
    packets = stream_encode(list(zip(blocks, decisions)), CodecId.ADPCM,
                            mtu=100000)
    recon = stream_decode(StreamHeader(16000, 256, CodecId.ADPCM), packets)
    orig_spec = dsp.spectrogram(pcm, 256)
    recon_spec = dsp.spectrogram(recon, 256)
    assert orig_spec.shape == recon_spec.shape
    # silent frames identical (both at the floor), voiced frames within
    # codec noise
    silent_frames = [i for i in range(orig_spec.shape[1])
                     if np.all(orig_spec[:, i] == dsp.DB_FLOOR)]
    assert silent_frames
    for i in silent_frames:
        assert np.array_equal(orig_spec[:, i], recon_spec[:, i])
    voiced = np.array([i for i in range(orig_spec.shape[1])
                       if i not in silent_frames])
    peak_rows = np.argmax(orig_spec[:, voiced], axis=0)
    # the vocalization ridge survives at the same offsets
    assert np.array_equal(peak_rows, np.argmax(recon_spec[:, voiced], axis=0))


def test_spectrogram_csv_and_png_export(tmp_path):
    matrix = dsp.spectrogram(np.zeros(1024, dtype=np.int16), 256)
    csv_path = tmp_path / "spec.csv"
    png_path = tmp_path / "spec.png"
    dsp.spectrogram_to_csv(matrix, csv_path)
    dsp.spectrogram_to_png(matrix, png_path)
    lines = csv_path.read_text().strip().splitlines()
    assert len(lines) == matrix.shape[0]
    assert len(lines[0].split(",")) == matrix.shape[1]
    assert png_path.stat().st_size > 0
