"""Cross-implementation feature parity: the trainer's MFCC front end must
agree with the streaming toolkit's within 2 Q8.8 steps on golden vectors."""

import csv

import numpy as np

from tinybird_trainer.cli import write_golden_vectors
from tinybird_trainer.features import MfccFrontEnd, frame

import tinybird.dsp as primary_dsp


def test_frame_pads_trailing_block():
    frames = frame(np.arange(300, dtype=np.int16), 256)
    assert frames.shape == (2, 256)
    assert np.all(frames[1, 44:] == 0)


def test_golden_vectors_match_primary(corpus_files, tmp_path):
    wav, _ = corpus_files
    golden = tmp_path / "golden.csv"
    count = write_golden_vectors(wav, golden, count=100)
    assert count == 100

    fb = primary_dsp.MelFilterbank(256, 16000)
    worst = 0
    with open(golden) as fh:
        reader = csv.reader(fh)
        header = next(reader)
        assert header[:1] == ["s0"] and header[-1] == "c15"
        for row in reader:
            samples = np.array(row[:256], dtype=np.int16)
            trainer_q = np.array(row[256:], dtype=np.int16)
            primary_q = primary_dsp.mfcc_stream(samples[None, :], fb)[0]
            worst = max(worst, int(np.max(np.abs(
                trainer_q.astype(int) - primary_q.astype(int)))))
    assert worst <= 2


def test_direct_parity_on_random_blocks():
    rng = np.random.default_rng(0)
    frontend = MfccFrontEnd(256, 16000)
    fb = primary_dsp.MelFilterbank(256, 16000)
    blocks = rng.integers(-32768, 32768, size=(200, 256)).astype(np.int16)
    mine = frontend.mfcc_q(blocks)
    theirs = primary_dsp.mfcc_stream(blocks, fb)
    assert int(np.max(np.abs(mine.astype(int) - theirs.astype(int)))) <= 2


def test_filterbank_matches_primary_bitwise():
    from tinybird_trainer.features import mel_weights
    fb = primary_dsp.MelFilterbank(256, 16000)
    assert np.allclose(mel_weights(256, 16000), fb.weights, atol=1e-12)
