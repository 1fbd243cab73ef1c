import json
import math

import numpy as np
import pytest

from tinybird import audio, corpus
from tinybird.cli import main


def run_cli(capsys, *argv):
    code = main(list(argv))
    captured = capsys.readouterr()
    return code, captured.out, captured.err


@pytest.fixture(scope="module")
def song_wav(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    pcm, events = corpus.generate(seed=42, n_motifs=4, snr_db=30,
                                  gap_range_ms=(30, 100))
    path = tmp / "song.wav"
    audio.write_wav(path, pcm, 16000)
    labels = tmp / "song.jsonl"
    labels.write_text(corpus.events_to_jsonl(events))
    return path, labels, pcm, events


def test_encode_silent_wav(tmp_path, capsys):
    wav = tmp_path / "silent.wav"
    audio.write_wav(wav, np.zeros(16000, dtype=np.int16), 16000)
    out = tmp_path / "silent.tbs"
    code, stdout, _ = run_cli(capsys, "encode", str(wav), "--out", str(out))
    assert code == 0
    stats = json.loads(stdout)
    assert stats["packets"] == 1
    assert stats["bitrate_effective"] == pytest.approx(0.0)
    assert stats["duty_cycle"] == 0.0


def test_encode_decode_round_trip(song_wav, tmp_path, capsys):
    wav, _, pcm, _ = song_wav
    tbs = tmp_path / "song.tbs"
    code, stdout, _ = run_cli(capsys, "encode", str(wav), "--out", str(tbs),
                              "--codec", "raw", "--mtu", "4096")
    assert code == 0
    out_wav = tmp_path / "round.wav"
    code, stdout, _ = run_cli(capsys, "decode", str(tbs), str(out_wav))
    assert code == 0
    report = json.loads(stdout)
    blocks = math.ceil(len(pcm) / 256)
    assert report["samples"] == blocks * 256
    back, rate = audio.read_wav(out_wav)
    assert rate == 16000
    # replicate the gate: voiced blocks bit-exact, silent blocks zeroed
    state = audio.GateState(mode="fixed")
    for block in audio.frame_signal(pcm, 256):
        decision, state = audio.gate_block(block, state, 500.0)
        piece = back[block.index * 256:(block.index + 1) * 256]
        if decision == "voiced":
            assert np.array_equal(piece, block.samples)
        else:
            assert not piece.any()


def test_encode_duty_cycle_matches_ground_truth(song_wav, tmp_path, capsys):
    wav, labels, pcm, events = song_wav
    tbs = tmp_path / "duty.tbs"
    code, stdout, _ = run_cli(capsys, "encode", str(wav), "--out", str(tbs),
                              "--threshold", "1200")
    assert code == 0
    stats = json.loads(stdout)
    blocks = math.ceil(len(pcm) / 256)
    truth = corpus.voiced_block_truth(events, blocks, 256).mean()
    assert stats["duty_cycle"] == pytest.approx(truth, abs=0.02)


def test_encode_adpcm_size_is_quarter_of_raw(tmp_path, capsys):
    t = np.arange(8 * 16000) / 16000
    pcm = (9000 * np.sin(2 * np.pi * 800 * t)).astype(np.int16)
    wav = tmp_path / "voiced.wav"
    audio.write_wav(wav, pcm, 16000)
    tbs = tmp_path / "voiced.tbs"
    code, stdout, _ = run_cli(capsys, "encode", str(wav), "--out", str(tbs),
                              "--codec", "adpcm", "--threshold", "10")
    assert code == 0
    stats = json.loads(stdout)
    assert stats["duty_cycle"] == 1.0
    raw_bytes = 2 * len(pcm)
    # payload is raw/4; file adds headers
    assert stats["bytes"] > raw_bytes / 4
    assert stats["bytes"] < raw_bytes / 4 * 1.2


def test_reencode_is_byte_identical(song_wav, tmp_path, capsys):
    wav, _, _, _ = song_wav
    tbs1 = tmp_path / "a.tbs"
    run_cli(capsys, "encode", str(wav), "--out", str(tbs1), "--codec", "raw",
            "--mtu", "4096")
    mid = tmp_path / "mid.wav"
    run_cli(capsys, "decode", str(tbs1), str(mid))
    tbs2 = tmp_path / "b.tbs"
    run_cli(capsys, "encode", str(mid), "--out", str(tbs2), "--codec", "raw",
            "--mtu", "4096")
    assert tbs1.read_bytes() == tbs2.read_bytes()


def test_bench_codecs(song_wav, tmp_path, capsys):
    wav, _, _, _ = song_wav
    csv_path = tmp_path / "bench.csv"
    png_path = tmp_path / "bench.png"
    code, stdout, _ = run_cli(capsys, "bench-codecs", str(wav),
                              "--csv", str(csv_path), "--png", str(png_path))
    assert code == 0
    lines = csv_path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [dict(zip(header, line.split(","))) for line in lines[1:]]
    ratios = [float(r["compression_ratio"]) for r in rows]
    assert ratios == [1.0, 4.0, 16.0, 16.0]
    by_codec = {r["codec"]: r for r in rows}
    assert float(by_codec["adpcm"]["snr_db"]) > float(by_codec["dm"]["snr_db"])
    # current column reads back from the shipped profile table
    assert float(by_codec["raw"]["ble_ma"]) == 0.82
    assert float(by_codec["adpcm"]["ble_ma"]) == 0.19
    assert png_path.stat().st_size > 0
    assert "codec" in stdout


def test_run_on_silence_empty_jsonl(tmp_path, capsys, model_path):
    wav = tmp_path / "quiet.wav"
    audio.write_wav(wav, np.zeros(32000, dtype=np.int16), 16000)
    events_path = tmp_path / "events.jsonl"
    code, stdout, _ = run_cli(capsys, "run", str(wav), "--model",
                              str(model_path), "--events", str(events_path))
    assert code == 0
    assert events_path.read_text() == ""
    timing = json.loads(stdout)
    assert timing["classifier_invocations"] == 0
    assert timing["detector_invocations"] == timing["block_count"]


def test_run_and_eval_ser(song_wav, tmp_path, capsys, model_path):
    wav, labels, _, _ = song_wav
    events_path = tmp_path / "pred.jsonl"
    timing_path = tmp_path / "timing.json"
    code, _, _ = run_cli(capsys, "run", str(wav), "--model", str(model_path),
                         "--events", str(events_path),
                         "--timing", str(timing_path))
    assert code == 0
    code, stdout, _ = run_cli(capsys, "eval-ser", str(events_path), str(labels))
    assert code == 0
    result = json.loads(stdout)
    assert result["ser"] <= 0.10
    code, stdout, _ = run_cli(capsys, "eval-ser", str(labels), str(labels))
    assert json.loads(stdout)["ser"] == 0.0


def test_spectrogram_outputs(song_wav, tmp_path, capsys):
    wav, _, _, _ = song_wav
    csv_path = tmp_path / "spec.csv"
    png_path = tmp_path / "spec.png"
    code, stdout, _ = run_cli(capsys, "spectrogram", str(wav),
                              "--csv", str(csv_path), "--png", str(png_path))
    assert code == 0
    info = json.loads(stdout)
    assert info["bins"] == 129
    assert csv_path.exists() and png_path.stat().st_size > 0


def test_estimate_energy_lifetime_ratio(song_wav, tmp_path, capsys):
    wav, _, _, _ = song_wav
    lifetimes = {}
    for codec in ("raw", "adpcm"):
        tbs = tmp_path / f"{codec}.tbs"
        run_cli(capsys, "encode", str(wav), "--out", str(tbs),
                "--codec", codec, "--threshold", "10", "--mtu", "4096")
        code, stdout, _ = run_cli(capsys, "estimate-energy", str(tbs),
                                  "--png", str(tmp_path / f"{codec}.png"))
        assert code == 0
        report = json.loads(stdout)
        assert report["mode"] == codec
        assert report["duty_cycle"] == pytest.approx(1.0, abs=0.05)
        lifetimes[codec] = report["lifetime_hours"]
    assert lifetimes["adpcm"] / lifetimes["raw"] == pytest.approx(1.70, abs=0.02)


def test_gen_corpus_command(tmp_path, capsys):
    wav = tmp_path / "c.wav"
    labels = tmp_path / "c.jsonl"
    code, stdout, _ = run_cli(capsys, "gen-corpus", "--seed", "7",
                              "--motifs", "2", "--wav", str(wav),
                              "--labels", str(labels))
    assert code == 0
    info = json.loads(stdout)
    assert info["events"] == 16
    assert wav.exists() and labels.exists()


def test_validation_failure_exit_code(tmp_path, capsys):
    wav = tmp_path / "x.wav"
    audio.write_wav(wav, np.zeros(1000, dtype=np.int16), 16000)
    code, _, stderr = run_cli(capsys, "encode", str(wav),
                              "--out", str(tmp_path / "x.tbs"),
                              "--codec", "raw", "--mtu", "50")
    assert code == 2
    assert stderr.startswith("error: config:")


def test_wrong_sample_rate_rejected_without_resample(tmp_path, capsys):
    wav = tmp_path / "hi.wav"
    audio.write_wav(wav, np.zeros(44100, dtype=np.int16), 44100)
    code, _, stderr = run_cli(capsys, "encode", str(wav),
                              "--out", str(tmp_path / "hi.tbs"))
    assert code == 2
    assert "resample" in stderr
    code, stdout, _ = run_cli(capsys, "encode", str(wav),
                              "--out", str(tmp_path / "hi.tbs"), "--resample")
    assert code == 0


def test_config_file_precedence(tmp_path, capsys):
    cfg = tmp_path / "cfg.txt"
    cfg.write_text("codec = dm\nthreshold = 10\n")
    wav = tmp_path / "t.wav"
    t = np.arange(16000) / 16000
    audio.write_wav(wav, (8000 * np.sin(2 * np.pi * 500 * t)).astype(np.int16),
                    16000)
    out = tmp_path / "t.tbs"
    code, stdout, _ = run_cli(capsys, "encode", str(wav), "--out", str(out),
                              "--config", str(cfg))
    assert code == 0
    payload_bitrate = json.loads(stdout)["bitrate_effective"]
    # dm: 1 bit/sample at 16 kHz (fully voiced, small padding overhead)
    assert payload_bitrate == pytest.approx(16000.0, rel=0.02)
    # flag beats config file: adpcm is 4 bits/sample
    code, stdout, _ = run_cli(capsys, "encode", str(wav), "--out", str(out),
                              "--config", str(cfg), "--codec", "adpcm")
    assert json.loads(stdout)["bitrate_effective"] \
        == pytest.approx(64000.0, rel=0.02)


def test_multi_file_jobs(tmp_path, capsys):
    paths = []
    for i in range(3):
        wav = tmp_path / f"m{i}.wav"
        audio.write_wav(wav, np.zeros(4096, dtype=np.int16), 16000)
        paths.append(str(wav))
    out_dir = tmp_path / "streams"
    code, stdout, _ = run_cli(capsys, "encode", *paths,
                              "--out-dir", str(out_dir), "--jobs", "2")
    assert code == 0
    assert len(stdout.strip().splitlines()) == 3
    assert sorted(p.name for p in out_dir.iterdir()) \
        == ["m0.tbs", "m1.tbs", "m2.tbs"]
