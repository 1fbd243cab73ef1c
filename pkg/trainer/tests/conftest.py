import subprocess
import sys

import pytest


@pytest.fixture(scope="session")
def corpus_files(tmp_path_factory):
    """Small labeled corpus produced through the toolkit CLI (the trainer's
    upstream interface)."""
    tmp = tmp_path_factory.mktemp("corpus")
    wav = tmp / "train.wav"
    labels = tmp / "train.jsonl"
    subprocess.run(
        [sys.executable, "-m", "tinybird.cli", "gen-corpus",
         "--seed", "11", "--motifs", "12", "--snr", "20",
         "--gap-lo", "30", "--gap-hi", "100",
         "--wav", str(wav), "--labels", str(labels)],
        check=True, capture_output=True)
    return wav, labels
