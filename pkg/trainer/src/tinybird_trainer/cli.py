"""Train both stages on a corpus and export weights + report + golden
feature vectors.

    tinybird-train --wav corpus.wav --labels corpus.jsonl --out model.tbm \
        --report report.json --golden golden.csv
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .dataset import build_dataset, merge_datasets, read_wav
from .features import MfccFrontEnd, frame
from .quantize import agreement, int8_detect_scores, quantize_models
from .tbm import classifier_flash_bytes, write_tbm
from .train import TrainingConfig, train_classifier, train_detector

CLASSIFIER_FLASH_BUDGET = int(2.7 * 1024)


def write_golden_vectors(wav_path, out_path, count: int = 100,
                         block_size: int = 256) -> int:
    """CSV of (block samples, Q8.8 MFCCs) pairs for the cross-implementation
    parity check: 256 sample columns then 16 coefficient columns."""
    pcm, rate = read_wav(wav_path)
    frames = frame(pcm, block_size)
    frontend = MfccFrontEnd(block_size, rate)
    # spread picks over the whole file, deterministically
    picks = np.linspace(0, len(frames) - 1, count).astype(int)
    mfccs = frontend.mfcc_q(frames[picks])
    with open(out_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"s{i}" for i in range(block_size)]
                        + [f"c{i}" for i in range(16)])
        for row_samples, row_mfcc in zip(frames[picks], mfccs):
            writer.writerow(list(map(int, row_samples))
                            + list(map(int, row_mfcc)))
    return len(picks)


def train_and_export(wav, labels, out, config: TrainingConfig,
                     report_path=None, golden_path=None) -> dict:
    """wav/labels may be single paths or equally long lists of corpora."""
    wavs = list(wav) if isinstance(wav, (list, tuple)) else [wav]
    label_files = list(labels) if isinstance(labels, (list, tuple)) else [labels]
    if len(wavs) != len(label_files):
        raise ValueError("need one labels file per wav")
    data = merge_datasets([build_dataset(w, l)
                           for w, l in zip(wavs, label_files)])
    detector, det_metrics = train_detector(data.block_mfcc, data.block_voiced,
                                           config)
    classifier, cls_metrics = train_classifier(data.syll_mfcc, data.syll_label,
                                               config)

    rng = np.random.default_rng(config.seed + 2)
    n_cal = min(config.calibration_samples, len(data.syll_mfcc))
    calibration = data.syll_mfcc[rng.choice(len(data.syll_mfcc), size=n_cal,
                                            replace=False)]
    export = quantize_models(detector, classifier, calibration)
    size = write_tbm(out, export)

    flash = classifier_flash_bytes(export)
    if flash > CLASSIFIER_FLASH_BUDGET:
        raise ValueError(f"classifier parameters {flash} B exceed "
                         f"{CLASSIFIER_FLASH_BUDGET} B budget")
    int8_scores = int8_detect_scores(export, data.block_mfcc)
    report = {
        "detector": det_metrics,
        "classifier": cls_metrics,
        "file_bytes": size,
        "classifier_flash_bytes": flash,
        "int8_float_argmax_agreement": agreement(export, classifier,
                                                 data.syll_mfcc),
        "int8_detector_block_accuracy": float(np.mean(
            (int8_scores >= detector.threshold) == data.block_voiced)),
        "config": {"epochs": config.epochs, "seed": config.seed,
                   "learning_rate": config.learning_rate,
                   "validation_split": config.validation_split},
    }
    if report_path:
        with open(report_path, "w") as fh:
            json.dump(report, fh, indent=2)
            fh.write("\n")
    if golden_path:
        report["golden_vectors"] = write_golden_vectors(wavs[0], golden_path)
    return report


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="tinybird-train")
    parser.add_argument("--wav", required=True, action="append",
                        help="corpus WAV (repeat for multiple corpora)")
    parser.add_argument("--labels", required=True, action="append",
                        help="ground-truth JSONL, one per --wav")
    parser.add_argument("--out", required=True, help="output .tbm path")
    parser.add_argument("--report", help="training report JSON path")
    parser.add_argument("--golden", help="golden MFCC vector CSV path")
    parser.add_argument("--epochs", type=int, default=60)
    parser.add_argument("--lr", type=float, default=2e-2)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--val-split", type=float, default=0.2)
    parser.add_argument("--threshold", type=float, default=0.5,
                        help="detector decision threshold to export")
    args = parser.parse_args(argv)
    config = TrainingConfig(epochs=args.epochs, learning_rate=args.lr,
                            seed=args.seed, validation_split=args.val_split,
                            detector_threshold=args.threshold)
    try:
        report = train_and_export(args.wav, args.labels, args.out, config,
                                  args.report, args.golden)
    except ArithmeticError as exc:
        print(f"error: trainer: {exc}", file=sys.stderr)
        return 2
    print(json.dumps({"detector_val_accuracy": report["detector"]["val_accuracy"],
                      "classifier_val_accuracy": report["classifier"]["val_accuracy"],
                      "agreement": report["int8_float_argmax_agreement"],
                      "out": args.out}))
    return 0


if __name__ == "__main__":
    sys.exit(main())
