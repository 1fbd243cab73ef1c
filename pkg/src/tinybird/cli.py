"""Command-line surface: encode/decode streams, benchmark codecs, run the
syllable pipeline, evaluate, plot spectrograms, estimate battery lifetime,
and generate synthetic corpora.

Machine-readable stats go to stdout as JSON (CSV for tables, JSONL for
events); diagnostics go to stderr as `error: <module>: <detail>`.  Exit
code 0 on success, 2 on validation failure.  Config precedence: flags >
config file > defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import audio, corpus, dsp, energy, pipeline, protocol, tinyml
from .codecs import CodecId, codec_metrics, compressed_size, decode, encode, initial_state
from .errors import ConfigError, TinybirdError

CODEC_NAMES = {"raw": CodecId.RAW, "adpcm": CodecId.ADPCM,
               "dm": CodecId.DM, "cfdm": CodecId.CFDM}


@dataclass
class RunConfig:
    sample_rate: int = 16000
    block_size: int = 256
    codec: str = "adpcm"
    mtu: int = protocol.DEFAULT_MTU
    gate: str = "fixed"
    threshold: float = 500.0
    threshold_factor: float = audio.DEFAULT_THRESHOLD_FACTOR
    model: str | None = None
    profile: str | None = None
    battery: str | None = None

    def validate(self):
        if self.codec not in CODEC_NAMES:
            raise ConfigError(f"unknown codec {self.codec!r}")
        if not audio.is_power_of_two(self.block_size):
            raise ConfigError(f"block_size {self.block_size} not a power of two")
        if self.gate not in ("fixed", "adaptive"):
            raise ConfigError(f"unknown gate mode {self.gate!r}")
        header = protocol.packet_header_size(CODEC_NAMES[self.codec])
        per_block = compressed_size(CODEC_NAMES[self.codec], self.block_size)
        if self.mtu < header + per_block:
            raise ConfigError(
                f"mtu {self.mtu} below one {self.codec} block "
                f"({header} B header + {per_block} B payload)")
        return self

    @property
    def codec_id(self) -> CodecId:
        return CODEC_NAMES[self.codec]


def build_config(args) -> RunConfig:
    config = RunConfig()
    if getattr(args, "config", None):
        file_values = energy.parse_kv(Path(args.config).read_text())
        for f in fields(RunConfig):
            if f.name in file_values:
                raw = file_values[f.name]
                setattr(config, f.name, type(getattr(config, f.name))(raw)
                        if getattr(config, f.name) is not None else raw)
    for f in fields(RunConfig):
        value = getattr(args, f.name, None)
        if value is not None:
            setattr(config, f.name, value)
    return config.validate()


def _load_pcm(path, config: RunConfig, resample: bool) -> np.ndarray:
    pcm, rate = audio.read_wav(path)
    if rate != config.sample_rate:
        if not resample:
            raise ConfigError(f"{path}: sample rate {rate} != "
                              f"{config.sample_rate} (use --resample)")
        pcm = audio.resample(pcm, rate, config.sample_rate)
    return pcm


def _gate_blocks(pcm, config: RunConfig):
    blocks = audio.frame_signal(pcm, config.block_size, config.sample_rate)
    state = audio.GateState(mode=config.gate,
                            threshold_factor=config.threshold_factor)
    return audio.gate_stream(blocks, state, config.threshold)


# ---------------------------------------------------------------- commands

def _encode_one(wav_in, tbs_out, config: RunConfig, resample: bool,
                crc: bool) -> dict:
    pcm = _load_pcm(wav_in, config, resample)
    gated = _gate_blocks(pcm, config)
    packets = protocol.stream_encode(gated, config.codec_id, config.mtu)
    header = protocol.StreamHeader(config.sample_rate, config.block_size,
                                   config.codec_id)
    protocol.write_stream(tbs_out, header, packets, crc=crc)
    payload_bytes = sum(len(p.payload) for p in packets)
    duration_s = len(pcm) / config.sample_rate
    return {
        "input": str(wav_in),
        "output": str(tbs_out),
        "packets": len(packets),
        "bytes": Path(tbs_out).stat().st_size,
        "duty_cycle": protocol.duty_cycle(header, packets) if packets else 0.0,
        "bitrate_effective": 8.0 * payload_bytes / duration_s,
    }


def cmd_encode(args) -> int:
    config = build_config(args)
    inputs = [Path(p) for p in args.wav]
    if len(inputs) == 1 and args.out:
        jobs = [(inputs[0], Path(args.out))]
    else:
        if not args.out_dir:
            raise ConfigError("multiple inputs need --out-dir")
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        jobs = [(p, out_dir / (p.stem + ".tbs")) for p in inputs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            stats = list(pool.map(_encode_worker,
                                  [(str(i), str(o), config, args.resample,
                                    args.crc) for i, o in jobs]))
    else:
        stats = [_encode_one(i, o, config, args.resample, args.crc)
                 for i, o in jobs]
    for s in stats:
        print(json.dumps(s))
    return 0


def _encode_worker(job) -> dict:
    wav_in, tbs_out, config, resample, crc = job
    return _encode_one(wav_in, tbs_out, config, resample, crc)


def cmd_decode(args) -> int:
    header, packets = protocol.read_stream(args.tbs)
    pcm = protocol.stream_decode(header, packets)
    audio.write_wav(args.wav, pcm, header.sample_rate)
    total_blocks = sum(p.silence_blocks
                       + len(p.payload) // compressed_size(p.codec, header.block_size)
                       for p in packets)
    report = {
        "input": str(args.tbs),
        "output": str(args.wav),
        "packets": len(packets),
        "samples": int(len(pcm)),
        "blocks": total_blocks,
        "duration_s": len(pcm) / header.sample_rate,
        "codec": CodecId(header.codec).name.lower(),
    }
    if len(pcm) != total_blocks * header.block_size:
        raise ConfigError("duration conservation violated "
                          f"({len(pcm)} samples vs {total_blocks} blocks)")
    print(json.dumps(report))
    return 0


def cmd_bench_codecs(args) -> int:
    config = build_config(args)
    pcm = _load_pcm(args.wav, config, args.resample)
    usable = len(pcm) - len(pcm) % 16   # meet every codec's granularity
    pcm = pcm[:usable]
    profiles = energy.load_profiles(config.profile)
    rows = []
    for name, codec in CODEC_NAMES.items():
        payload, _ = encode(codec, initial_state(codec), pcm)
        decoded, _ = decode(codec, initial_state(codec), payload)
        metrics = codec_metrics(pcm, decoded, codec, config.sample_rate)
        rows.append({
            "codec": name,
            "bitrate_kbps": metrics["bitrate_bps"] / 1000.0,
            "compression_ratio": metrics["compression_ratio"],
            "snr_db": round(metrics["snr_db"], 2),
            "bytes": len(payload),
            "ble_ma": profiles[name].ble_ma,
            "codec_overhead_ma": profiles[name].codec_overhead_ma,
        })
    headers = list(rows[0].keys())
    if args.csv:
        with open(args.csv, "w") as fh:
            fh.write(",".join(headers) + "\n")
            for row in rows:
                fh.write(",".join(str(row[h]) for h in headers) + "\n")
    widths = [max(len(h), *(len(str(r[h])) for r in rows)) for h in headers]
    print("  ".join(h.ljust(w) for h, w in zip(headers, widths)))
    for row in rows:
        print("  ".join(str(row[h]).ljust(w) for h, w in zip(headers, widths)))
    if args.png:
        _bench_png(rows, args.png)
    return 0


def _bench_png(rows, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [r["codec"] for r in rows]
    snrs = [0.0 if not np.isfinite(r["snr_db"]) else r["snr_db"] for r in rows]
    currents = [r["ble_ma"] + r["codec_overhead_ma"] for r in rows]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8, 3))
    ax1.bar(names, snrs, color="tab:blue")
    ax1.set_ylabel("SNR [dB]")
    ax2.bar(names, currents, color="tab:orange")
    ax2.set_ylabel("BLE + codec current [mA]")
    for ax in (ax1, ax2):
        ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_run(args) -> int:
    config = build_config(args)
    if not config.model:
        raise ConfigError("run needs --model")
    bundle = tinyml.load_model(config.model)
    pcm = _load_pcm(args.wav, config, args.resample)
    events, report = pipeline.run_pipeline(
        pcm, bundle, pipeline.PipelineConfig(config.sample_rate,
                                             config.block_size))
    jsonl = pipeline.events_to_jsonl(events, config.block_size,
                                     config.sample_rate)
    if args.events:
        Path(args.events).write_text(jsonl)
    else:
        sys.stdout.write(jsonl)
    timing = {
        "block_count": report.block_count,
        "detector_invocations": report.detector_invocations,
        "classifier_invocations": report.classifier_invocations,
        "trailing_gap_blocks": report.trailing_gap_blocks,
        "detect_ms_per_call": report.detect_ms_per_call,
        "classify_ms_per_call": report.classify_ms_per_call,
        "modeled_inference_ms": report.modeled_inference_ms,
        "modeled_event_latency_ms": report.modeled_event_latency_ms,
    }
    if args.timing:
        Path(args.timing).write_text(json.dumps(timing, indent=2) + "\n")
    else:
        print(json.dumps(timing))
    return 0


def _read_labels(path) -> list:
    text = Path(path).read_text()
    if str(path).endswith(".jsonl"):
        return [json.loads(line)["label"] for line in text.splitlines()
                if line.strip()]
    return text.split()


def cmd_eval_ser(args) -> int:
    predicted = _read_labels(args.pred)
    reference = _read_labels(args.ref)
    ser = pipeline.syllable_error_rate(predicted, reference)
    print(json.dumps({"ser": ser, "predicted": len(predicted),
                      "reference": len(reference)}))
    return 0


def cmd_spectrogram(args) -> int:
    config = build_config(args)
    pcm = _load_pcm(args.wav, config, args.resample)
    hop = args.hop or config.block_size
    matrix = dsp.spectrogram(pcm, config.block_size, hop, config.sample_rate)
    if args.csv:
        dsp.spectrogram_to_csv(matrix, args.csv)
    if args.png:
        dsp.spectrogram_to_png(matrix, args.png, config.sample_rate, hop,
                               title=Path(args.wav).name)
    if not args.csv and not args.png:
        raise ConfigError("spectrogram needs --csv and/or --png")
    print(json.dumps({"bins": matrix.shape[0], "frames": matrix.shape[1],
                      "csv": args.csv, "png": args.png}))
    return 0


def cmd_estimate_energy(args) -> int:
    config = build_config(args)
    header, packets = protocol.read_stream(args.tbs)
    duty = protocol.duty_cycle(header, packets)
    profiles = energy.load_profiles(config.profile)
    battery = energy.load_battery(config.battery)
    mode = args.mode or CodecId(header.codec).name.lower()
    if mode not in profiles:
        raise ConfigError(f"no profile for mode {mode!r}")
    profile = profiles[mode]
    avg = energy.average_current(profile, duty, battery.rail_voltage)
    report = {
        "mode": mode,
        "duty_cycle": duty,
        "avg_current_ma": avg,
        "battery_current_ma": energy.battery_current_ma(battery, avg),
        "lifetime_hours": energy.lifetime_hours(battery, avg),
        "classifier_mode_power_mw":
            energy.classifier_mode_power(profiles["classifier"]),
        "streaming_system_power_mw":
            energy.streaming_system_power(profile, duty, battery.rail_voltage),
    }
    print(json.dumps(report))
    if args.png:
        _energy_png(profiles, battery, duty, args.png)
    return 0


def _energy_png(profiles, battery, duty, path) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    names = [n for n in profiles if n != "classifier"]
    hours = [energy.lifetime_hours(
        battery, energy.average_current(profiles[n], duty,
                                        battery.rail_voltage))
        for n in names]
    fig, ax = plt.subplots(figsize=(6, 3))
    ax.bar(names, hours, color="tab:green")
    ax.set_ylabel("lifetime [h]")
    ax.set_title(f"duty cycle {duty:.2f}")
    ax.tick_params(axis="x", rotation=30)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def cmd_gen_corpus(args) -> int:
    pcm, events = corpus.generate(args.seed, args.motifs, args.snr,
                                  sample_rate=args.sample_rate,
                                  gap_range_ms=(args.gap_lo, args.gap_hi))
    audio.write_wav(args.wav, pcm, args.sample_rate)
    Path(args.labels).write_text(corpus.events_to_jsonl(events))
    print(json.dumps({"wav": args.wav, "labels": args.labels,
                      "samples": int(len(pcm)), "events": len(events),
                      "duration_s": len(pcm) / args.sample_rate}))
    return 0


# ------------------------------------------------------------------- parser

def _add_config_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--sample-rate", dest="sample_rate", type=int)
    p.add_argument("--block-size", dest="block_size", type=int)
    p.add_argument("--codec", choices=sorted(CODEC_NAMES))
    p.add_argument("--mtu", type=int)
    p.add_argument("--gate", choices=["fixed", "adaptive"])
    p.add_argument("--threshold", type=float)
    p.add_argument("--threshold-factor", dest="threshold_factor", type=float)
    p.add_argument("--model")
    p.add_argument("--profile", help=f"profile file (default ${energy.PROFILE_ENV})")
    p.add_argument("--battery")
    p.add_argument("--resample", action="store_true",
                   help="resample input instead of rejecting other rates")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="tinybird",
        description="silence-aware audio streaming, syllable classification "
                    "and lifetime estimation toolkit")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="WAV -> .tbs smart-compressed stream")
    p.add_argument("wav", nargs="+")
    p.add_argument("--out", help="output .tbs (single input)")
    p.add_argument("--out-dir", help="output directory (multiple inputs)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--crc", action="store_true", help="append CRC16 per packet")
    _add_config_flags(p)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help=".tbs -> reconstructed WAV")
    p.add_argument("tbs")
    p.add_argument("wav")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("bench-codecs", help="compare codecs on one file")
    p.add_argument("wav")
    p.add_argument("--csv")
    p.add_argument("--png")
    _add_config_flags(p)
    p.set_defaults(func=cmd_bench_codecs)

    p = sub.add_parser("run", help="detect and classify syllables")
    p.add_argument("wav")
    p.add_argument("--events", help="write events JSONL here (default stdout)")
    p.add_argument("--timing", help="write timing report JSON here")
    _add_config_flags(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("eval-ser", help="syllable error rate of two label files")
    p.add_argument("pred")
    p.add_argument("ref")
    p.set_defaults(func=cmd_eval_ser)

    p = sub.add_parser("spectrogram", help="CSV/PNG spectrogram of a WAV")
    p.add_argument("wav")
    p.add_argument("--csv")
    p.add_argument("--png")
    p.add_argument("--hop", type=int)
    _add_config_flags(p)
    p.set_defaults(func=cmd_spectrogram)

    p = sub.add_parser("estimate-energy", help="lifetime report for a stream")
    p.add_argument("tbs")
    p.add_argument("--mode", help="profile name (default: the stream's codec)")
    p.add_argument("--png")
    _add_config_flags(p)
    p.set_defaults(func=cmd_estimate_energy)

    p = sub.add_parser("gen-corpus", help="synthesize a labeled corpus")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--motifs", type=int, default=20)
    p.add_argument("--snr", type=float, default=20.0)
    p.add_argument("--sample-rate", dest="sample_rate", type=int, default=16000)
    p.add_argument("--gap-lo", type=float, default=corpus.GAP_LIMITS_MS[0])
    p.add_argument("--gap-hi", type=float, default=corpus.GAP_LIMITS_MS[1])
    p.add_argument("--wav", required=True)
    p.add_argument("--labels", required=True)
    p.set_defaults(func=cmd_gen_corpus)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(stream=sys.stderr,
                        level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except TinybirdError as exc:
        print(f"error: {exc.module}: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: cli: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
