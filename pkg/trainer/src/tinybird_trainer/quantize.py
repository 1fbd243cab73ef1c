"""Post-training int8 quantization and the int8 simulation used to verify
an export before it ships.

Scheme: per-tensor symmetric weights (zero_point 0, max-abs scale),
asymmetric activations calibrated on sample data, int32 biases at the
product scale.  The int8 simulation reproduces the consumer's arithmetic
(int32 accumulators, fixed-point requantization) so argmax agreement can be
measured here without importing the consumer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .train import CONV_OUT, CONV_TAPS, FloatClassifier, FloatDetector


def _f32(x: float) -> float:
    """Scales live as f32 in the weight file; round here so the export's
    arithmetic matches the consumer's bit for bit."""
    return float(np.float32(x))


def quantize_symmetric(values: np.ndarray) -> tuple[np.ndarray, float]:
    max_abs = float(np.max(np.abs(values))) if values.size else 0.0
    scale = _f32(max_abs / 127.0) if max_abs > 0 else 1.0   # all-zero: scale 1.0
    q = np.clip(np.floor(values / scale + 0.5), -128, 127).astype(np.int8)
    return q, scale


def affine_params(lo: float, hi: float) -> tuple[float, int]:
    lo = min(lo, 0.0)
    hi = max(hi, lo + 1e-6)
    scale = _f32((hi - lo) / 255.0)
    zero_point = int(np.clip(round(-128 - lo / scale), -128, 127))
    return scale, zero_point


def quantize_affine(values: np.ndarray, scale: float, zp: int) -> np.ndarray:
    q = np.floor(np.asarray(values, dtype=np.float64) / scale + 0.5) + zp
    return np.clip(q, -128, 127).astype(np.int8)


def fixedpoint_multiplier(real: float) -> tuple[int, int]:
    mantissa, exponent = math.frexp(real)
    shift = 31 - exponent
    m = round(mantissa * (1 << 31))
    if m == (1 << 31):
        m >>= 1
        shift -= 1
    while shift > 62:
        m = (m + 1) >> 1
        shift -= 1
    return m, shift


@dataclass
class QuantizedExport:
    input_scale: float
    input_zp: int
    det_w: np.ndarray          # int8 (1, 16)
    det_w_scale: float
    det_bias: int
    threshold_q16: int
    conv_w: np.ndarray         # int8 (8, 3, 3)
    conv_w_scale: float
    conv_bias: np.ndarray      # int32 (8,)
    act_scale: float
    act_zp: int
    fc_w: np.ndarray           # int8 (8, 112)
    fc_w_scale: float
    fc_bias: np.ndarray        # int32 (8,)


def quantize_models(detector: FloatDetector, classifier: FloatClassifier,
                    calibration: np.ndarray) -> QuantizedExport:
    """calibration: (N, 3, 16) float MFCC inputs for range estimation."""
    flat = calibration.reshape(-1, calibration.shape[-1])
    input_scale, input_zp = affine_params(float(flat.min()), float(flat.max()))

    det_w, det_w_scale = quantize_symmetric(detector.weights.reshape(1, -1))
    det_bias = int(round(detector.bias / (input_scale * det_w_scale)))

    conv_w, conv_w_scale = quantize_symmetric(classifier.conv_w)
    act = classifier.conv_activations(calibration)
    act_scale, act_zp = affine_params(0.0, float(act.max()))
    conv_bias = np.round(classifier.conv_b
                         / (input_scale * conv_w_scale)).astype(np.int32)

    fc_w, fc_w_scale = quantize_symmetric(classifier.fc_w)
    fc_bias = np.round(classifier.fc_b
                       / (act_scale * fc_w_scale)).astype(np.int32)

    threshold_q16 = int(round(detector.threshold * 65536))
    if not 0 < threshold_q16 < 65536:
        raise ValueError(f"threshold {detector.threshold} not exportable")
    return QuantizedExport(input_scale, input_zp, det_w, det_w_scale,
                           det_bias, threshold_q16, conv_w, conv_w_scale,
                           conv_bias, act_scale, act_zp, fc_w, fc_w_scale,
                           fc_bias)


# ------------------------------------------------- int8 simulation (verify)

def int8_detect_scores(export: QuantizedExport, x: np.ndarray) -> np.ndarray:
    q_in = quantize_affine(x, export.input_scale, export.input_zp)
    acc = (q_in.astype(np.int64) - export.input_zp) \
        @ export.det_w.reshape(-1).astype(np.int64) + export.det_bias
    logits = export.input_scale * export.det_w_scale * acc.astype(np.float64)
    return 1.0 / (1.0 + np.exp(-np.clip(logits, -60, 60)))


def int8_classify_labels(export: QuantizedExport, x: np.ndarray) -> np.ndarray:
    q_in = quantize_affine(x, export.input_scale, export.input_zp)
    centered = q_in.astype(np.int64) - export.input_zp
    windows = np.stack([centered[:, :, k:k + CONV_OUT]
                        for k in range(CONV_TAPS)], axis=-1)
    acc = np.einsum("fck,bcpk->bfp", export.conv_w.astype(np.int64), windows) \
        + export.conv_bias.astype(np.int64)[None, :, None]
    m, shift = fixedpoint_multiplier(
        export.input_scale * export.conv_w_scale / export.act_scale)
    q_act = ((acc * m + (1 << (shift - 1))) >> shift) + export.act_zp
    q_act = np.clip(q_act, export.act_zp, 127)
    flat = (q_act.reshape(len(x), -1) - export.act_zp)
    logits = flat @ export.fc_w.astype(np.int64).T + export.fc_bias
    return np.argmax(logits, axis=1)   # positive scale: argmax unaffected


def agreement(export: QuantizedExport, classifier: FloatClassifier,
              inputs: np.ndarray) -> float:
    return float(np.mean(int8_classify_labels(export, inputs)
                         == classifier.predict(inputs)))
