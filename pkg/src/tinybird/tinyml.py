"""8-bit quantized inference for the two-stage syllable network.

Stage one is a 16-input perceptron that flags blocks containing syllable
energy; stage two is a small conv + fully-connected classifier over three
MFCC vectors picked from a detected syllable.  Weights are per-tensor
symmetric int8, activations asymmetric int8, accumulators int32, and the
conv output is requantized with a fixed-point multiplier, so the integer
path is bit-deterministic across runs and platforms.

Weight file (.tbm), little-endian: magic "TBML", version u8, tensor count
u8, then per tensor: name_len u8 + name, dtype u8 (0=int8, 1=int32), rank
u8, dims u16 each, scale f32, zero_point i8, raw data.

Tensor names understood by the loader:

    input_q          int8[1]    MFCC-to-int8 input quantizer (scale/zp)
    det.weight       int8[1,16]
    det.bias         int32[1]   scale = input_scale * weight_scale
    det.threshold    int32[1]   probability in Q16.16
    cls.conv.weight  int8[8,3,3]  (filters, block channels, coefficient taps)
    cls.conv.bias    int32[8]
    cls.conv.out_q   int8[1]    post-ReLU activation quantizer
    cls.fc.weight    int8[8,112]
    cls.fc.bias      int32[8]
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .dsp import N_MFCC, MfccVector
from .errors import ModelError

TBM_MAGIC = b"TBML"
TBM_VERSION = 1

DTYPE_INT8 = 0
DTYPE_INT32 = 1

N_CLASSES = 8
CONV_FILTERS = 8
CONV_TAPS = 3
CONV_BLOCKS = 3
CONV_OUT = N_MFCC - CONV_TAPS + 1          # valid padding
FC_IN = CONV_FILTERS * CONV_OUT

# target-device memory budgets, kB = 1024 bytes
DETECTOR_FLASH_BUDGET = int(1.2 * 1024)
CLASSIFIER_FLASH_BUDGET = int(2.7 * 1024)
CLASSIFIER_RAM_BUDGET = int(1.2 * 1024)


@dataclass(frozen=True)
class QuantizedTensor:
    shape: tuple
    data: np.ndarray          # int8 or int32
    scale: float
    zero_point: int = 0

    def __post_init__(self):
        if self.data.size != int(np.prod(self.shape)):
            raise ModelError(f"data size {self.data.size} != shape {self.shape}")
        if not (self.scale > 0) or not math.isfinite(self.scale):
            raise ModelError(f"scale must be positive and finite, got {self.scale}")
        if not -128 <= self.zero_point <= 127:
            raise ModelError(f"zero_point {self.zero_point} outside int8 range")

    def dequantize(self) -> np.ndarray:
        return self.scale * (self.data.astype(np.float64) - self.zero_point)


def quantize_symmetric(values: np.ndarray) -> QuantizedTensor:
    """Per-tensor symmetric int8 (zero_point 0); scale 1.0 for all-zero input."""
    values = np.asarray(values, dtype=np.float64)
    max_abs = float(np.max(np.abs(values))) if values.size else 0.0
    scale = max_abs / 127.0 if max_abs > 0 else 1.0
    q = np.clip(np.floor(values / scale + 0.5), -128, 127).astype(np.int8)
    return QuantizedTensor(values.shape, q, scale, 0)


def quantize_affine_params(lo: float, hi: float) -> tuple[float, int]:
    """Asymmetric int8 quantizer covering [lo, hi]."""
    lo = min(lo, 0.0)
    hi = max(hi, lo + 1e-6)
    scale = (hi - lo) / 255.0
    zero_point = int(np.clip(round(-128 - lo / scale), -128, 127))
    return scale, zero_point


def quantize_values(values: np.ndarray, scale: float, zero_point: int) -> np.ndarray:
    q = np.floor(np.asarray(values, dtype=np.float64) / scale + 0.5) + zero_point
    return np.clip(q, -128, 127).astype(np.int8)


def requant_multiplier(real: float) -> tuple[int, int]:
    """Represent a positive real multiplier as M * 2^-shift, M < 2^31."""
    if real <= 0:
        raise ModelError("requant multiplier must be positive")
    mantissa, exponent = math.frexp(real)       # real = mantissa * 2^exponent
    shift = 31 - exponent
    m = round(mantissa * (1 << 31))
    if m == (1 << 31):
        m >>= 1
        shift -= 1
    while shift > 62:                            # keep int64 shifts safe
        m = (m + 1) >> 1
        shift -= 1
    return m, shift


def rounding_shift(acc: np.ndarray, m: int, shift: int) -> np.ndarray:
    """(acc * M + 2^(shift-1)) >> shift on int64; deterministic integer op."""
    t = acc.astype(np.int64) * np.int64(m)
    return (t + (np.int64(1) << np.int64(shift - 1))) >> np.int64(shift)


@dataclass(frozen=True)
class DetectorModel:
    weights: QuantizedTensor      # [1, 16], symmetric
    bias: int                     # int32 at input_scale * weight_scale
    threshold: float
    input_scale: float
    input_zero_point: int

    def __post_init__(self):
        if self.weights.shape != (1, N_MFCC):
            raise ModelError(f"detector weights must be (1, {N_MFCC}), "
                             f"got {self.weights.shape}")
        if not 0.0 < self.threshold < 1.0:
            raise ModelError("detector threshold must be in (0, 1)")

    @property
    def flash_bytes(self) -> int:
        return self.weights.data.size + 4 + 4    # weights + bias + threshold


@dataclass(frozen=True)
class ClassifierModel:
    conv_weights: QuantizedTensor     # [8, 3, 3]
    conv_bias: np.ndarray             # int32[8]
    act_scale: float
    act_zero_point: int
    fc_weights: QuantizedTensor       # [8, 112]
    fc_bias: np.ndarray               # int32[8]
    input_scale: float
    input_zero_point: int

    def __post_init__(self):
        if self.conv_weights.shape != (CONV_FILTERS, CONV_BLOCKS, CONV_TAPS):
            raise ModelError(f"conv weights must be "
                             f"({CONV_FILTERS}, {CONV_BLOCKS}, {CONV_TAPS}), "
                             f"got {self.conv_weights.shape}")
        if self.fc_weights.shape != (N_CLASSES, FC_IN):
            raise ModelError(f"fc weights must be ({N_CLASSES}, {FC_IN}), "
                             f"got {self.fc_weights.shape}")
        if self.conv_bias.shape != (CONV_FILTERS,) or self.fc_bias.shape != (N_CLASSES,):
            raise ModelError("classifier bias shapes invalid")

    @property
    def flash_bytes(self) -> int:
        return (self.conv_weights.data.size + self.fc_weights.data.size
                + 4 * (self.conv_bias.size + self.fc_bias.size))

    @property
    def scratch_bytes(self) -> int:
        # static work buffers a C forward pass needs, all live at once:
        # int8 input, int32 conv accumulators, int8 conv output, int32 logits
        return (CONV_BLOCKS * N_MFCC
                + 4 * CONV_FILTERS * CONV_OUT
                + CONV_FILTERS * CONV_OUT
                + 4 * N_CLASSES)


def _as_floats(mfcc) -> np.ndarray:
    if isinstance(mfcc, MfccVector):
        return mfcc.as_float()
    return np.asarray(mfcc, dtype=np.float64)


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


def detect(mfcc, model: DetectorModel) -> dict:
    """Perceptron block detector on the int8 path.

    score = sigmoid(input_scale * weight_scale * (int32 accumulator)); a
    score >= threshold flags the block as part of a syllable.
    """
    x = _as_floats(mfcc)
    if x.shape != (N_MFCC,):
        raise ModelError(f"detector input must have {N_MFCC} values")
    q_in = quantize_values(x, model.input_scale, model.input_zero_point)
    acc = int(np.sum((q_in.astype(np.int32) - model.input_zero_point)
                     * model.weights.data.astype(np.int32))) + model.bias
    logit = model.input_scale * model.weights.scale * acc
    score = sigmoid(logit)
    return {"score": score, "is_syllable": score >= model.threshold}


def reference_detect(mfcc, model: DetectorModel) -> dict:
    """Float oracle: same math on dequantized weights, unquantized input."""
    x = _as_floats(mfcc)
    w = model.weights.dequantize()[0]
    bias = model.input_scale * model.weights.scale * model.bias
    logit = float(np.dot(w, x)) + bias
    score = sigmoid(logit)
    return {"score": score, "is_syllable": score >= model.threshold}


def _conv_accumulate(q_in: np.ndarray, model: ClassifierModel) -> np.ndarray:
    """int32 valid conv over the coefficient axis; input channels = blocks."""
    centered = q_in.astype(np.int32) - model.input_zero_point
    w = model.conv_weights.data.astype(np.int32)
    acc = np.zeros((CONV_FILTERS, CONV_OUT), dtype=np.int32)
    for k in range(CONV_TAPS):
        # (filters, blocks) x (blocks, positions) for tap k
        acc += np.einsum("fc,cp->fp", w[:, :, k], centered[:, k:k + CONV_OUT])
    return acc + model.conv_bias[:, None]


def classify(blocks3, model: ClassifierModel) -> dict:
    """Conv + FC + softmax over three MFCC vectors (int8 path).

    Returns 8 class probabilities (sum 1 within 1e-6) and the argmax label,
    ties broken toward the lowest class index.
    """
    x = np.stack([_as_floats(b) for b in blocks3]) if not isinstance(blocks3, np.ndarray) \
        else np.asarray(blocks3, dtype=np.float64)
    if x.shape != (CONV_BLOCKS, N_MFCC):
        raise ModelError(f"classifier input must be ({CONV_BLOCKS}, {N_MFCC}), "
                         f"got {x.shape}")
    q_in = quantize_values(x, model.input_scale, model.input_zero_point)
    acc = _conv_accumulate(q_in, model)
    m, shift = requant_multiplier(
        model.input_scale * model.conv_weights.scale / model.act_scale)
    q_act = rounding_shift(acc, m, shift) + model.act_zero_point
    # ReLU folds into the lower clamp: act_zero_point encodes real zero
    q_act = np.clip(q_act, model.act_zero_point, 127).astype(np.int8)

    centered = q_act.reshape(-1).astype(np.int32) - model.act_zero_point
    logits_acc = model.fc_weights.data.astype(np.int32) @ centered + model.fc_bias
    logits = model.act_scale * model.fc_weights.scale * logits_acc.astype(np.float64)
    probs = _softmax(logits)
    return {"probs": probs, "label": int(np.argmax(probs))}


def reference_classify(blocks3, model: ClassifierModel) -> dict:
    """Float oracle on dequantized weights (conv, ReLU, FC, softmax)."""
    x = np.stack([_as_floats(b) for b in blocks3]) if not isinstance(blocks3, np.ndarray) \
        else np.asarray(blocks3, dtype=np.float64)
    w = model.conv_weights.dequantize()
    conv_bias = model.input_scale * model.conv_weights.scale \
        * model.conv_bias.astype(np.float64)
    acc = np.zeros((CONV_FILTERS, CONV_OUT))
    for k in range(CONV_TAPS):
        acc += np.einsum("fc,cp->fp", w[:, :, k], x[:, k:k + CONV_OUT])
    act = np.maximum(acc + conv_bias[:, None], 0.0)
    fc_w = model.fc_weights.dequantize()
    fc_bias = model.act_scale * model.fc_weights.scale \
        * model.fc_bias.astype(np.float64)
    logits = fc_w @ act.reshape(-1) + fc_bias
    probs = _softmax(logits)
    return {"probs": probs, "label": int(np.argmax(probs))}


def _softmax(logits: np.ndarray) -> np.ndarray:
    e = np.exp(logits - np.max(logits))
    return e / np.sum(e)


# --------------------------------------------------------------- file I/O

_DTYPE_NP = {DTYPE_INT8: np.int8, DTYPE_INT32: np.int32}
_DTYPE_SIZE = {DTYPE_INT8: 1, DTYPE_INT32: 4}


@dataclass(frozen=True)
class NamedTensor:
    name: str
    dtype: int
    shape: tuple
    data: np.ndarray
    scale: float
    zero_point: int


def write_tbm(path, tensors: list[NamedTensor]) -> None:
    with open(path, "wb") as fh:
        fh.write(TBM_MAGIC)
        fh.write(struct.pack("<BB", TBM_VERSION, len(tensors)))
        for t in tensors:
            name = t.name.encode("ascii")
            fh.write(struct.pack("<B", len(name)))
            fh.write(name)
            fh.write(struct.pack("<BB", t.dtype, len(t.shape)))
            for dim in t.shape:
                fh.write(struct.pack("<H", dim))
            fh.write(struct.pack("<fb", t.scale, t.zero_point))
            dtype = "<i1" if t.dtype == DTYPE_INT8 else "<i4"
            fh.write(np.ascontiguousarray(t.data, dtype=dtype).tobytes())


def read_tbm(path) -> dict[str, NamedTensor]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if raw[:4] != TBM_MAGIC:
        raise ModelError(f"bad magic {raw[:4]!r}, expected {TBM_MAGIC!r}")
    if len(raw) < 6:
        raise ModelError("truncated file header")
    version, count = struct.unpack_from("<BB", raw, 4)
    if version != TBM_VERSION:
        raise ModelError(f"unsupported version {version}")
    tensors: dict[str, NamedTensor] = {}
    pos = 6
    for _ in range(count):
        try:
            (name_len,) = struct.unpack_from("<B", raw, pos)
            pos += 1
            name = raw[pos:pos + name_len].decode("ascii")
            if len(raw) < pos + name_len:
                raise struct.error
            pos += name_len
            dtype, rank = struct.unpack_from("<BB", raw, pos)
            pos += 2
            dims = struct.unpack_from(f"<{rank}H", raw, pos)
            pos += 2 * rank
            scale, zero_point = struct.unpack_from("<fb", raw, pos)
            pos += 5
        except struct.error:
            raise ModelError(f"truncated tensor table near offset {pos}")
        if dtype not in _DTYPE_NP:
            raise ModelError(f"tensor {name!r}: unknown dtype {dtype}")
        size = int(np.prod(dims)) if dims else 1
        nbytes = size * _DTYPE_SIZE[dtype]
        if pos + nbytes > len(raw):
            raise ModelError(f"tensor {name!r}: truncated data "
                             f"(need {nbytes} bytes at offset {pos})")
        dt = "<i1" if dtype == DTYPE_INT8 else "<i4"
        data = np.frombuffer(raw[pos:pos + nbytes], dtype=dt).copy()
        pos += nbytes
        if not (scale > 0) or not math.isfinite(scale):
            raise ModelError(f"tensor {name!r}: scale must be positive, got {scale}")
        tensors[name] = NamedTensor(name, dtype, tuple(dims), data, scale, zero_point)
    return tensors


@dataclass(frozen=True)
class ModelBundle:
    detector: DetectorModel
    classifier: ClassifierModel
    report: dict


def _want(tensors, name, dtype, shape) -> NamedTensor:
    if name not in tensors:
        raise ModelError(f"missing tensor {name!r}")
    t = tensors[name]
    if t.dtype != dtype:
        raise ModelError(f"tensor {name!r}: wrong dtype {t.dtype}")
    if t.shape != shape:
        raise ModelError(f"tensor {name!r}: shape {t.shape}, expected {shape}")
    return t


def load_model(path) -> ModelBundle:
    """Load and validate both stages; raises ModelError naming the offending
    tensor, leaving no partial model behind."""
    tensors = read_tbm(path)

    in_q = _want(tensors, "input_q", DTYPE_INT8, (1,))
    det_w = _want(tensors, "det.weight", DTYPE_INT8, (1, N_MFCC))
    det_b = _want(tensors, "det.bias", DTYPE_INT32, (1,))
    det_t = _want(tensors, "det.threshold", DTYPE_INT32, (1,))
    conv_w = _want(tensors, "cls.conv.weight", DTYPE_INT8,
                   (CONV_FILTERS, CONV_BLOCKS, CONV_TAPS))
    conv_b = _want(tensors, "cls.conv.bias", DTYPE_INT32, (CONV_FILTERS,))
    act_q = _want(tensors, "cls.conv.out_q", DTYPE_INT8, (1,))
    fc_w = _want(tensors, "cls.fc.weight", DTYPE_INT8, (N_CLASSES, FC_IN))
    fc_b = _want(tensors, "cls.fc.bias", DTYPE_INT32, (N_CLASSES,))

    threshold = float(det_t.data[0]) / 65536.0
    detector = DetectorModel(
        weights=QuantizedTensor((1, N_MFCC), det_w.data.reshape(1, N_MFCC),
                                det_w.scale, det_w.zero_point),
        bias=int(det_b.data[0]),
        threshold=threshold,
        input_scale=in_q.scale,
        input_zero_point=in_q.zero_point,
    )
    classifier = ClassifierModel(
        conv_weights=QuantizedTensor(conv_w.shape,
                                     conv_w.data.reshape(conv_w.shape),
                                     conv_w.scale, conv_w.zero_point),
        conv_bias=conv_b.data.astype(np.int32),
        act_scale=act_q.scale,
        act_zero_point=act_q.zero_point,
        fc_weights=QuantizedTensor(fc_w.shape, fc_w.data.reshape(fc_w.shape),
                                   fc_w.scale, fc_w.zero_point),
        fc_bias=fc_b.data.astype(np.int32),
        input_scale=in_q.scale,
        input_zero_point=in_q.zero_point,
    )
    report = {
        "detector_flash_bytes": detector.flash_bytes,
        "detector_flash_budget": DETECTOR_FLASH_BUDGET,
        "classifier_flash_bytes": classifier.flash_bytes,
        "classifier_flash_budget": CLASSIFIER_FLASH_BUDGET,
        "classifier_scratch_bytes": classifier.scratch_bytes,
        "classifier_ram_budget": CLASSIFIER_RAM_BUDGET,
    }
    if detector.flash_bytes > DETECTOR_FLASH_BUDGET:
        raise ModelError(f"detector exceeds flash budget: {report}")
    if classifier.flash_bytes > CLASSIFIER_FLASH_BUDGET:
        raise ModelError(f"classifier exceeds flash budget: {report}")
    if classifier.scratch_bytes > CLASSIFIER_RAM_BUDGET:
        raise ModelError(f"classifier exceeds RAM budget: {report}")
    return ModelBundle(detector, classifier, report)
