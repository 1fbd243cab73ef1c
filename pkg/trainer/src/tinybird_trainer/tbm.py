"""Writer for the .tbm weight file: magic "TBML", version, tensor count,
then per tensor name, dtype (0=int8, 1=int32), dims (u16), scale (f32),
zero point (i8) and raw little-endian data."""

from __future__ import annotations

import struct

import numpy as np

from .quantize import QuantizedExport

MAGIC = b"TBML"
VERSION = 1
INT8, INT32 = 0, 1


def _tensor(name: str, dtype: int, shape: tuple, data: np.ndarray,
            scale: float, zero_point: int) -> bytes:
    payload = np.ascontiguousarray(
        data, dtype="<i1" if dtype == INT8 else "<i4").tobytes()
    buf = struct.pack("<B", len(name)) + name.encode("ascii")
    buf += struct.pack("<BB", dtype, len(shape))
    buf += b"".join(struct.pack("<H", d) for d in shape)
    buf += struct.pack("<fb", scale, zero_point)
    return buf + payload


def export_bytes(export: QuantizedExport) -> bytes:
    tensors = [
        _tensor("input_q", INT8, (1,), np.zeros(1, np.int8),
                export.input_scale, export.input_zp),
        _tensor("det.weight", INT8, (1, 16), export.det_w,
                export.det_w_scale, 0),
        _tensor("det.bias", INT32, (1,), np.array([export.det_bias]), 1.0, 0),
        _tensor("det.threshold", INT32, (1,),
                np.array([export.threshold_q16]), 1.0, 0),
        _tensor("cls.conv.weight", INT8, (8, 3, 3), export.conv_w,
                export.conv_w_scale, 0),
        _tensor("cls.conv.bias", INT32, (8,), export.conv_bias, 1.0, 0),
        _tensor("cls.conv.out_q", INT8, (1,), np.zeros(1, np.int8),
                export.act_scale, export.act_zp),
        _tensor("cls.fc.weight", INT8, (8, 112), export.fc_w,
                export.fc_w_scale, 0),
        _tensor("cls.fc.bias", INT32, (8,), export.fc_bias, 1.0, 0),
    ]
    return MAGIC + struct.pack("<BB", VERSION, len(tensors)) + b"".join(tensors)


def write_tbm(path, export: QuantizedExport) -> int:
    blob = export_bytes(export)
    with open(path, "wb") as fh:
        fh.write(blob)
    return len(blob)


def classifier_flash_bytes(export: QuantizedExport) -> int:
    return (export.conv_w.size + export.fc_w.size
            + 4 * (export.conv_bias.size + export.fc_bias.size))
