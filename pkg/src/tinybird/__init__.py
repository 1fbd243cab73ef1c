"""Host-side implementation of a silence-aware bioacoustic streaming node:
framing and gating, low-bitrate codecs, the smart-compression wire format,
MFCC features, int8 two-stage syllable classification, and a battery
lifetime model."""

__version__ = "0.1.0"

from .audio import AudioBlock, GateState, frame_signal, gate_block  # noqa: F401
from .codecs import CodecId, codec_metrics, decode, encode  # noqa: F401
from .protocol import Packet, StreamHeader, stream_decode, stream_encode  # noqa: F401
