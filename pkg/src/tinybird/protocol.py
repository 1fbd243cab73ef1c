"""Smart-compression wire format and host-side reconstruction.

Silent blocks are never transmitted; a running counter of skipped blocks is
carried in the next packet so the decoder can restore the signal's timeline
exactly.  Each packet embeds the codec state that was current before its
first payload sample, so any single packet decodes correctly given only the
stream header.

Wire layout (all integers little-endian):

    StreamHeader: sample_rate u32 | block_size u16 | codec u8 | version u8
    Packet:       magic 0x54 0x42 | seq u16 | codec u8 | silence_blocks u32
                  | state_snapshot (codec-specific, see codecs) | payload_len
                  u16 | payload [| crc16]

Version byte: low 7 bits = format version (currently 1); high bit set means
a CRC-16/CCITT trails every packet (file storage option; the radio link has
its own CRC).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass

import numpy as np

from . import codecs
from .audio import SILENT, VOICED
from .codecs import CodecId
from .errors import ConfigError, StreamError

log = logging.getLogger("tinybird.protocol")

PACKET_MAGIC = b"TB"
STREAM_VERSION = 1
CRC_FLAG = 0x80
DEFAULT_MTU = 244       # typical BLE payload after link-layer headers

# magic(2) + seq(2) + codec(1) + silence_blocks(4) + payload_len(2)
_FIXED_HEADER = 11


def packet_header_size(codec: CodecId) -> int:
    return _FIXED_HEADER + codecs.STATE_WIRE_SIZE[CodecId(codec)]


@dataclass(frozen=True)
class StreamHeader:
    sample_rate: int
    block_size: int
    codec: CodecId
    version: int = STREAM_VERSION

    def to_bytes(self) -> bytes:
        return struct.pack("<IHBB", self.sample_rate, self.block_size,
                           int(self.codec), self.version)

    @classmethod
    def from_bytes(cls, raw: bytes) -> "StreamHeader":
        if len(raw) < 8:
            raise StreamError("truncated stream header")
        rate, block_size, codec, version = struct.unpack("<IHBB", raw[:8])
        if block_size == 0 or block_size & (block_size - 1):
            raise StreamError(f"header block_size {block_size} not a power of two")
        return cls(rate, block_size, CodecId(codec), version)

    @property
    def crc_enabled(self) -> bool:
        return bool(self.version & CRC_FLAG)


@dataclass
class Packet:
    seq: int
    codec: CodecId
    silence_blocks: int
    state_snapshot: bytes
    payload: bytes = b""

    def to_bytes(self, crc: bool = False) -> bytes:
        buf = struct.pack("<2sHBI", PACKET_MAGIC, self.seq & 0xFFFF,
                          int(self.codec), self.silence_blocks)
        buf += self.state_snapshot
        buf += struct.pack("<H", len(self.payload))
        buf += self.payload
        if crc:
            buf += struct.pack("<H", crc16(buf))
        return buf


def crc16(data: bytes, init: int = 0xFFFF) -> int:
    """CRC-16/CCITT-FALSE (poly 0x1021)."""
    crc = init
    for byte in data:
        crc ^= byte << 8
        for _ in range(8):
            crc = ((crc << 1) ^ 0x1021) & 0xFFFF if crc & 0x8000 else (crc << 1) & 0xFFFF
    return crc


def stream_encode(gated_blocks, codec: CodecId,
                  mtu: int = DEFAULT_MTU) -> list[Packet]:
    """Packetize gated blocks: silence becomes counter increments, voiced
    blocks are compressed and appended to the open packet.

    Flush happens when another block would exceed the MTU or when a Silent
    block follows a Voiced one (keeps packets aligned to vocal segments).
    Trailing silence is flushed as a terminal empty packet so the total
    duration is preserved.
    """
    codec = CodecId(codec)
    state = codecs.initial_state(codec)
    header_size = packet_header_size(codec)

    packets: list[Packet] = []
    seq = 0
    silence = 0
    open_packet: Packet | None = None
    open_bytes = 0

    def flush():
        nonlocal open_packet, open_bytes, seq
        if open_packet is not None:
            packets.append(open_packet)
            open_packet = None
            open_bytes = 0
            seq += 1

    for block, decision in gated_blocks:
        if decision == SILENT:
            flush()
            silence += 1
            continue
        if decision != VOICED:
            raise ConfigError(f"unknown gate decision {decision!r}")
        per_block = codecs.compressed_size(codec, block.block_size)
        if header_size + per_block > mtu:
            raise ConfigError(
                f"mtu {mtu} cannot fit one {codec.name} block "
                f"({header_size} B header + {per_block} B payload)")
        if open_packet is not None and open_bytes + per_block > mtu:
            flush()
        if open_packet is None:
            # round-trip the state through its wire projection so encoder
            # and decoder start the packet in identical states (drops CFDM's
            # unserialized last_bit)
            snapshot = state.to_wire()
            state = codecs.state_from_wire(codec, snapshot)
            open_packet = Packet(seq=seq & 0xFFFF, codec=codec,
                                 silence_blocks=silence,
                                 state_snapshot=snapshot)
            open_bytes = header_size
            silence = 0
        payload, state = codecs.encode(codec, state, block.samples)
        open_packet.payload += payload
        open_bytes += len(payload)
    flush()
    if silence > 0:
        packets.append(Packet(seq=seq & 0xFFFF, codec=codec,
                              silence_blocks=silence,
                              state_snapshot=state.to_wire()))
    return packets


def stream_decode(header: StreamHeader, packets,
                  gap_fill_blocks: int = 0) -> np.ndarray:
    """Reconstruct the time-domain signal from packets in sequence order.

    Every packet contributes silence_blocks * block_size zeros followed by
    its decoded payload.  A sequence gap inserts gap_fill_blocks of silence
    (default 0) and logs a warning naming the missing range.
    """
    block_size = header.block_size
    chunks: list[np.ndarray] = []
    expected: int | None = None
    for packet in packets:
        if expected is not None and packet.seq != expected:
            log.warning("sequence gap: expected seq %d, got %d; filling %d blocks",
                        expected, packet.seq, gap_fill_blocks)
            if gap_fill_blocks:
                chunks.append(np.zeros(gap_fill_blocks * block_size, dtype=np.int16))
        if packet.silence_blocks:
            chunks.append(np.zeros(packet.silence_blocks * block_size,
                                   dtype=np.int16))
        if packet.payload:
            state = codecs.state_from_wire(packet.codec, packet.state_snapshot)
            samples, _ = codecs.decode(packet.codec, state, packet.payload)
            chunks.append(samples)
        expected = (packet.seq + 1) & 0xFFFF
    if not chunks:
        return np.zeros(0, dtype=np.int16)
    return np.concatenate(chunks)


def duty_cycle(header: StreamHeader, packets) -> float:
    """Fraction of blocks that carried audio: voiced / (voiced + silent)."""
    if not packets:
        raise StreamError("duty_cycle needs at least one packet")
    voiced = 0
    silent = 0
    for packet in packets:
        per_block = codecs.compressed_size(packet.codec, header.block_size)
        voiced += len(packet.payload) // per_block
        silent += packet.silence_blocks
    total = voiced + silent
    return voiced / total if total else 0.0


# ----------------------------------------------------------- file I/O (.tbs)

def write_stream(path, header: StreamHeader, packets, crc: bool = False) -> None:
    version = (header.version & ~CRC_FLAG) | (CRC_FLAG if crc else 0)
    header = StreamHeader(header.sample_rate, header.block_size,
                          header.codec, version)
    with open(path, "wb") as fh:
        fh.write(header.to_bytes())
        for packet in packets:
            fh.write(packet.to_bytes(crc=crc))


def read_stream(path) -> tuple[StreamHeader, list[Packet]]:
    with open(path, "rb") as fh:
        raw = fh.read()
    header = StreamHeader.from_bytes(raw)
    packets = parse_packets(raw[8:], crc=header.crc_enabled)
    return header, packets


def parse_packets(raw: bytes, crc: bool = False) -> list[Packet]:
    """Parse concatenated packets; corrupt ones are dropped with a
    diagnostic and parsing resyncs on the next magic."""
    packets: list[Packet] = []
    pos = 0
    n = len(raw)
    while pos < n:
        if raw[pos:pos + 2] != PACKET_MAGIC:
            nxt = raw.find(PACKET_MAGIC, pos + 1)
            log.warning("bad packet magic at offset %d; %s", pos,
                        f"resyncing at {nxt}" if nxt >= 0 else "no further packets")
            if nxt < 0:
                break
            pos = nxt
            continue
        try:
            packet, consumed = _parse_one(raw, pos, crc)
        except StreamError as exc:
            nxt = raw.find(PACKET_MAGIC, pos + 1)
            log.warning("dropping packet at offset %d: %s", pos, exc)
            if nxt < 0:
                break
            pos = nxt
            continue
        packets.append(packet)
        pos += consumed
    return packets


def _parse_one(raw: bytes, pos: int, crc: bool) -> tuple[Packet, int]:
    if pos + 9 > len(raw):
        raise StreamError("truncated packet header")
    seq, codec_byte, silence = struct.unpack_from("<HBI", raw, pos + 2)
    try:
        codec = CodecId(codec_byte)
    except ValueError:
        raise StreamError(f"unknown codec id {codec_byte}")
    snap_size = codecs.STATE_WIRE_SIZE[codec]
    off = pos + 9
    if off + snap_size + 2 > len(raw):
        raise StreamError("truncated state snapshot")
    snapshot = raw[off:off + snap_size]
    off += snap_size
    (payload_len,) = struct.unpack_from("<H", raw, off)
    off += 2
    if off + payload_len > len(raw):
        raise StreamError(f"payload length {payload_len} exceeds buffer")
    payload = raw[off:off + payload_len]
    off += payload_len
    if crc:
        if off + 2 > len(raw):
            raise StreamError("missing CRC")
        (stored,) = struct.unpack_from("<H", raw, off)
        computed = crc16(raw[pos:off])
        if stored != computed:
            raise StreamError(f"CRC mismatch (seq {seq}): "
                              f"stored {stored:#06x}, computed {computed:#06x}")
        off += 2
    return Packet(seq, codec, silence, snapshot, payload), off - pos
