"""Bit-exact integer PCM WAV I/O and lossless buffer operations.

Samples live in memory as float64 normalized by ``2**(bit_depth-1)``; every
16- and 24-bit integer value is exactly representable, so a read/write cycle
never changes a sample.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import SampleRangeError, WavCodecError, WavHeaderError, WavTruncatedError
from .timecode import SampleTime

SUPPORTED_DEPTHS = (16, 24)
MAX_CHANNELS = 64

WAVE_FORMAT_PCM = 0x0001
WAVE_FORMAT_EXTENSIBLE = 0xFFFE
# KSDATAFORMAT_SUBTYPE_PCM minus its leading format-tag word
_PCM_GUID_TAIL = bytes.fromhex("000000001000800000aa00389b71")


class PcmBuffer:
    """Multi-channel audio, shape ``(n_samples, channels)``."""

    def __init__(self, data, sample_rate: int, bit_depth: int = 24):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim == 1:
            data = data[:, None]
        if data.ndim != 2 or data.shape[1] < 1:
            raise ValueError(f"expected (n_samples, channels) data, got shape {data.shape}")
        if sample_rate <= 0:
            raise ValueError(f"sample rate must be positive, got {sample_rate}")
        if bit_depth not in SUPPORTED_DEPTHS:
            raise ValueError(f"bit depth must be one of {SUPPORTED_DEPTHS}, got {bit_depth}")
        self.data = data
        self.sample_rate = int(sample_rate)
        self.bit_depth = bit_depth

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    def __len__(self):
        return self.data.shape[0]

    @property
    def duration(self) -> float:
        return len(self) / self.sample_rate

    @property
    def mono(self) -> np.ndarray:
        """The single channel of a mono buffer as a 1-D array."""
        if self.channels != 1:
            raise ValueError(f"buffer has {self.channels} channels, expected mono")
        return self.data[:, 0]

    def __eq__(self, other):
        if not isinstance(other, PcmBuffer):
            return NotImplemented
        return (
            self.sample_rate == other.sample_rate
            and self.bit_depth == other.bit_depth
            and self.data.shape == other.data.shape
            and np.array_equal(self.data, other.data)
        )

    def __repr__(self):
        return (
            f"PcmBuffer(channels={self.channels}, samples={len(self)}, "
            f"sample_rate={self.sample_rate}, bit_depth={self.bit_depth})"
        )

    def quantized(self, bit_depth: int | None = None) -> np.ndarray:
        """Integer sample values at ``bit_depth``, clipped to the legal range."""
        bit_depth = bit_depth or self.bit_depth
        scale = 1 << (bit_depth - 1)
        q = np.rint(self.data * scale)
        np.clip(q, -scale, scale - 1, out=q)
        return q.astype(np.int32)

    @classmethod
    def from_integers(cls, ints, sample_rate: int, bit_depth: int) -> PcmBuffer:
        scale = float(1 << (bit_depth - 1))
        return cls(np.asarray(ints, dtype=np.float64) / scale, sample_rate, bit_depth)


@dataclass(frozen=True)
class WavInfo:
    channels: int
    sample_rate: int
    bit_depth: int
    n_frames: int
    data_offset: int
    data_size: int
    format_tag: int

    @property
    def block_align(self) -> int:
        return self.channels * self.bit_depth // 8


def read_wav_info(path) -> WavInfo:
    """Parse the RIFF header and locate the data chunk without loading samples."""
    with open(path, "rb") as f:
        return _parse_header(f)


def _parse_header(f) -> WavInfo:
    f.seek(0, 2)
    file_size = f.tell()
    f.seek(0)
    head = f.read(12)
    if len(head) < 12:
        raise WavTruncatedError("file too short for RIFF header", len(head))
    if head[0:4] != b"RIFF":
        raise WavHeaderError(f"missing RIFF signature, found {head[0:4]!r}", 0)
    if head[8:12] != b"WAVE":
        raise WavHeaderError(f"RIFF form type is {head[8:12]!r}, not WAVE", 8)

    fmt = None
    pos = 12
    while True:
        f.seek(pos)
        chunk = f.read(8)
        if len(chunk) == 0:
            break
        if len(chunk) < 8:
            raise WavTruncatedError("incomplete chunk header", pos)
        cid, size = chunk[:4], struct.unpack("<I", chunk[4:])[0]
        body = pos + 8
        if cid == b"fmt ":
            if size < 16:
                raise WavHeaderError(f"fmt chunk too small ({size} bytes)", pos)
            raw = f.read(size)
            if len(raw) < size:
                raise WavTruncatedError("fmt chunk runs past end of file", body + len(raw))
            fmt = _parse_fmt(raw, body)
        elif cid == b"data":
            if fmt is None:
                raise WavHeaderError("data chunk precedes fmt chunk", pos)
            channels, sample_rate, bits, tag = fmt
            available = file_size - body
            if size > available:
                raise WavTruncatedError(
                    f"data chunk declares {size} bytes but only {available} remain", file_size
                )
            block = channels * bits // 8
            if size % block:
                raise WavTruncatedError(
                    f"data size {size} is not a whole number of {block}-byte frames",
                    body + size - size % block,
                )
            return WavInfo(channels, sample_rate, bits, size // block, body, size, tag)
        pos = body + size + (size & 1)
        if pos > file_size:
            raise WavTruncatedError(f"chunk {cid!r} runs past end of file", file_size)
    if fmt is None:
        raise WavHeaderError("no fmt chunk", pos)
    raise WavHeaderError("no data chunk", pos)


def _parse_fmt(raw: bytes, offset: int):
    tag, channels, sample_rate, byte_rate, block_align, bits = struct.unpack("<HHIIHH", raw[:16])
    if tag == WAVE_FORMAT_EXTENSIBLE:
        if len(raw) < 40:
            raise WavHeaderError("extensible fmt chunk shorter than 40 bytes", offset)
        valid_bits = struct.unpack("<H", raw[18:20])[0]
        sub_tag = struct.unpack("<H", raw[24:26])[0]
        if sub_tag != WAVE_FORMAT_PCM or raw[26:40] != _PCM_GUID_TAIL:
            raise WavCodecError(f"unsupported extensible sub-format 0x{sub_tag:04x}", offset + 24)
        if valid_bits != bits:
            raise WavCodecError(f"valid bits {valid_bits} differ from container {bits}", offset + 18)
    elif tag != WAVE_FORMAT_PCM:
        raise WavCodecError(f"unsupported format tag 0x{tag:04x} (integer PCM only)", offset)
    if bits not in SUPPORTED_DEPTHS:
        raise WavCodecError(f"unsupported bit depth {bits}", offset + 14)
    if not 1 <= channels <= MAX_CHANNELS:
        raise WavHeaderError(f"channel count {channels} outside 1..{MAX_CHANNELS}", offset + 2)
    if sample_rate == 0:
        raise WavHeaderError("sample rate is zero", offset + 4)
    if block_align != channels * bits // 8:
        raise WavHeaderError(f"block align {block_align} inconsistent with {channels}x{bits}", offset + 12)
    if byte_rate != sample_rate * block_align:
        raise WavHeaderError(f"byte rate {byte_rate} inconsistent with header", offset + 8)
    return channels, sample_rate, bits, tag


def _decode(raw: bytes, channels: int, bits: int) -> np.ndarray:
    if bits == 16:
        ints = np.frombuffer(raw, dtype="<i2").astype(np.int32)
    else:
        b = np.frombuffer(raw, dtype=np.uint8).reshape(-1, 3).astype(np.int32)
        ints = b[:, 0] | (b[:, 1] << 8) | (b[:, 2] << 16)
        ints = (ints ^ 0x800000) - 0x800000
    return ints.reshape(-1, channels)


def _encode(ints: np.ndarray, bits: int) -> bytes:
    flat = ints.reshape(-1)
    if bits == 16:
        return flat.astype("<i2").tobytes()
    u = flat.astype(np.int64) & 0xFFFFFF
    out = np.empty((flat.size, 3), dtype=np.uint8)
    out[:, 0] = u & 0xFF
    out[:, 1] = (u >> 8) & 0xFF
    out[:, 2] = (u >> 16) & 0xFF
    return out.tobytes()


def read_wav(path) -> PcmBuffer:
    with open(path, "rb") as f:
        info = _parse_header(f)
        f.seek(info.data_offset)
        raw = f.read(info.data_size)
    ints = _decode(raw, info.channels, info.bit_depth)
    return PcmBuffer.from_integers(ints, info.sample_rate, info.bit_depth)


def iter_channel(path, index: int, block_frames: int = 1 << 16) -> Iterator[np.ndarray]:
    """Stream one channel of a WAV file as normalized float64 blocks.

    Memory use is bounded by ``block_frames`` regardless of file length.
    """
    with open(path, "rb") as f:
        info = _parse_header(f)
        if not 0 <= index < info.channels:
            raise SampleRangeError(f"channel {index} out of range for {info.channels}-channel file")
        scale = float(1 << (info.bit_depth - 1))
        f.seek(info.data_offset)
        remaining = info.n_frames
        while remaining > 0:
            n = min(block_frames, remaining)
            raw = f.read(n * info.block_align)
            ints = _decode(raw, info.channels, info.bit_depth)
            yield ints[:, index] / scale
            remaining -= n


def read_channel(path, index: int) -> PcmBuffer:
    """Read a single channel via the streaming reader."""
    info = read_wav_info(path)
    blocks = list(iter_channel(path, index))
    data = np.concatenate(blocks) if blocks else np.zeros(0)
    return PcmBuffer(data, info.sample_rate, info.bit_depth)


def write_wav(path, buffer: PcmBuffer, bit_depth: int | None = None) -> None:
    """Write canonical little-endian PCM.

    Mono/stereo 16-bit files use the plain PCM header; anything wider uses
    WAVE_FORMAT_EXTENSIBLE with no speaker mask.  Output bytes depend only
    on the buffer contents.
    """
    bit_depth = bit_depth or buffer.bit_depth
    if bit_depth not in SUPPORTED_DEPTHS:
        raise ValueError(f"bit depth must be one of {SUPPORTED_DEPTHS}, got {bit_depth}")
    payload = _encode(buffer.quantized(bit_depth), bit_depth)
    Path(path).write_bytes(wav_bytes(payload, buffer.channels, buffer.sample_rate, bit_depth))


def wav_bytes(payload: bytes, channels: int, sample_rate: int, bit_depth: int) -> bytes:
    block = channels * bit_depth // 8
    if channels <= 2 and bit_depth == 16:
        fmt = struct.pack("<HHIIHH", WAVE_FORMAT_PCM, channels, sample_rate,
                          sample_rate * block, block, bit_depth)
    else:
        fmt = struct.pack("<HHIIHHHHIH", WAVE_FORMAT_EXTENSIBLE, channels, sample_rate,
                          sample_rate * block, block, bit_depth, 22, bit_depth, 0,
                          WAVE_FORMAT_PCM) + _PCM_GUID_TAIL
    chunks = b"fmt " + struct.pack("<I", len(fmt)) + fmt
    chunks += b"data" + struct.pack("<I", len(payload)) + payload
    if len(payload) & 1:
        chunks += b"\x00"
    return b"RIFF" + struct.pack("<I", 4 + len(chunks)) + b"WAVE" + chunks


def read_data_bytes(path) -> bytes:
    """Raw bytes of the data chunk, for byte-level comparisons."""
    with open(path, "rb") as f:
        info = _parse_header(f)
        f.seek(info.data_offset)
        return f.read(info.data_size)


def extract_channel(buffer: PcmBuffer, index: int) -> PcmBuffer:
    if not 0 <= index < buffer.channels:
        raise SampleRangeError(f"channel {index} out of range for {buffer.channels}-channel buffer")
    return PcmBuffer(buffer.data[:, index].copy(), buffer.sample_rate, buffer.bit_depth)


def merge_channels(buffers: list[PcmBuffer]) -> PcmBuffer:
    if not buffers:
        raise ValueError("nothing to merge")
    first = buffers[0]
    for b in buffers[1:]:
        if (b.sample_rate, b.bit_depth, len(b)) != (first.sample_rate, first.bit_depth, len(first)):
            raise ValueError("buffers differ in sample rate, bit depth or length")
    return PcmBuffer(np.hstack([b.data for b in buffers]), first.sample_rate, first.bit_depth)


def concatenate(a: PcmBuffer, b: PcmBuffer) -> PcmBuffer:
    if (a.sample_rate, a.bit_depth, a.channels) != (b.sample_rate, b.bit_depth, b.channels):
        raise ValueError("buffers differ in sample rate, bit depth or channel count")
    return PcmBuffer(np.vstack([a.data, b.data]), a.sample_rate, a.bit_depth)


def _index(t, sample_rate: int) -> int:
    if isinstance(t, SampleTime):
        if t.sample_rate != sample_rate:
            raise ValueError(f"sample time at {t.sample_rate} Hz used on a {sample_rate} Hz buffer")
        return t.sample_index
    return int(t)


def trim(buffer: PcmBuffer, start: SampleTime | int, end: SampleTime | int) -> PcmBuffer:
    """Samples ``[start, end)`` of every channel, untouched."""
    s, e = _index(start, buffer.sample_rate), _index(end, buffer.sample_rate)
    if not 0 <= s <= e <= len(buffer):
        raise SampleRangeError(f"trim range [{s}, {e}) invalid for buffer of {len(buffer)} samples")
    return PcmBuffer(buffer.data[s:e].copy(), buffer.sample_rate, buffer.bit_depth)


def read_channel_range(path, index: int, start: int, stop: int) -> np.ndarray:
    """Normalized samples ``[start, stop)`` of one channel, read by seeking."""
    with open(path, "rb") as f:
        info = _parse_header(f)
        if not 0 <= index < info.channels:
            raise SampleRangeError(f"channel {index} out of range for {info.channels}-channel file")
        start, stop = max(0, start), min(stop, info.n_frames)
        if stop <= start:
            return np.zeros(0)
        f.seek(info.data_offset + start * info.block_align)
        raw = f.read((stop - start) * info.block_align)
    ints = _decode(raw, info.channels, info.bit_depth)
    return ints[:, index] / float(1 << (info.bit_depth - 1))
