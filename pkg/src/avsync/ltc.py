"""SMPTE linear timecode (LTC) over audio.

Frames are 80 bits, transmitted bit 0 first, with the usual SMPTE 12M layout:
BCD time digits interleaved with eight user-bit nibbles, a polarity
correction bit (27 for 24/30/60 fps, 59 for 25/50 fps) and the sync word
``0011111111111101`` in bits 64-79.  Rates above 30 fps carry one 80-bit
frame per video frame; the BCD frame field then counts frame pairs and bit 58
marks the second frame of each pair, since two frame-tens bits cannot hold 59.

The line code is biphase mark: the level flips at every bit boundary and a
``1`` bit flips again mid-cell.  Decoding classifies intervals between zero
crossings as half or whole bit cells against a tracked bit period.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.ndimage import uniform_filter1d

from .errors import InsufficientTransitionsError, NoLtcFoundError, TimecodeError
from .pcm_io import PcmBuffer
from .timecode import (
    SUPPORTED_RATES,
    FrameRate,
    Timecode,
    add_frames,
    as_rate,
    from_total_frames,
    total_frames,
)

BITS_PER_FRAME = 80
SYNC_WORD = (0, 0, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 0, 1)
_SYNC_REG = int("".join(map(str, SYNC_WORD)), 2)

USER_BIT_POSITIONS = (4, 12, 20, 28, 36, 44, 52, 60)
DROP_FRAME_BIT = 10
COLOR_FRAME_BIT = 11
FRAME_PAIR_BIT = 58

# (first bit, width) of each BCD field
_FIELDS = {
    "frame_units": (0, 4),
    "frame_tens": (8, 2),
    "seconds_units": (16, 4),
    "seconds_tens": (24, 3),
    "minutes_units": (32, 4),
    "minutes_tens": (40, 3),
    "hours_units": (48, 4),
    "hours_tens": (56, 2),
}

MIN_SAMPLES_PER_HALF_BIT = 2.5
DC_WINDOW_S = 0.01


def parity_bit(fps: int) -> int:
    return 59 if fps in (25, 50) else 27


def _put(bits: list[int], start: int, width: int, value: int):
    for i in range(width):
        bits[start + i] = (value >> i) & 1


def _get(bits, start: int, width: int) -> int:
    return sum(int(bits[start + i]) << i for i in range(width))


@dataclass(frozen=True)
class LtcFrame:
    bits: tuple

    def __post_init__(self):
        if len(self.bits) != BITS_PER_FRAME:
            raise ValueError(f"LTC frame needs {BITS_PER_FRAME} bits, got {len(self.bits)}")

    @classmethod
    def from_timecode(cls, tc: Timecode, user_bits: int = 0, color_frame: bool = False) -> LtcFrame:
        fps = tc.rate.fps
        bits = [0] * BITS_PER_FRAME
        frame_field = tc.frames // 2 if fps > 30 else tc.frames
        for name, value in (
            ("frame", frame_field),
            ("seconds", tc.seconds),
            ("minutes", tc.minutes),
            ("hours", tc.hours),
        ):
            _put(bits, *_FIELDS[name + "_units"], value % 10)
            _put(bits, *_FIELDS[name + "_tens"], value // 10)
        if fps > 30:
            bits[FRAME_PAIR_BIT] = tc.frames % 2
        bits[COLOR_FRAME_BIT] = int(color_frame)
        for i, pos in enumerate(USER_BIT_POSITIONS):
            _put(bits, pos, 4, (user_bits >> (4 * i)) & 0xF)
        bits[64:80] = SYNC_WORD
        p = parity_bit(fps)
        if bits.count(0) % 2:
            bits[p] ^= 1
        return cls(tuple(bits))

    def sync_ok(self) -> bool:
        return tuple(self.bits[64:80]) == SYNC_WORD

    def parity_ok(self) -> bool:
        return self.bits.count(0) % 2 == 0

    @property
    def user_bits(self) -> int:
        return sum(_get(self.bits, pos, 4) << (4 * i) for i, pos in enumerate(USER_BIT_POSITIONS))

    @property
    def drop_frame(self) -> bool:
        return bool(self.bits[DROP_FRAME_BIT])

    def timecode(self, rate: FrameRate | int) -> Timecode:
        """Decode the BCD fields; raises ``TimecodeError`` on invalid digits."""
        rate = as_rate(rate)
        digits = {name: _get(self.bits, *spec) for name, spec in _FIELDS.items()}
        for name, value in digits.items():
            if name.endswith("units") and value > 9:
                raise TimecodeError(f"BCD digit {name}={value} is not decimal")
        frames = digits["frame_tens"] * 10 + digits["frame_units"]
        if rate.fps > 30:
            frames = 2 * frames + self.bits[FRAME_PAIR_BIT]
        return Timecode(
            digits["hours_tens"] * 10 + digits["hours_units"],
            digits["minutes_tens"] * 10 + digits["minutes_units"],
            digits["seconds_tens"] * 10 + digits["seconds_units"],
            frames,
            rate,
        )


@dataclass(frozen=True)
class LtcEncodeConfig:
    rate: FrameRate
    sample_rate: int
    amplitude: float = 0.5
    start: Timecode | None = None
    user_bits: int = 0

    def __post_init__(self):
        rate = as_rate(self.rate)
        object.__setattr__(self, "rate", rate)
        if self.start is None:
            object.__setattr__(self, "start", Timecode(0, 0, 0, 0, rate))
        elif self.start.rate != rate:
            raise TimecodeError(f"start timecode is at {self.start.rate}, config at {rate}")
        if not 0 < self.amplitude <= 1:
            raise ValueError(f"amplitude must be in (0, 1], got {self.amplitude}")
        min_rate = MIN_SAMPLES_PER_HALF_BIT * 2 * BITS_PER_FRAME * rate.fps
        if self.sample_rate < min_rate:
            raise ValueError(
                f"sample rate {self.sample_rate} too low for {rate}; need >= {min_rate:g}"
            )


def frame_start_sample(k: int, sample_rate: int, fps: int) -> int:
    """First sample of frame ``k``: ``round(k * sample_rate / fps)``, ties up."""
    return (2 * k * sample_rate + fps) // (2 * fps)


def encode_ltc(config: LtcEncodeConfig, n_frames: int) -> PcmBuffer:
    """Synthesize ``n_frames`` consecutive LTC frames as a mono buffer."""
    if n_frames < 1:
        raise ValueError("n_frames must be positive")
    fps, sr = config.rate.fps, config.sample_rate
    add_frames(config.start, n_frames - 1)  # range check up front

    first = total_frames(config.start)
    bits = np.array(
        [
            LtcFrame.from_timecode(from_total_frames(first + k, config.rate), config.user_bits).bits
            for k in range(n_frames)
        ],
        dtype=np.int64,
    )
    k = np.arange(n_frames + 1, dtype=np.int64)
    starts = (2 * k * sr + fps) // (2 * fps)
    lengths = np.diff(starts)
    h = np.arange(2 * BITS_PER_FRAME, dtype=np.int64)
    # half-cell edges, each rounded half up within its frame
    edges = starts[:-1, None] + (2 * h[None, :] * lengths[:, None] + 2 * BITS_PER_FRAME) // (
        4 * BITS_PER_FRAME
    )
    widths = np.diff(np.append(edges.reshape(-1), starts[-1]))

    flips = np.empty((n_frames, 2 * BITS_PER_FRAME), dtype=np.int64)
    flips[:, 0::2] = 1
    flips[:, 1::2] = bits
    # level before the first boundary is negative, so the stream opens high
    levels = np.where(np.cumsum(flips.reshape(-1)) % 2 == 1, 1.0, -1.0) * config.amplitude
    return PcmBuffer(np.repeat(levels, widths), sr)


@dataclass(frozen=True)
class DecodedFrame:
    timecode: Timecode
    first_sample_index: int
    user_bits: int = 0


@dataclass
class DecodeDiagnostics:
    samples: int = 0
    transitions: int = 0
    bit_rate: float | None = None
    samples_per_bit: float | None = None
    fps: int | None = None
    glitches: int = 0
    bits: int = 0

    def summary(self) -> str:
        rate = f"{self.bit_rate:.1f} bit/s" if self.bit_rate else "unknown bit rate"
        period = f"{self.samples_per_bit:.2f} samples/bit" if self.samples_per_bit else "no bit period"
        return f"{self.transitions} transitions, {rate}, {period}, {self.glitches} glitches"

    def as_dict(self) -> dict:
        return {
            "samples": self.samples,
            "transitions": self.transitions,
            "bit_rate": self.bit_rate,
            "samples_per_bit": self.samples_per_bit,
            "fps": self.fps,
            "glitches": self.glitches,
            "bits": self.bits,
        }


@dataclass
class LtcDecodeResult:
    frames: list[DecodedFrame]
    discarded: int
    rate: FrameRate
    sample_rate: int
    diagnostics: DecodeDiagnostics = field(default_factory=DecodeDiagnostics)

    @property
    def start_timecode(self) -> Timecode | None:
        return self.frames[0].timecode if self.frames else None

    @property
    def end_timecode(self) -> Timecode | None:
        return self.frames[-1].timecode if self.frames else None

    def timecodes(self) -> list[Timecode]:
        return [f.timecode for f in self.frames]

    def shifted(self, offset: int) -> LtcDecodeResult:
        """Same result with every sample index moved by ``offset``."""
        frames = [DecodedFrame(f.timecode, f.first_sample_index + offset, f.user_bits) for f in self.frames]
        return LtcDecodeResult(frames, self.discarded, self.rate, self.sample_rate, self.diagnostics)


def _mono(buf) -> tuple[np.ndarray, int | None]:
    if isinstance(buf, PcmBuffer):
        return buf.mono, buf.sample_rate
    return np.asarray(buf, dtype=np.float64), None


def _prefilter(x: np.ndarray, sample_rate: int) -> np.ndarray:
    """Remove DC and slow wander: subtract a centered moving average.

    Zero-phase and free of the edge transients a reflected IIR would add to
    a square wave.
    """
    width = max(3, int(round(sample_rate * DC_WINDOW_S)))
    if len(x) <= width:
        return x - np.mean(x)
    return x - uniform_filter1d(x, width, mode="reflect")


def find_transitions(x: np.ndarray) -> tuple[np.ndarray, float]:
    """Polarity transitions of a (prefiltered) bilevel signal.

    Returns fractional sample positions and the hysteresis threshold used.
    A Schmitt trigger at a quarter of the 95th-percentile amplitude decides
    that a transition happened; its position is the interpolated zero
    crossing just before the trigger fired.  The first active sample is
    reported as a transition too, since a stream may open on a bit boundary.
    """
    n = len(x)
    if n == 0:
        return np.zeros(0), 0.0
    amp = float(np.percentile(np.abs(x), 95))
    h = max(0.25 * amp, 1e-6)
    state = np.zeros(n, dtype=np.int8)
    state[x > h] = 1
    state[x < -h] = -1
    active = np.flatnonzero(state)
    if active.size == 0:
        return np.zeros(0), h
    held = state[active]
    switch = active[1:][held[1:] != held[:-1]]

    neg = np.signbit(x)
    zc = np.flatnonzero(neg[1:] != neg[:-1]) + 1  # first sample on the new side
    j = np.searchsorted(zc, switch, side="right") - 1
    z = zc[j]
    a, b = x[z - 1], x[z]
    pos = (z - 1) + a / (a - b)
    return np.concatenate([[float(active[0])], pos]), h


def _activity_end(x: np.ndarray, h: float) -> float:
    idx = np.flatnonzero(np.abs(x) > h)
    return float(idx[-1] + 1) if idx.size else 0.0


def _period_from_intervals(d: np.ndarray) -> float:
    m = float(np.median(d))
    long_frac = np.mean(d > 1.5 * m)
    short_frac = np.mean(d < 0.75 * m)
    period = m if short_frac >= long_frac else 2 * m
    for _ in range(3):
        ok = (d > 0.25 * period) & (d < 1.5 * period)
        long = ok & (d > 0.75 * period)
        short = ok & ~long
        weight = long.sum() + 0.5 * short.sum()
        if weight == 0:
            break
        period = float(d[ok].sum() / weight)
    return period


def bit_period_estimate(signal, sample_rate: int | None = None) -> float:
    """Dominant bit rate of a biphase-mark signal, in bits per second."""
    x, sr = _mono(signal)
    sr = sample_rate or sr
    if sr is None:
        raise ValueError("sample_rate is required for raw arrays")
    pos, _ = find_transitions(_prefilter(x, sr))
    if len(pos) < 2 * BITS_PER_FRAME:
        raise InsufficientTransitionsError(
            f"only {len(pos)} transitions; need at least {2 * BITS_PER_FRAME} to estimate bit rate"
        )
    return sr / _period_from_intervals(np.diff(pos[1:]))


def infer_rate(bit_rate: float, tolerance: float = 0.02) -> FrameRate | None:
    fps = bit_rate / BITS_PER_FRAME
    best = min(SUPPORTED_RATES, key=lambda r: abs(fps - r))
    return FrameRate(best) if abs(fps - best) <= tolerance * best else None


class _FrameAssembler:
    """Turns a bit stream into validated frames; tracks lock and discards."""

    def __init__(self, rate: FrameRate):
        self.rate = rate
        self.frames: list[DecodedFrame] = []
        self.discarded = 0
        self.bits: list[int] = []
        self.starts: list[float] = []
        self.reg = 0
        self.locked = False
        self.since_frame = 0

    def reset(self):
        if self.locked and self.since_frame > 0:
            self.discarded += 1
        self.locked = False
        self.bits.clear()
        self.starts.clear()
        self.reg = 0
        self.since_frame = 0

    def push(self, bit: int, start: float):
        self.bits.append(bit)
        self.starts.append(start)
        if len(self.bits) > 4 * BITS_PER_FRAME:
            del self.bits[:-BITS_PER_FRAME]
            del self.starts[:-BITS_PER_FRAME]
        self.reg = ((self.reg << 1) | bit) & 0xFFFF
        self.since_frame += 1
        if self.locked:
            if self.since_frame < BITS_PER_FRAME:
                return
            if self.reg != _SYNC_REG:
                self.discarded += 1
                self.locked = False
                self.since_frame = 0
                return
        elif self.reg != _SYNC_REG or len(self.bits) < BITS_PER_FRAME:
            return
        self._emit()

    def _emit(self):
        frame = LtcFrame(tuple(self.bits[-BITS_PER_FRAME:]))
        start = self.starts[-BITS_PER_FRAME]
        self.since_frame = 0
        try:
            if not frame.parity_ok():
                raise TimecodeError("parity")
            tc = frame.timecode(self.rate)
        except TimecodeError:
            self.discarded += 1
            self.locked = False
            return
        if self.frames and tc <= self.frames[-1].timecode:
            self.discarded += 1
            self.locked = False
            return
        self.locked = True
        self.frames.append(DecodedFrame(tc, int(math.ceil(start)), frame.user_bits))


def decode_ltc(signal, rate_hint: FrameRate | int | None = None, sample_rate: int | None = None) -> LtcDecodeResult:
    """Recover every complete LTC frame in ``signal``.

    Polarity, amplitude and start phase do not matter.  Frames failing the
    sync, parity or BCD checks, or going backwards in time, are counted in
    ``discarded`` and never returned.
    """
    x, sr = _mono(signal)
    sr = sample_rate or sr
    if sr is None:
        raise ValueError("sample_rate is required for raw arrays")
    diag = DecodeDiagnostics(samples=len(x))
    if len(x) == 0:
        raise NoLtcFoundError("empty signal", diag)

    y = _prefilter(x, sr)
    pos, h = find_transitions(y)
    diag.transitions = max(len(pos) - 1, 0)
    if len(pos) < 3:
        raise NoLtcFoundError("no LTC found", diag)

    period = _period_from_intervals(np.diff(pos[1:]) if len(pos) > 3 else np.diff(pos))
    diag.samples_per_bit = period
    diag.bit_rate = sr / period

    rate = as_rate(rate_hint) if rate_hint is not None else infer_rate(diag.bit_rate)
    if rate is None:
        raise NoLtcFoundError("no LTC found: bit rate matches no supported frame rate", diag)
    diag.fps = rate.fps
    # nominal period anchors the tracker when the estimate is off
    nominal = sr / (BITS_PER_FRAME * rate.fps)
    if not 0.9 < period / nominal < 1.1:
        period = nominal

    asm = _FrameAssembler(rate)
    pending = None  # start of a half cell awaiting its partner
    pending_len = 0.0
    gain = 0.05
    prev = float(pos[0])
    for p in pos[1:]:
        d = p - prev
        if d < 0.25 * period or d > 1.5 * period:
            diag.glitches += 1
            asm.reset()
            pending = None
        elif d > 0.75 * period:
            if pending is not None:
                # half cell followed by a whole one: pairing was out of phase
                diag.glitches += 1
                asm.reset()
                pending = None
            asm.push(0, prev)
            diag.bits += 1
            period += gain * (d - period)
        elif pending is None:
            pending, pending_len = prev, d
        else:
            asm.push(1, pending)
            diag.bits += 1
            period += gain * (pending_len + d - period)
            pending = None
        prev = p

    # the final cell has no closing transition; it ends where the signal does
    tail = _activity_end(y, h) - prev
    if pending is not None and 0.25 * period <= tail <= 0.75 * period:
        asm.push(1, pending)
        diag.bits += 1
    elif pending is None and 0.75 * period < tail <= 1.5 * period:
        asm.push(0, prev)
        diag.bits += 1

    if not asm.frames:
        raise NoLtcFoundError("no LTC found", diag)
    return LtcDecodeResult(asm.frames, asm.discarded, rate, sr, diag)


def expected_frame_samples(sample_rate: int, fps: int) -> Fraction:
    return Fraction(sample_rate, fps)
