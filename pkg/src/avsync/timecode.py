"""Non-drop-frame SMPTE timecode values and arithmetic.

Timecodes are immutable and bound to an integer frame rate.  The valid range
is one day, ``00:00:00:00`` through ``23:59:59:(fps-1)``; arithmetic that
would leave it raises rather than wrapping.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction
from functools import total_ordering

from .errors import TimecodeError, TimecodeParseError, TimecodeRangeError

SUPPORTED_RATES = (24, 25, 30, 50, 60)
SECONDS_PER_DAY = 86400

_TC_RE = re.compile(r"^(\d\d):(\d\d):(\d\d):(\d\d)$")


@dataclass(frozen=True)
class FrameRate:
    frames_per_second: int

    def __post_init__(self):
        fps = self.frames_per_second
        if isinstance(fps, bool) or not isinstance(fps, int):
            raise TimecodeError(f"frame rate must be an integer, got {fps!r}")
        if fps <= 0:
            raise TimecodeError(f"frame rate must be positive, got {fps}")
        if fps not in SUPPORTED_RATES:
            raise TimecodeError(f"unsupported frame rate {fps}; expected one of {SUPPORTED_RATES}")

    @property
    def fps(self) -> int:
        return self.frames_per_second

    @property
    def frames_per_day(self) -> int:
        return SECONDS_PER_DAY * self.frames_per_second

    def __str__(self):
        return f"{self.frames_per_second} fps"


def as_rate(rate: FrameRate | int) -> FrameRate:
    return rate if isinstance(rate, FrameRate) else FrameRate(rate)


@total_ordering
@dataclass(frozen=True)
class Timecode:
    hours: int
    minutes: int
    seconds: int
    frames: int
    rate: FrameRate

    def __post_init__(self):
        if not isinstance(self.rate, FrameRate):
            object.__setattr__(self, "rate", as_rate(self.rate))
        limits = (("hours", 24), ("minutes", 60), ("seconds", 60), ("frames", self.rate.fps))
        for name, limit in limits:
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, int):
                raise TimecodeError(f"{name} must be an integer, got {value!r}")
            if not 0 <= value < limit:
                raise TimecodeRangeError(f"{name}={value} outside 0..{limit - 1}")

    @classmethod
    def parse(cls, text: str, rate: FrameRate | int) -> Timecode:
        """Parse ``HH:MM:SS:FF`` (two zero-padded digits per field)."""
        rate = as_rate(rate)
        match = _TC_RE.match(text)
        if match is None:
            raise TimecodeParseError(text, _first_bad_position(text), "expected HH:MM:SS:FF")
        values = [int(g) for g in match.groups()]
        limits = (24, 60, 60, rate.fps)
        for i, (value, limit) in enumerate(zip(values, limits)):
            if value >= limit:
                raise TimecodeParseError(text, 3 * i, f"field value {value} must be < {limit}")
        return cls(*values, rate)

    def __str__(self):
        return f"{self.hours:02d}:{self.minutes:02d}:{self.seconds:02d}:{self.frames:02d}"

    @property
    def fps(self) -> int:
        return self.rate.fps

    def total_frames(self) -> int:
        return total_frames(self)

    def to_seconds(self) -> Fraction:
        """Exact position since midnight, in seconds."""
        return Fraction(total_frames(self), self.rate.fps)

    def __add__(self, delta: int) -> Timecode:
        if not isinstance(delta, int):
            return NotImplemented
        return add_frames(self, delta)

    def __sub__(self, other):
        if isinstance(other, int):
            return add_frames(self, -other)
        if isinstance(other, Timecode):
            _check_same_rate(self, other)
            return total_frames(self) - total_frames(other)
        return NotImplemented

    def __lt__(self, other):
        if not isinstance(other, Timecode):
            return NotImplemented
        _check_same_rate(self, other)
        return total_frames(self) < total_frames(other)


def _first_bad_position(text: str) -> int:
    template = "dd:dd:dd:dd"
    for i, ch in enumerate(text):
        if i >= len(template):
            return i
        if template[i] == "d" and not ch.isdigit():
            return i
        if template[i] == ":" and ch != ":":
            return i
    return len(text)


def _check_same_rate(a: Timecode, b: Timecode):
    if a.rate != b.rate:
        raise TimecodeError(f"cannot compare timecodes at {a.rate} and {b.rate}")


def total_frames(tc: Timecode) -> int:
    return ((tc.hours * 60 + tc.minutes) * 60 + tc.seconds) * tc.rate.fps + tc.frames


def from_total_frames(n: int, rate: FrameRate | int) -> Timecode:
    rate = as_rate(rate)
    if not 0 <= n < rate.frames_per_day:
        raise TimecodeRangeError(f"frame count {n} outside one day at {rate}")
    seconds, frames = divmod(n, rate.fps)
    minutes, seconds = divmod(seconds, 60)
    hours, minutes = divmod(minutes, 60)
    return Timecode(hours, minutes, seconds, frames, rate)


def add_frames(tc: Timecode, delta: int) -> Timecode:
    n = total_frames(tc) + delta
    if n < 0:
        raise TimecodeRangeError(f"{tc} {delta:+d} frames underflows 00:00:00:00")
    if n >= tc.rate.frames_per_day:
        raise TimecodeRangeError(f"{tc} {delta:+d} frames overflows the day boundary")
    return from_total_frames(n, tc.rate)


def round_half_away(x: Fraction) -> int:
    """Round an exact rational to the nearest integer, ties away from zero."""
    x = Fraction(x)
    q, r = divmod(abs(x.numerator), x.denominator)
    if 2 * r >= x.denominator:
        q += 1
    return q if x >= 0 else -q


@dataclass(frozen=True, order=True)
class SampleTime:
    sample_index: int
    sample_rate: int

    def __post_init__(self):
        if self.sample_rate <= 0:
            raise TimecodeError(f"sample rate must be positive, got {self.sample_rate}")
        if self.sample_index < 0:
            raise TimecodeError(f"sample index must be non-negative, got {self.sample_index}")

    @property
    def seconds(self) -> float:
        return self.sample_index / self.sample_rate


def to_sample_time(tc: Timecode, sample_rate: int) -> SampleTime:
    """Sample index at which ``tc`` begins, rounding half away from zero."""
    if sample_rate <= 0:
        raise TimecodeError(f"sample rate must be positive, got {sample_rate}")
    index = round_half_away(Fraction(total_frames(tc) * sample_rate, tc.rate.fps))
    return SampleTime(index, sample_rate)
