from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from avsync.errors import TimecodeError, TimecodeParseError, TimecodeRangeError
from avsync.timecode import (
    SUPPORTED_RATES,
    FrameRate,
    SampleTime,
    Timecode,
    add_frames,
    from_total_frames,
    round_half_away,
    to_sample_time,
    total_frames,
)


def tc(text, fps):
    return Timecode.parse(text, fps)


@st.composite
def timecodes(draw, rate=None):
    fps = rate or draw(st.sampled_from(SUPPORTED_RATES))
    return Timecode(
        draw(st.integers(0, 23)), draw(st.integers(0, 59)), draw(st.integers(0, 59)),
        draw(st.integers(0, fps - 1)), FrameRate(fps),
    )


class TestFrameRate:
    @pytest.mark.parametrize("fps", SUPPORTED_RATES)
    def test_supported(self, fps):
        assert FrameRate(fps).fps == fps
        assert FrameRate(fps).frames_per_day == 86400 * fps

    @pytest.mark.parametrize("fps", [0, -30, 29, 120, 23])
    def test_rejected(self, fps):
        with pytest.raises(TimecodeError):
            FrameRate(fps)


@pytest.mark.parametrize("text,fps,frames", [
    ("00:00:00:00", 60, 0),
    ("01:00:00:00", 60, 216000),
    ("00:00:05:30", 60, 330),
])
def test_total_frames_examples(text, fps, frames):
    assert total_frames(tc(text, fps)) == frames
    assert from_total_frames(frames, fps) == tc(text, fps)


@pytest.mark.parametrize("start,delta,expected", [
    ("00:00:00:00", 1, "00:00:00:01"),
    ("00:00:00:29", 1, "00:00:01:00"),
    ("00:00:01:00", -1, "00:00:00:29"),
])
def test_add_frames_examples(start, delta, expected):
    assert str(add_frames(tc(start, 30), delta)) == expected


@pytest.mark.parametrize("text,fps,sr,index", [
    ("00:00:01:00", 60, 48000, 48000),
    ("00:00:00:30", 60, 48000, 24000),
    ("00:00:00:01", 60, 44100, 735),
])
def test_to_sample_time_examples(text, fps, sr, index):
    assert to_sample_time(tc(text, fps), sr) == SampleTime(index, sr)


def test_sample_rounding_half_away():
    # 1 frame @24 fps at 44100 Hz is 1837.5 samples
    assert to_sample_time(tc("00:00:00:01", 24), 44100).sample_index == 1838
    assert round_half_away(Fraction(5, 2)) == 3
    assert round_half_away(Fraction(-5, 2)) == -3
    assert round_half_away(Fraction(7, 3)) == 2
    assert round_half_away(Fraction(-7, 3)) == -2


def test_day_boundaries():
    last = tc("23:59:59:59", 60)
    with pytest.raises(TimecodeRangeError):
        add_frames(last, 1)
    with pytest.raises(TimecodeRangeError):
        add_frames(tc("00:00:00:00", 60), -1)
    with pytest.raises(TimecodeRangeError):
        from_total_frames(86400 * 60, 60)
    with pytest.raises(TimecodeRangeError):
        from_total_frames(-1, 60)


@pytest.mark.parametrize("text,position", [
    ("00:00:0a:00", 7),
    ("0:00:00:00", 1),
    ("00-00:00:00", 2),
    ("00:00:00:0", 10),
    ("00:00:00:000", 11),
    ("24:00:00:00", 0),
    ("00:60:00:00", 3),
    ("00:00:00:30", 9),
])
def test_parse_errors_report_position(text, position):
    with pytest.raises(TimecodeParseError) as info:
        tc(text, 30)
    assert info.value.position == position
    assert str(position) in str(info.value)


def test_field_validation():
    with pytest.raises(TimecodeRangeError):
        Timecode(0, 0, 0, 60, FrameRate(60))
    with pytest.raises(TimecodeError):
        Timecode(0, 0, 0, 1.0, FrameRate(60))


def test_operators_and_ordering():
    a = tc("10:00:00:00", 25)
    assert a + 25 == tc("10:00:01:00", 25)
    assert (a + 30) - a == 30
    assert a - 1 == tc("09:59:59:24", 25)
    assert a < a + 1
    with pytest.raises(TimecodeError):
        _ = a < tc("10:00:00:00", 30)
    assert a.to_seconds() == 36000


@given(timecodes())
def test_roundtrip(t):
    assert from_total_frames(total_frames(t), t.rate) == t
    assert Timecode.parse(str(t), t.rate) == t


@given(st.sampled_from(SUPPORTED_RATES).flatmap(lambda f: st.tuples(timecodes(f), timecodes(f))))
def test_monotonic(pair):
    a, b = pair
    lex = (a.hours, a.minutes, a.seconds, a.frames) < (b.hours, b.minutes, b.seconds, b.frames)
    assert lex == (total_frames(a) < total_frames(b))


@given(timecodes(), st.integers(-10**6, 10**6), st.integers(-10**6, 10**6))
def test_additivity(t, a, b):
    n = total_frames(t)
    day = t.rate.frames_per_day
    if 0 <= n + a < day and 0 <= n + a + b < day:
        assert add_frames(add_frames(t, a), b) == add_frames(t, a + b)
        assert total_frames(add_frames(t, a)) == n + a


@given(timecodes(), st.sampled_from([44100, 48000, 96000]))
def test_sample_time_matches_exact_rational(t, sr):
    exact = Fraction(total_frames(t) * sr, t.rate.fps)
    idx = to_sample_time(t, sr).sample_index
    assert abs(idx - exact) <= Fraction(1, 2)
    if exact - int(exact) == Fraction(1, 2):
        assert idx == int(exact) + 1
