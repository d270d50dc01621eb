"""Exception hierarchy shared by every module.

``AvsyncError`` marks failures caused by bad input (malformed files, invalid
timecodes, undecodable signals).  The CLI maps it to exit status 2; anything
else escaping a command is treated as an internal error.
"""


class AvsyncError(Exception):
    """Base class for input-attributable failures."""


class TimecodeError(AvsyncError, ValueError):
    pass


class TimecodeParseError(TimecodeError):
    """Timecode text does not match ``HH:MM:SS:FF``.

    ``position`` is the zero-based character offset of the first bad character.
    """

    def __init__(self, text: str, position: int, reason: str):
        self.text = text
        self.position = position
        self.reason = reason
        super().__init__(f"invalid timecode {text!r} at position {position}: {reason}")


class TimecodeRangeError(TimecodeError):
    """Arithmetic left the 00:00:00:00 .. 23:59:59:FF day range."""


class WavError(AvsyncError):
    """Malformed or unsupported RIFF/WAVE input.

    ``offset`` is the byte offset in the file at which the problem was found.
    """

    def __init__(self, message: str, offset: int | None = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


class WavHeaderError(WavError):
    pass


class WavCodecError(WavError):
    pass


class WavTruncatedError(WavError):
    pass


class NoLtcFoundError(AvsyncError):
    """No valid LTC frame could be decoded.

    Carries the decoder diagnostics gathered before giving up.
    """

    def __init__(self, message: str, diagnostics=None):
        self.diagnostics = diagnostics
        if diagnostics is not None:
            message = f"{message} ({diagnostics.summary()})"
        super().__init__(message)


class InsufficientTransitionsError(AvsyncError):
    pass


class AlignmentError(AvsyncError):
    pass


class PaddingError(AlignmentError):
    """Audio does not fully encompass the video interval."""

    def __init__(self, lead_deficit_ms: float, trail_deficit_ms: float):
        self.lead_deficit_ms = lead_deficit_ms
        self.trail_deficit_ms = trail_deficit_ms
        parts = []
        if lead_deficit_ms > 0:
            parts.append(f"{lead_deficit_ms:.3f} ms missing before video start")
        if trail_deficit_ms > 0:
            parts.append(f"{trail_deficit_ms:.3f} ms missing after video end")
        super().__init__("audio does not encompass video: " + ", ".join(parts))


class LtcDiscontinuityError(AlignmentError):
    pass


class NoOnsetError(AvsyncError):
    def __init__(self, noise_floor: float):
        self.noise_floor = noise_floor
        super().__init__(f"no onset found (measured noise floor {noise_floor:.3e} mean-square)")


class ConfigError(AvsyncError, ValueError):
    pass


class SampleRangeError(AvsyncError, IndexError):
    """Channel index or sample range outside a buffer."""
