"""Timecode-based multi-camera / multi-channel audio alignment toolkit."""

from .align import (
    AlignmentResult,
    SessionManifest,
    SyntheticSessionSpec,
    align_session,
    emit_aligned_audio,
    generate_synthetic_session,
)
from .clocksim import (
    PtpExchange,
    ServoState,
    SimClock,
    WordClockConfig,
    estimate_offset,
    run_ptp_session,
    simulate_sampling,
    timestamp_spread,
)
from .errors import AvsyncError
from .ltc import LtcEncodeConfig, LtcFrame, bit_period_estimate, decode_ltc, encode_ltc
from .pcm_io import PcmBuffer, read_wav, trim, write_wav
from .timecode import FrameRate, SampleTime, Timecode, to_sample_time
from .verify import AvEventAnnotation, SyncReport, detect_onset, generate_test_stimulus, measure_av_offset

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult", "AvEventAnnotation", "AvsyncError", "FrameRate", "LtcEncodeConfig", "LtcFrame",
    "PcmBuffer", "PtpExchange", "SampleTime", "ServoState", "SessionManifest", "SimClock", "SyncReport",
    "SyntheticSessionSpec", "Timecode", "WordClockConfig", "align_session", "bit_period_estimate",
    "decode_ltc", "detect_onset", "emit_aligned_audio", "encode_ltc", "estimate_offset",
    "generate_synthetic_session", "generate_test_stimulus", "measure_av_offset", "read_wav",
    "run_ptp_session", "simulate_sampling", "timestamp_spread", "to_sample_time", "trim", "write_wav",
]
