"""Event-based audio/video sync measurement.

An impact sound is located in the aligned audio and compared with the video
frame in which the visual contact is annotated.  Offsets are
``onset_time - visual_time``: negative means the audio leads.  A measurement
passes when ``|offset| < threshold`` (strict), so a lead of exactly one frame
fails a one-frame threshold.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .align import (
    AlignmentResult,
    GroundTruth,
    SessionManifest,
    SyntheticSessionSpec,
    align_session,
    aligned_buffer,
    generate_synthetic_session,
)
from .errors import ConfigError, NoOnsetError
from .pcm_io import PcmBuffer, extract_channel
from .timecode import FrameRate, as_rate

SCHEMA_VERSION = 1
HOP = 32
MIN_DURATION_S = 0.002
DEFAULT_FACTOR = 10.0
ABSOLUTE_FLOOR = 1e-10


@dataclass(frozen=True)
class AvEventAnnotation:
    visual_event_frame: int
    fps: FrameRate
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "fps", as_rate(self.fps))
        if isinstance(self.visual_event_frame, bool) or not isinstance(self.visual_event_frame, int):
            raise ConfigError("visual_event_frame must be an integer")
        if self.visual_event_frame < 0:
            raise ConfigError("visual_event_frame must be >= 0")

    @property
    def visual_time(self) -> Fraction:
        return Fraction(self.visual_event_frame, self.fps.fps)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "visual_event_frame": self.visual_event_frame,
            "fps": self.fps.fps,
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, d: dict) -> AvEventAnnotation:
        try:
            return cls(d["visual_event_frame"], int(d["fps"]), str(d.get("description", "")))
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed annotation: {exc}") from None

    @classmethod
    def load(cls, path) -> AvEventAnnotation:
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@dataclass(frozen=True)
class SyncReport:
    onset_sample: int
    sample_rate: int
    visual_frame: int
    fps: int
    offset_exact: Fraction
    threshold_exact: Fraction

    @property
    def onset_time(self) -> float:
        return self.onset_sample / self.sample_rate

    @property
    def visual_time(self) -> float:
        return self.visual_frame / self.fps

    @property
    def offset(self) -> float:
        return float(self.offset_exact)

    @property
    def threshold(self) -> float:
        return float(self.threshold_exact)

    @property
    def passed(self) -> bool:
        return abs(self.offset_exact) < self.threshold_exact

    @property
    def offset_frames(self) -> float:
        return float(self.offset_exact * self.fps)

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "sync_report",
            "onset_sample": self.onset_sample,
            "onset_time_s": self.onset_time,
            "visual_frame": self.visual_frame,
            "visual_time_s": self.visual_time,
            "offset_s": self.offset,
            "offset_ms": 1000.0 * self.offset,
            "offset_frames": self.offset_frames,
            "threshold_s": self.threshold,
            "pass": self.passed,
            "sign_convention": "offset = onset - visual; negative means audio leads",
        }

    def summary(self) -> str:
        lead = "audio leads" if self.offset < 0 else "audio lags" if self.offset > 0 else "in sync"
        return "\n".join([
            f"acoustic onset   sample {self.onset_sample} ({1000 * self.onset_time:.3f} ms)",
            f"visual event     frame {self.visual_frame} @ {self.fps} fps ({1000 * self.visual_time:.3f} ms)",
            f"offset           {1000 * self.offset:+.3f} ms ({self.offset_frames:+.3f} frames, {lead})",
            f"threshold        {1000 * self.threshold:.3f} ms (strict)",
            f"result           {'PASS' if self.passed else 'FAIL'}",
        ])


def _energy(x: np.ndarray, width: int) -> np.ndarray:
    """Mean square over ``x[i:i+width]`` for every i (NaN-free, float64)."""
    c = np.concatenate([[0.0], np.cumsum(x * x)])
    return (c[width:] - c[:-width]) / width


def detect_onset(audio, search_window: tuple[int, int] | None = None, factor: float = DEFAULT_FACTOR,
                 hop: int = HOP, min_duration: float = MIN_DURATION_S,
                 sample_rate: int | None = None) -> int:
    """First sample where short-window energy rises above the noise floor.

    Window energy is the mean square over ``hop * (m + 1)`` samples, with
    ``m`` hops spanning ``min_duration``.  The threshold is ``factor`` times
    the median window energy (the noise floor).  A candidate window must be
    followed by ``m - 1`` further above-threshold windows at hop spacing; the
    onset is then the first sample in it whose trailing ``hop``-sample energy
    crosses the threshold.  Energies are evaluated at every sample, so a
    shifted input gives an equally shifted onset.
    """
    if isinstance(audio, PcmBuffer):
        x, sr = audio.mono, audio.sample_rate
    else:
        x, sr = np.asarray(audio, dtype=np.float64), sample_rate
    if sr is None:
        raise ValueError("sample_rate is required for raw arrays")
    if len(x) == 0:
        raise ValueError("audio is empty")
    lo, hi = search_window or (0, len(x))
    lo, hi = max(0, int(lo)), min(len(x), int(hi))
    seg = x[lo:hi]

    m = max(1, math.ceil(min_duration * sr / hop))
    width = hop * (m + 1)
    if len(seg) < width + (m - 1) * hop:
        raise NoOnsetError(float(np.mean(seg * seg)) if len(seg) else 0.0)
    energy = _energy(seg, width)
    floor = float(np.median(energy))
    threshold = max(factor * floor, ABSOLUTE_FLOOR)

    above = energy > threshold
    n = len(above) - (m - 1) * hop
    sustained = above[:n].copy()
    for q in range(1, m):
        sustained &= above[q * hop: q * hop + n]
    hits = np.flatnonzero(sustained)
    if hits.size == 0:
        raise NoOnsetError(floor)
    i = int(hits[0])

    # trailing energy: fine[k] covers seg[i + k - hop + 1 : i + k + 1]
    before = seg[max(0, i - hop + 1): i]
    padded = np.concatenate([np.zeros(hop - 1 - len(before)), before, seg[i: i + width]])
    fine = _energy(padded, hop)
    k = np.flatnonzero(fine > threshold)
    return lo + i + (int(k[0]) if k.size else 0)


def measure_av_offset(audio, annotation: AvEventAnnotation, threshold: float | Fraction | None = None,
                      search_window: tuple[int, int] | None = None, factor: float = DEFAULT_FACTOR) -> SyncReport:
    """Onset-vs-visual offset of one event in aligned audio (sample 0 = video frame 0)."""
    if not isinstance(audio, PcmBuffer):
        raise TypeError("audio must be a PcmBuffer")
    if annotation.visual_time * audio.sample_rate > len(audio):
        raise ConfigError("annotated frame lies beyond the end of the audio")
    onset = detect_onset(audio, search_window, factor)
    fps = annotation.fps.fps
    if threshold is None:
        limit = Fraction(1, fps)
    elif isinstance(threshold, float):
        # 0.01 means one hundredth, not its binary approximation
        limit = Fraction(threshold).limit_denominator(10**9)
    else:
        limit = Fraction(threshold)
    if limit <= 0:
        raise ConfigError("threshold must be positive")
    offset = Fraction(onset, audio.sample_rate) - annotation.visual_time
    return SyncReport(onset, audio.sample_rate, annotation.visual_event_frame, fps, offset, limit)


# -- synthetic stimulus -------------------------------------------------------

@dataclass
class Stimulus:
    wav_path: Path
    manifest: SessionManifest
    annotation: AvEventAnnotation
    truth: GroundTruth
    injected_offset: float
    mic_channel: int = 0


def generate_test_stimulus(out_dir, event_time: float = 1.0, fps: int = 60, sample_rate: int = 48000,
                           injected_av_offset: float = 0.0, ltc_fps: int | None = None,
                           seed: int = 0, name: str = "stimulus", **session) -> Stimulus:
    """Session whose mic 0 carries an impact displaced from its visual frame.

    The visual contact is frame ``round(event_time * fps)`` of the video; the
    click sounds ``injected_av_offset`` seconds after that frame starts.
    """
    frame = round(event_time * fps)
    spec = SyntheticSessionSpec(
        ltc_fps=ltc_fps or fps,
        video_fps=fps,
        sample_rate=sample_rate,
        video_duration_frames=session.pop("video_duration_frames", frame + 2 * fps),
        events=(Fraction(frame, fps) + Fraction(injected_av_offset).limit_denominator(10**9),),
        seed=seed,
        **session,
    )
    wav, manifest, truth = generate_synthetic_session(spec, out_dir, name)
    annotation = AvEventAnnotation(frame, FrameRate(fps), "synthetic impact")
    annotation.save(Path(out_dir) / f"{name}.annotation.json")
    return Stimulus(wav, manifest, annotation, truth, injected_av_offset)


def run_pipeline(stimulus: Stimulus, subframe: bool = True,
                 threshold: float | None = None) -> tuple[AlignmentResult, SyncReport]:
    """Align the stimulus session, then measure the event offset on the mic channel."""
    result = align_session(stimulus.manifest, subframe=subframe)
    aligned, _, _ = aligned_buffer(stimulus.manifest, result)
    mic = extract_channel(aligned, stimulus.mic_channel)
    return result, measure_av_offset(mic, stimulus.annotation, threshold)
