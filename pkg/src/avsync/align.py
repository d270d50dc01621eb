"""Timecode-based audio/video alignment.

A session is one multi-channel recording whose LTC channel carries the same
timecode the master camera stamps into its video.  Alignment decodes the LTC
near the video's start and end, converts those instants into audio sample
indices and trims the audio losslessly to exactly the video interval.

By default the trim points are refined inside the LTC frame using the sample
position where the decoded frame begins.  With ``subframe=False`` the result
is quantized to whole LTC frames, as trimming by timecode in an editor would.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import pcm_io
from .errors import (
    AlignmentError,
    ConfigError,
    LtcDiscontinuityError,
    NoLtcFoundError,
    PaddingError,
    TimecodeError,
)
from .ltc import LtcDecodeResult, LtcEncodeConfig, decode_ltc, encode_ltc
from .pcm_io import PcmBuffer
from .timecode import (
    FrameRate,
    SampleTime,
    Timecode,
    add_frames,
    as_rate,
    from_total_frames,
    round_half_away,
    total_frames,
)

SCHEMA_VERSION = 1
DECODE_WINDOW_S = 2.0


@dataclass(frozen=True)
class VideoEntry:
    id: str
    start_timecode: Timecode
    duration_frames: int
    fps: FrameRate

    @property
    def start_seconds(self) -> Fraction:
        return self.start_timecode.to_seconds()

    @property
    def end_seconds(self) -> Fraction:
        return self.start_seconds + Fraction(self.duration_frames, self.fps.fps)


@dataclass(frozen=True)
class AudioSource:
    paths: tuple[Path, ...]
    ltc_channel_index: int
    sample_rate: int


@dataclass(frozen=True)
class SessionManifest:
    audio: AudioSource
    videos: tuple[VideoEntry, ...]
    ltc_rate: FrameRate

    def __post_init__(self):
        if not self.videos:
            raise ConfigError("manifest lists no videos")
        rates = {v.fps for v in self.videos}
        if len(rates) > 1:
            raise ConfigError(f"videos must share one frame rate, found {sorted(r.fps for r in rates)}")

    @property
    def video_fps(self) -> FrameRate:
        return self.videos[0].fps

    @property
    def video_start(self) -> VideoEntry:
        return min(self.videos, key=lambda v: v.start_seconds)

    @property
    def video_interval(self) -> tuple[Fraction, Fraction]:
        return (
            min(v.start_seconds for v in self.videos),
            max(v.end_seconds for v in self.videos),
        )

    def to_dict(self, relative_to: Path | None = None) -> dict:
        def rel(p: Path) -> str:
            if relative_to is not None:
                try:
                    return p.resolve().relative_to(relative_to).as_posix()
                except ValueError:
                    pass
            return str(p)

        paths = [rel(p) for p in self.audio.paths]
        return {
            "schema_version": SCHEMA_VERSION,
            "audio": {
                "path": paths[0] if len(paths) == 1 else paths,
                "ltc_channel_index": self.audio.ltc_channel_index,
                "sample_rate": self.audio.sample_rate,
            },
            "ltc_rate": self.ltc_rate.fps,
            "videos": [
                {
                    "id": v.id,
                    "start_timecode": str(v.start_timecode),
                    "duration_frames": v.duration_frames,
                    "fps": v.fps.fps,
                }
                for v in self.videos
            ],
        }

    def save(self, path):
        path = Path(path)
        path.write_text(json.dumps(self.to_dict(path.parent.resolve()), indent=2) + "\n")

    @classmethod
    def from_dict(cls, d: dict, base_dir: Path | None = None) -> SessionManifest:
        try:
            audio = d["audio"]
            raw_paths = audio["path"]
            raw_paths = [raw_paths] if isinstance(raw_paths, str) else list(raw_paths)
            base = Path(base_dir) if base_dir else Path(".")
            paths = tuple(p if p.is_absolute() else base / p for p in map(Path, raw_paths))
            source = AudioSource(paths, int(audio["ltc_channel_index"]), int(audio["sample_rate"]))
            ltc_rate = as_rate(int(d["ltc_rate"]))
            videos = []
            for i, v in enumerate(d["videos"]):
                fps = as_rate(int(v["fps"]))
                videos.append(
                    VideoEntry(
                        str(v.get("id", f"video{i}")),
                        Timecode.parse(v["start_timecode"], fps),
                        int(v["duration_frames"]),
                        fps,
                    )
                )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed manifest: missing or invalid {exc}") from None
        if any(v.duration_frames <= 0 for v in videos):
            raise ConfigError("video duration_frames must be positive")
        return cls(source, tuple(videos), ltc_rate)

    @classmethod
    def load(cls, path) -> SessionManifest:
        path = Path(path)
        try:
            d = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
        return cls.from_dict(d, path.parent)


@dataclass(frozen=True)
class AudioLayout:
    """Channel map over one or more WAV files of equal length and rate."""

    infos: tuple[pcm_io.WavInfo, ...]
    paths: tuple[Path, ...]

    @classmethod
    def open(cls, source: AudioSource) -> AudioLayout:
        infos = tuple(pcm_io.read_wav_info(p) for p in source.paths)
        for p, info in zip(source.paths, infos):
            if info.sample_rate != source.sample_rate:
                raise ConfigError(f"{p}: sample rate {info.sample_rate} != manifest {source.sample_rate}")
            if info.n_frames != infos[0].n_frames:
                raise ConfigError(f"{p}: length differs from {source.paths[0]}")
        layout = cls(infos, source.paths)
        if not 0 <= source.ltc_channel_index < layout.channels:
            raise ConfigError(
                f"ltc_channel_index {source.ltc_channel_index} invalid for {layout.channels} channels"
            )
        return layout

    @property
    def channels(self) -> int:
        return sum(i.channels for i in self.infos)

    @property
    def n_samples(self) -> int:
        return self.infos[0].n_frames

    def locate(self, channel: int) -> tuple[Path, int]:
        for path, info in zip(self.paths, self.infos):
            if channel < info.channels:
                return path, channel
            channel -= info.channels
        raise ConfigError("channel index out of range")

    def read_all(self) -> PcmBuffer:
        return pcm_io.merge_channels([pcm_io.read_wav(p) for p in self.paths])


@dataclass
class TrimPoint:
    sample: int  # signed; outside [0, n] means the audio does not cover it
    anchor_timecode: Timecode | None
    anchor_sample: int | None


@dataclass
class AlignmentResult:
    trim_start: SampleTime
    trim_end: SampleTime
    audio_start_timecode: Timecode
    video_start_timecode: Timecode
    residual_bound: float
    padding_ok: bool
    sample_rate: int
    n_samples: int
    raw_trim_start: int
    raw_trim_end: int
    subframe: bool = True
    ltc_rate: FrameRate | None = None
    video_end_timecode: Timecode | None = None
    ltc_discarded: int = 0
    video_offsets: dict = field(default_factory=dict)

    @property
    def lead_deficit_samples(self) -> int:
        return max(0, -self.raw_trim_start)

    @property
    def trail_deficit_samples(self) -> int:
        return max(0, self.raw_trim_end - self.n_samples)

    @property
    def lead_deficit_ms(self) -> float:
        return 1000.0 * self.lead_deficit_samples / self.sample_rate

    @property
    def trail_deficit_ms(self) -> float:
        return 1000.0 * self.trail_deficit_samples / self.sample_rate

    @property
    def output_samples(self) -> int:
        return self.raw_trim_end - self.raw_trim_start

    def check_padding(self):
        if not self.padding_ok:
            raise PaddingError(self.lead_deficit_ms, self.trail_deficit_ms)

    def to_dict(self) -> dict:
        sr = self.sample_rate

        def point(samples: int) -> dict:
            return {"samples": samples, "ms": 1000.0 * samples / sr}

        return {
            "schema_version": SCHEMA_VERSION,
            "kind": "alignment",
            "sample_rate": sr,
            "ltc_fps": self.ltc_rate.fps if self.ltc_rate else None,
            "subframe": self.subframe,
            "audio_start_timecode": str(self.audio_start_timecode),
            "video_start_timecode": str(self.video_start_timecode),
            "video_end_timecode": str(self.video_end_timecode) if self.video_end_timecode else None,
            "trim_start": point(self.raw_trim_start),
            "trim_end": point(self.raw_trim_end),
            "output_samples": self.output_samples,
            "audio_samples": self.n_samples,
            "lead_padding": point(self.raw_trim_start),
            "trail_padding": point(self.n_samples - self.raw_trim_end),
            "padding_ok": self.padding_ok,
            "lead_deficit_ms": self.lead_deficit_ms,
            "trail_deficit_ms": self.trail_deficit_ms,
            "residual_bound_s": self.residual_bound,
            "trailing_trim": "exact",
            "ltc_discarded": self.ltc_discarded,
            "video_offsets": self.video_offsets,
        }

    def summary(self) -> str:
        lines = [
            f"audio start timecode  {self.audio_start_timecode} @ {self.ltc_rate.fps if self.ltc_rate else '?'} fps",
            f"video start timecode  {self.video_start_timecode} @ {self.video_start_timecode.fps} fps",
            f"trim start            {self.raw_trim_start} samples ({1000.0 * self.raw_trim_start / self.sample_rate:.3f} ms)",
            f"trim end              {self.raw_trim_end} samples ({1000.0 * self.raw_trim_end / self.sample_rate:.3f} ms)",
            f"output length         {self.output_samples} samples",
            f"residual bound        {1000.0 * self.residual_bound:.3f} ms ({'sub-frame' if self.subframe else 'frame-level'})",
        ]
        if self.padding_ok:
            lines.append("padding               ok")
        else:
            lines.append(
                f"padding               VIOLATED (lead deficit {self.lead_deficit_ms:.3f} ms, "
                f"trail deficit {self.trail_deficit_ms:.3f} ms)"
            )
        return "\n".join(lines)


class _LtcReader:
    """Decodes LTC in windows of the session's LTC channel."""

    def __init__(self, layout: AudioLayout, channel: int, rate: FrameRate, sample_rate: int):
        self.path, self.channel = layout.locate(channel)
        self.n = layout.n_samples
        self.rate = rate
        self.sr = sample_rate
        self.discarded = 0

    def decode(self, start: int, stop: int) -> LtcDecodeResult | None:
        start, stop = max(0, start), min(self.n, stop)
        x = pcm_io.read_channel_range(self.path, self.channel, start, stop)
        if len(x) == 0:
            return None
        try:
            result = decode_ltc(x, rate_hint=self.rate, sample_rate=self.sr)
        except NoLtcFoundError:
            return None
        self.discarded += result.discarded
        return result.shifted(start)


def _ltc_seconds(tc: Timecode) -> Fraction:
    return tc.to_seconds()


def _locate(frames, target: Fraction, sr: int, spf: Fraction, window: tuple[int, int], n: int,
            what: str) -> TrimPoint:
    """Sample index of absolute time ``target`` from decoded frames around it."""
    times = [_ltc_seconds(f.timecode) for f in frames]
    below = [i for i, t in enumerate(times) if t <= target]
    if not below:
        first = frames[0]
        if first.first_sample_index - window[0] > 2 * spf + 2:
            raise LtcDiscontinuityError(f"LTC missing before first decoded frame near {what}")
        i = 0
    else:
        i = below[-1]
    f = frames[i]
    offset = (target - times[i]) * sr
    if i + 1 < len(frames):
        nxt = frames[i + 1]
        if target >= times[i] and target < times[i + 1]:
            gap_tc = total_frames(nxt.timecode) - total_frames(f.timecode)
            gap_samples = nxt.first_sample_index - f.first_sample_index
            if gap_tc != 1 or abs(gap_samples - spf) > max(2, spf / 500):
                raise LtcDiscontinuityError(
                    f"LTC discontinuity at {what}: {f.timecode} -> {nxt.timecode} "
                    f"over {gap_samples} samples"
                )
    elif target > times[i] + spf / sr and window[1] < n:
        raise LtcDiscontinuityError(f"LTC missing after {f.timecode} near {what}")
    return TrimPoint(f.first_sample_index + round_half_away(offset), f.timecode, f.first_sample_index)


def align_session(manifest: SessionManifest, subframe: bool = True,
                  window_s: float = DECODE_WINDOW_S) -> AlignmentResult:
    """Compute the lossless trim that maps the session audio onto the video.

    Never raises for insufficient padding: the result carries
    ``padding_ok`` and the deficits, and ``emit_aligned_audio`` refuses
    to write a short file unless forced.
    """
    layout = AudioLayout.open(manifest.audio)
    sr = manifest.audio.sample_rate
    rate = manifest.ltc_rate
    spf = Fraction(sr, rate.fps)
    n = layout.n_samples
    reader = _LtcReader(layout, manifest.audio.ltc_channel_index, rate, sr)
    win = max(int(window_s * sr), int(4 * spf))

    head = reader.decode(0, win)
    if head is None:
        raise NoLtcFoundError(f"no LTC found in the first {win / sr:.2f} s of channel "
                              f"{manifest.audio.ltc_channel_index}")
    first = head.frames[0]
    t0 = _ltc_seconds(first.timecode)
    # timecode of the frame in progress at sample 0
    back = max(0, math.ceil((first.first_sample_index - 2) / spf))
    try:
        audio_start_tc = add_frames(first.timecode, -back)
    except TimecodeError as exc:
        raise AlignmentError(f"audio start precedes midnight: {exc}") from None

    v_start, v_end = manifest.video_interval
    video_start_entry = manifest.video_start
    if v_end >= 86400:
        raise AlignmentError("video interval crosses midnight")

    def point(target: Fraction, what: str) -> TrimPoint:
        estimate = first.first_sample_index + int((target - t0) * sr)
        if 0 <= estimate < win - spf:
            frames, window = head.frames, (0, min(win, n))
        else:
            lo, hi = estimate - win // 2, estimate + win // 2
            lo_c, hi_c = max(0, lo), min(n, hi)
            res = reader.decode(lo_c, hi_c) if hi_c - lo_c > 2 * spf else None
            if res is None:
                # outside the recording entirely: extrapolate for the deficit report
                if estimate < 0 or estimate >= n:
                    return TrimPoint(estimate, None, None)
                raise LtcDiscontinuityError(f"no decodable LTC around the {what}")
            frames, window = res.frames, (lo_c, hi_c)
        return _locate(frames, target, sr, spf, window, n, what)

    start_pt = point(v_start, "video start")
    end_pt = point(v_end, "video end")
    if subframe:
        raw_start, raw_end = start_pt.sample, end_pt.sample
    else:
        # sample 0 is pinned to the nearest LTC frame boundary, so the
        # error is at most half a frame
        nearest = round_half_away(Fraction(first.first_sample_index) / spf)
        a = t0 - Fraction(nearest, rate.fps)
        raw_start = round_half_away((v_start - a) * sr)
        raw_end = round_half_away((v_end - a) * sr)

    padding_ok = raw_start >= 0 and raw_end <= n
    clamp = lambda s: min(max(s, 0), n)  # noqa: E731
    offsets = {
        v.id: {
            "start_timecode": str(v.start_timecode),
            "offset_from_trim_start_samples": round_half_away((v.start_seconds - v_start) * sr),
        }
        for v in manifest.videos
    }
    end_frames = round_half_away(v_end * video_start_entry.fps.fps)
    return AlignmentResult(
        trim_start=SampleTime(clamp(raw_start), sr),
        trim_end=SampleTime(max(clamp(raw_end), clamp(raw_start)), sr),
        audio_start_timecode=audio_start_tc,
        video_start_timecode=video_start_entry.start_timecode,
        residual_bound=1.0 / (2 * rate.fps),
        padding_ok=padding_ok,
        sample_rate=sr,
        n_samples=n,
        raw_trim_start=raw_start,
        raw_trim_end=raw_end,
        subframe=subframe,
        ltc_rate=rate,
        video_end_timecode=from_total_frames(end_frames, video_start_entry.fps)
        if end_frames < video_start_entry.fps.frames_per_day else None,
        ltc_discarded=reader.discarded,
        video_offsets=offsets,
    )


@dataclass
class EmitReport:
    path: Path
    samples: int
    channels: int
    lead_padding_samples: int = 0
    trail_padding_samples: int = 0


def aligned_buffer(manifest: SessionManifest, result: AlignmentResult, drop_ltc: bool = False,
                   force: bool = False) -> tuple[PcmBuffer, int, int]:
    """Trimmed audio as a buffer, plus leading/trailing silence inserted."""
    if not result.padding_ok and not force:
        result.check_padding()
    layout = AudioLayout.open(manifest.audio)
    buf = layout.read_all()
    trimmed = pcm_io.trim(buf, result.trim_start, result.trim_end)
    lead, trail = result.lead_deficit_samples, result.trail_deficit_samples
    if lead or trail:
        data = np.vstack([
            np.zeros((lead, buf.channels)),
            trimmed.data,
            np.zeros((trail, buf.channels)),
        ])
        trimmed = PcmBuffer(data, buf.sample_rate, buf.bit_depth)
    if drop_ltc:
        keep = [c for c in range(trimmed.channels) if c != manifest.audio.ltc_channel_index]
        if not keep:
            raise ConfigError("dropping the LTC channel would leave no audio")
        trimmed = PcmBuffer(trimmed.data[:, keep], trimmed.sample_rate, trimmed.bit_depth)
    return trimmed, lead, trail


def emit_aligned_audio(manifest: SessionManifest, result: AlignmentResult, out_path,
                       drop_ltc: bool = False, force: bool = False) -> EmitReport:
    """Write the trimmed multi-channel WAV at the source bit depth.

    Refuses when the audio does not cover the video unless ``force``, in
    which case the missing span is filled with digital silence.
    """
    buf, lead, trail = aligned_buffer(manifest, result, drop_ltc, force)
    pcm_io.write_wav(out_path, buf)
    return EmitReport(Path(out_path), len(buf), buf.channels, lead, trail)


# -- synthetic sessions -------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSessionSpec:
    """Parameters of a generated session.

    Audio begins ``ltc_phase_samples`` into LTC frame ``audio_start``; the
    video starts ``video_offset_s`` after ``audio_start`` (rounded to whole
    video frames).  ``events`` are click times in seconds after video start,
    placed on mic channel 0.
    """

    audio_start: str = "14:03:00:00"
    ltc_fps: int = 60
    video_fps: int = 60
    sample_rate: int = 48000
    ltc_phase_samples: int = 0
    video_offset_s: float = 1.0
    video_duration_frames: int = 120
    trail_padding_s: float = 1.0
    n_mics: int = 2
    n_videos: int = 1
    bit_depth: int = 24
    ltc_amplitude: float = 0.5
    noise_dbfs: float = -60.0
    events: tuple = ()
    event_amplitude: float = 0.5
    seed: int = 0


@dataclass
class GroundTruth:
    audio_start_seconds: Fraction
    video_start_seconds: Fraction
    video_end_seconds: Fraction
    trim_start: Fraction  # exact, in samples
    trim_end: Fraction
    event_samples: list[int]

    @property
    def trim_start_samples(self) -> int:
        return round_half_away(self.trim_start)

    @property
    def trim_end_samples(self) -> int:
        return round_half_away(self.trim_end)


def click(sample_rate: int, amplitude: float, rng: np.random.Generator, length_s: float = 0.03) -> np.ndarray:
    """Broadband impact: exponentially decaying noise with a full-scale first sample."""
    n = max(1, int(length_s * sample_rate))
    env = np.exp(-np.arange(n) / (0.006 * sample_rate))
    burst = rng.uniform(0.5, 1.0, n) * rng.choice([-1.0, 1.0], n) * env
    burst[0] = 1.0
    return amplitude * burst


def render_session(spec: SyntheticSessionSpec) -> tuple[PcmBuffer, GroundTruth]:
    """Synthesize the session audio in memory (mics first, LTC last)."""
    sr = spec.sample_rate
    ltc_rate, video_rate = FrameRate(spec.ltc_fps), FrameRate(spec.video_fps)
    audio_tc = Timecode.parse(spec.audio_start, ltc_rate)
    a0 = audio_tc.to_seconds()
    if not 0 <= spec.ltc_phase_samples < Fraction(sr, spec.ltc_fps):
        raise ConfigError("ltc_phase_samples must lie within one LTC frame")
    audio_start = a0 + Fraction(spec.ltc_phase_samples, sr)

    offset_frames = round(spec.video_offset_s * spec.video_fps)
    v_first = math.floor(a0 * spec.video_fps) + offset_frames
    if v_first < 0:
        raise ConfigError("video would start before midnight")
    video_start = Fraction(v_first, spec.video_fps)
    video_end = video_start + Fraction(spec.video_duration_frames, spec.video_fps)
    audio_end = video_end + Fraction(spec.trail_padding_s).limit_denominator(10**6)
    n = round_half_away((audio_end - audio_start) * sr)
    if n <= 0:
        raise ConfigError("session has no audio")

    n_ltc = math.ceil((n + spec.ltc_phase_samples) * spec.ltc_fps / sr) + 1
    ltc = encode_ltc(LtcEncodeConfig(ltc_rate, sr, spec.ltc_amplitude, audio_tc), n_ltc).mono
    ltc = ltc[spec.ltc_phase_samples: spec.ltc_phase_samples + n]

    rng = np.random.default_rng(spec.seed)
    noise = 10 ** (spec.noise_dbfs / 20)
    mics = rng.normal(0.0, noise, (n, spec.n_mics))
    t = np.arange(n) / sr
    for c in range(1, spec.n_mics):
        freq = rng.uniform(100, 4000)
        mics[:, c] += 0.1 * np.sin(2 * np.pi * freq * t + rng.uniform(0, 2 * np.pi))
    events = []
    for ev in spec.events:
        s = round_half_away((video_start + Fraction(ev).limit_denominator(10**9) - audio_start) * sr)
        burst = click(sr, spec.event_amplitude, rng)
        if 0 <= s < n:
            stop = min(n, s + len(burst))
            mics[s:stop, 0] += burst[: stop - s]
        events.append(s)
    data = np.clip(np.column_stack([mics, ltc]), -1.0, 1.0 - 2.0 ** -23)
    buf = PcmBuffer(data, sr, spec.bit_depth)
    # quantize now so in-memory and on-disk samples agree
    buf = PcmBuffer.from_integers(buf.quantized(), sr, spec.bit_depth)
    truth = GroundTruth(
        audio_start_seconds=audio_start,
        video_start_seconds=video_start,
        video_end_seconds=video_end,
        trim_start=(video_start - audio_start) * sr,
        trim_end=(video_end - audio_start) * sr,
        event_samples=events,
    )
    return buf, truth


def generate_synthetic_session(spec: SyntheticSessionSpec, out_dir,
                               name: str = "session") -> tuple[Path, SessionManifest, GroundTruth]:
    """Write ``<name>.wav`` and ``<name>.json`` (manifest) into ``out_dir``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    buf, truth = render_session(spec)
    wav_path = out_dir / f"{name}.wav"
    pcm_io.write_wav(wav_path, buf)
    video_rate = FrameRate(spec.video_fps)
    v_first = round_half_away(truth.video_start_seconds * spec.video_fps)
    videos = tuple(
        VideoEntry(f"cam{i + 1:02d}", from_total_frames(v_first, video_rate), spec.video_duration_frames,
                   video_rate)
        for i in range(spec.n_videos)
    )
    manifest = SessionManifest(
        AudioSource((wav_path,), spec.n_mics, spec.sample_rate), videos, FrameRate(spec.ltc_fps)
    )
    manifest.save(out_dir / f"{name}.json")
    return wav_path, manifest, truth
