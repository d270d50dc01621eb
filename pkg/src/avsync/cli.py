"""``avsync`` command-line entry point.

Exit codes: 0 success, 1 verification failed, 2 bad input, 3 internal error.
Durations on the command line carry an explicit unit: ``1.5s``, ``250ms``,
``48000smp``, ``30f`` or a timecode ``HH:MM:SS:FF``.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__
from .align import SessionManifest, SyntheticSessionSpec, align_session, emit_aligned_audio, generate_synthetic_session
from .clocksim import WordClockConfig, load_scenario, simulate_sampling
from .errors import AvsyncError, ConfigError
from .ltc import LtcEncodeConfig, decode_ltc, encode_ltc
from .pcm_io import read_channel, read_wav_info, write_wav
from .timecode import FrameRate, Timecode, round_half_away
from .verify import AvEventAnnotation, generate_test_stimulus, measure_av_offset

EXIT_OK = 0
EXIT_FAIL = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3
SCHEMA_VERSION = 1

_DURATION_RE = re.compile(r"^([+-]?\d+(?:\.\d+)?)(s|ms|smp|f)$")
_TC_RE = re.compile(r"^\d\d:\d\d:\d\d:\d\d$")


class Duration:
    """A signed span in one of the accepted units, resolved on demand."""

    def __init__(self, text: str):
        text = text.strip()
        self.text = text
        if _TC_RE.match(text):
            self.unit, self.value = "tc", text
            return
        m = _DURATION_RE.match(text)
        if not m:
            raise argparse.ArgumentTypeError(
                f"bad duration {text!r}: use a unit suffix (s, ms, smp, f) or HH:MM:SS:FF")
        self.value, self.unit = Fraction(m.group(1)), m.group(2)
        if self.unit in ("smp", "f") and self.value.denominator != 1:
            raise argparse.ArgumentTypeError(f"bad duration {text!r}: {self.unit} must be an integer")

    def seconds(self, sample_rate: int | None = None, fps: int | None = None) -> Fraction:
        if self.unit == "s":
            return self.value
        if self.unit == "ms":
            return self.value / 1000
        if self.unit == "smp":
            if not sample_rate:
                raise ConfigError(f"{self.text}: samples need a sample rate")
            return self.value / sample_rate
        if not fps:
            raise ConfigError(f"{self.text}: frames need a frame rate")
        if self.unit == "f":
            return self.value / fps
        return Timecode.parse(self.value, fps).to_seconds()

    def frames(self, fps: int, sample_rate: int | None = None) -> int:
        return round_half_away(self.seconds(sample_rate, fps) * fps)

    def __repr__(self):
        return f"Duration({self.text!r})"


def _emit(args, payload: dict, text: str):
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(text)


def _write_json(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


# -- commands -----------------------------------------------------------------

def cmd_ltc_encode(args) -> int:
    rate = FrameRate(args.fps)
    start = Timecode.parse(args.start, rate)
    if args.frames is not None:
        n = args.frames
    else:
        n = args.duration.frames(rate.fps, args.sr)
    if n < 1:
        raise ConfigError("need at least one frame")
    config = LtcEncodeConfig(rate, args.sr, args.amplitude, start, args.user_bits)
    buf = encode_ltc(config, n)
    write_wav(args.out, buf, args.bit_depth)
    end = start + (n - 1)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "ltc_encode",
        "fps": rate.fps,
        "sample_rate": args.sr,
        "bit_depth": args.bit_depth,
        "frames": n,
        "samples": len(buf),
        "start_timecode": str(start),
        "end_timecode": str(end),
    }
    _emit(args, payload, f"wrote {n} frames {start} .. {end} ({len(buf)} samples @ {args.sr} Hz) to {args.out}")
    return EXIT_OK


def cmd_ltc_decode(args) -> int:
    buf = read_channel(args.input, args.channel)
    result = decode_ltc(buf, rate_hint=args.fps)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "ltc_decode",
        "fps": result.rate.fps,
        "sample_rate": result.sample_rate,
        "channel": args.channel,
        "frame_count": len(result.frames),
        "discarded": result.discarded,
        "first_timecode": str(result.start_timecode),
        "last_timecode": str(result.end_timecode),
        "first_sample_index": result.frames[0].first_sample_index,
        "diagnostics": result.diagnostics.as_dict(),
    }
    if args.frames:
        payload["frames"] = [
            {"timecode": str(f.timecode), "first_sample_index": f.first_sample_index, "user_bits": f.user_bits}
            for f in result.frames
        ]
    if args.json or args.format == "json":
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        lines = [
            f"fps            {result.rate.fps}",
            f"first          {result.start_timecode} at sample {result.frames[0].first_sample_index}",
            f"last           {result.end_timecode}",
            f"frames         {len(result.frames)} ({result.discarded} discarded)",
        ]
        if args.frames:
            lines += [f"{f.first_sample_index:>10}  {f.timecode}" for f in result.frames]
        print("\n".join(lines))
    return EXIT_OK


def cmd_align(args) -> int:
    manifest = SessionManifest.load(args.manifest)
    result = align_session(manifest, subframe=not args.no_subframe)
    payload = result.to_dict()
    emitted = None
    if args.out and (result.padding_ok or args.force_pad):
        emitted = emit_aligned_audio(manifest, result, args.out, drop_ltc=args.drop_ltc, force=args.force_pad)
        payload["output"] = {
            "samples": emitted.samples,
            "channels": emitted.channels,
            "lead_fill_samples": emitted.lead_padding_samples,
            "trail_fill_samples": emitted.trail_padding_samples,
        }
    if args.report:
        _write_json(args.report, payload)
    if not result.padding_ok and not args.force_pad:
        if not args.json:
            print(result.summary())
        result.check_padding()
    text = result.summary()
    if emitted:
        text += f"\nwrote {emitted.samples} samples x {emitted.channels} channels to {args.out}"
    _emit(args, payload, text)
    return EXIT_OK


def cmd_verify(args) -> int:
    audio = read_channel(args.audio, args.channel)
    annotation = AvEventAnnotation.load(args.annotation)
    threshold = None
    if args.threshold is not None:
        threshold = args.threshold.seconds(audio.sample_rate, annotation.fps.fps)
    report = measure_av_offset(audio, annotation, threshold, factor=args.factor)
    if args.report:
        _write_json(args.report, report.to_dict())
    if args.plot:
        from .plotting import plot_sync_report

        plot_sync_report(audio, report, args.plot)
    _emit(args, report.to_dict(), report.summary())
    return EXIT_OK if report.passed else EXIT_FAIL


def _scenario_path(name: str) -> Path:
    p = Path(name)
    if p.exists() or not name.startswith("builtin:"):
        return p
    ref = resources.files("avsync") / "scenarios" / f"{name[len('builtin:'):]}.json"
    if not ref.is_file():
        raise ConfigError(f"no built-in scenario {name!r}")
    return Path(str(ref))


def cmd_ptp_sim(args) -> int:
    try:
        scenario = load_scenario(_scenario_path(args.scenario))
    except FileNotFoundError:
        raise ConfigError(f"scenario file not found: {args.scenario}") from None
    trace = scenario.run()
    spread = scenario.spread_after(trace)
    if args.out:
        trace.write_csv(args.out)
    if args.plot:
        from .plotting import plot_ptp_residuals

        plot_ptp_residuals(trace, args.plot, spread)
    final = np.abs(trace.residuals[-1])
    after_first = np.abs(trace.residuals[1:]).max() if trace.n_rounds > 1 else 0.0
    converged = trace.converged_round(args.bound)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "ptp_sim",
        "slaves": len(trace.slave_ids),
        "rounds": trace.n_rounds,
        "round_interval_s": trace.round_interval,
        "round1_max_abs_residual_s": float(np.abs(trace.residuals[0]).max()),
        "after_round1_max_abs_residual_s": float(after_first),
        "final_max_abs_residual_s": float(final.max()),
        "final_spread_s": float(spread),
        "bound_s": args.bound,
        "converged_round": converged,
    }
    text = "\n".join([
        f"slaves               {len(trace.slave_ids)}",
        f"rounds               {trace.n_rounds} x {trace.round_interval:g} s",
        f"final max |residual| {final.max():.3e} s",
        f"final spread         {spread * 1e9:.3f} ns",
        f"converged (<= {args.bound:g} s) {'round ' + str(converged) if converged else 'not reached'}",
    ])
    _emit(args, payload, text)
    return EXIT_OK


def cmd_wordclock_sim(args) -> int:
    try:
        ppm = [float(p) for p in args.ppm.split(",") if p.strip()]
    except ValueError:
        raise ConfigError(f"bad ppm list {args.ppm!r}") from None
    config = WordClockConfig(args.mode, args.sr, tuple(ppm), args.reference_ppm)
    duration = float(args.duration.seconds(args.sr))
    result = simulate_sampling(config, duration)
    if args.plot:
        from .plotting import plot_wordclock

        plot_wordclock(result, config.effective_ppm(), args.plot)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "wordclock_sim",
        "mode": args.mode,
        "sample_rate": args.sr,
        "device_ppm": ppm,
        "duration_s": duration,
        "max_pairwise_drift_s": result.max_pairwise_drift,
        "end_instants_s": [float(t) for t in result.end_instants],
    }
    _emit(args, payload, f"{args.mode} clocking, {len(ppm)} devices, {duration:g} s: "
                         f"max pairwise drift {result.max_pairwise_drift * 1e6:.6f} us")
    return EXIT_OK


def cmd_synth_session(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    spec = SyntheticSessionSpec(
        audio_start=args.audio_start,
        ltc_fps=args.ltc_fps,
        video_fps=args.video_fps,
        sample_rate=args.sr,
        ltc_phase_samples=args.ltc_phase,
        video_offset_s=float(args.video_offset.seconds(args.sr, args.video_fps)),
        video_duration_frames=args.video_frames,
        trail_padding_s=float(args.trail_padding.seconds(args.sr, args.video_fps)),
        n_mics=args.mics,
        bit_depth=args.bit_depth,
        seed=args.seed,
    )
    wav, manifest, truth = generate_synthetic_session(spec, out, args.name)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "synth_session",
        "wav": wav.name,
        "manifest": f"{args.name}.json",
        "true_trim_start_samples": truth.trim_start_samples,
        "true_trim_end_samples": truth.trim_end_samples,
    }
    _emit(args, payload, f"wrote {wav.name} and {args.name}.json to {out} "
                         f"(true trim {truth.trim_start_samples}..{truth.trim_end_samples})")
    return EXIT_OK


def cmd_make_stimulus(args) -> int:
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    offset = float(args.offset.seconds(args.sr, args.fps))
    event = float(args.event_time.seconds(args.sr, args.fps))
    stim = generate_test_stimulus(out, event, args.fps, args.sr, offset, seed=args.seed, name=args.name)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "stimulus",
        "wav": stim.wav_path.name,
        "manifest": f"{args.name}.json",
        "annotation": f"{args.name}.annotation.json",
        "visual_event_frame": stim.annotation.visual_event_frame,
        "injected_offset_s": offset,
    }
    _emit(args, payload, f"wrote stimulus {args.name} to {out}: visual frame "
                         f"{stim.annotation.visual_event_frame}, injected offset {1000 * offset:+.3f} ms")
    return EXIT_OK


def cmd_info(args) -> int:
    info = read_wav_info(args.input)
    payload = {
        "schema_version": SCHEMA_VERSION,
        "kind": "wav_info",
        "channels": info.channels,
        "sample_rate": info.sample_rate,
        "bit_depth": info.bit_depth,
        "frames": info.n_frames,
        "extensible": info.format_tag == 0xFFFE,
    }
    _emit(args, payload, f"{info.channels} ch, {info.sample_rate} Hz, {info.bit_depth}-bit, {info.n_frames} frames")
    return EXIT_OK


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="avsync", description="Timecode-based audio/video alignment toolkit.")
    p.add_argument("--version", action="version", version=f"avsync {__version__}")
    p.add_argument("--json", action="store_true", help="print machine-readable JSON on stdout")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")

    s = sub.add_parser("ltc-encode", help="write an LTC signal to a mono WAV")
    s.add_argument("--start", required=True, help="start timecode HH:MM:SS:FF")
    s.add_argument("--fps", type=int, required=True)
    s.add_argument("--sr", type=int, default=48000)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--frames", type=int)
    g.add_argument("--duration", type=Duration)
    s.add_argument("--amplitude", type=float, default=0.5)
    s.add_argument("--user-bits", type=lambda v: int(v, 0), default=0)
    s.add_argument("--bit-depth", type=int, choices=(16, 24), default=24)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ltc_encode)

    s = sub.add_parser("ltc-decode", help="decode LTC from one channel of a WAV")
    s.add_argument("--in", dest="input", required=True)
    s.add_argument("--channel", type=int, default=0)
    s.add_argument("--fps", type=int, help="frame rate hint (inferred when omitted)")
    s.add_argument("--format", choices=("text", "json"), default="text")
    s.add_argument("--frames", action="store_true", help="list every decoded frame")
    s.set_defaults(func=cmd_ltc_decode)

    s = sub.add_parser("align", help="trim session audio to the video interval")
    s.add_argument("--manifest", required=True)
    s.add_argument("--out", help="aligned WAV to write")
    s.add_argument("--report", help="JSON alignment report to write")
    s.add_argument("--force-pad", action="store_true", help="fill missing padding with silence")
    s.add_argument("--no-subframe", action="store_true", help="frame-level alignment only")
    s.add_argument("--drop-ltc", action="store_true", help="omit the LTC channel from the output")
    s.set_defaults(func=cmd_align)

    s = sub.add_parser("verify", help="measure AV offset of an annotated event")
    s.add_argument("--audio", required=True, help="aligned WAV (sample 0 = first video frame)")
    s.add_argument("--annotation", required=True)
    s.add_argument("--threshold", type=Duration, help="pass limit (default one frame)")
    s.add_argument("--channel", type=int, default=0)
    s.add_argument("--factor", type=float, default=10.0, help="onset threshold over noise floor")
    s.add_argument("--report", help="JSON sync report to write")
    s.add_argument("--plot", help="PNG waveform figure to write")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("ptp-sim", help="simulate PTP discipline of a camera array")
    s.add_argument("--scenario", required=True, help="JSON scenario file or builtin:NAME")
    s.add_argument("--out", help="CSV residual trace to write")
    s.add_argument("--plot", help="PNG residual figure to write")
    s.add_argument("--bound", type=float, default=1e-9, help="convergence bound in seconds")
    s.set_defaults(func=cmd_ptp_sim)

    s = sub.add_parser("wordclock-sim", help="inter-device drift under internal or external clocking")
    s.add_argument("--mode", choices=("internal", "external"), required=True)
    s.add_argument("--ppm", required=True, help="comma-separated per-device ppm")
    s.add_argument("--reference-ppm", type=float, default=0.0)
    s.add_argument("--sr", type=int, default=48000)
    s.add_argument("--duration", type=Duration, required=True)
    s.add_argument("--plot")
    s.set_defaults(func=cmd_wordclock_sim)

    s = sub.add_parser("synth-session", help="generate a synthetic session WAV and manifest")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--name", default="session")
    s.add_argument("--audio-start", default="14:03:00:00")
    s.add_argument("--ltc-fps", type=int, default=60)
    s.add_argument("--video-fps", type=int, default=60)
    s.add_argument("--sr", type=int, default=48000)
    s.add_argument("--ltc-phase", type=int, default=0, help="samples into the first LTC frame")
    s.add_argument("--video-offset", type=Duration, default=Duration("1s"))
    s.add_argument("--video-frames", type=int, default=120)
    s.add_argument("--trail-padding", type=Duration, default=Duration("1s"))
    s.add_argument("--mics", type=int, default=2)
    s.add_argument("--bit-depth", type=int, choices=(16, 24), default=24)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth_session)

    s = sub.add_parser("make-stimulus", help="generate an impact test session with annotation")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--name", default="stimulus")
    s.add_argument("--event-time", type=Duration, default=Duration("1s"))
    s.add_argument("--fps", type=int, default=60)
    s.add_argument("--sr", type=int, default=48000)
    s.add_argument("--offset", type=Duration, default=Duration("0ms"), help="injected AV offset")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_make_stimulus)

    s = sub.add_parser("info", help="print WAV header information")
    s.add_argument("--in", dest="input", required=True)
    s.set_defaults(func=cmd_info)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (AvsyncError, FileNotFoundError, IsADirectoryError, PermissionError) as exc:
        message = str(exc) if isinstance(exc, AvsyncError) else f"{exc.strerror}: {exc.filename}"
        print(f"avsync: error: {message}", file=sys.stderr)
        if args.json:
            print(json.dumps({"schema_version": SCHEMA_VERSION, "kind": "error", "exit_code": EXIT_INPUT,
                              "error": message}, indent=2, sort_keys=True))
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001
        print(f"avsync: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
