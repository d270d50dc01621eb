"""Acceptance criteria 1-6.

Each test appends one ``ACCEPTANCE n PASS|FAIL`` line to the shared log that
the terminal summary prints.  Run directly (``python tests/test_acceptance.py``)
to execute only this file.
"""
import subprocess
import sys
import time
from contextlib import contextmanager
from fractions import Fraction
from importlib import resources
from pathlib import Path

import numpy as np
import pytest
from conftest import add_noise, make_ltc

from avsync.align import SyntheticSessionSpec, align_session, emit_aligned_audio, generate_synthetic_session
from avsync.clocksim import WordClockConfig, load_scenario, simulate_sampling
from avsync.ltc import decode_ltc
from avsync.pcm_io import PcmBuffer, read_data_bytes, read_wav, read_wav_info, write_wav
from avsync.timecode import FrameRate, Timecode
from avsync.verify import generate_test_stimulus, run_pipeline

SR = 48000


@contextmanager
def criterion(log, number, title, limit_s=None):
    notes = []
    start = time.perf_counter()
    ok = False
    try:
        yield notes
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        in_time = limit_s is None or elapsed <= limit_s
        budget = f"{elapsed:.1f} s" + (f" of {limit_s} s" if limit_s else "")
        status = "PASS" if ok and in_time else "FAIL"
        line = f"ACCEPTANCE {number} {status} {title}: {'; '.join(notes)} [{budget}]"
        log.append(line)
        print(line)
    assert in_time, f"criterion {number} took {elapsed:.1f} s, budget {limit_s} s"


def test_1_subframe_av_alignment(tmp_path, acceptance_log):
    rng = np.random.default_rng(2024)
    with criterion(acceptance_log, 1, "sub-frame AV alignment", 30) as notes:
        injected = [ms / 1000 for ms in range(-50, 51, 5)]
        worst = 0.0
        for i, inj in enumerate(injected):
            stim = generate_test_stimulus(tmp_path, injected_av_offset=inj, seed=i,
                                          ltc_phase_samples=int(rng.integers(0, 800)), name=f"s{i}")
            _, report = run_pipeline(stim)
            worst = max(worst, abs(report.offset - inj))
            assert abs(report.offset - inj) <= 1e-3, (inj, report.offset)
            assert report.passed is (abs(inj) < 1 / 60)
        notes.append(f"{len(injected)} offsets, worst error {worst * 1e3:.4f} ms")

        stim = generate_test_stimulus(tmp_path, injected_av_offset=-1 / 60, seed=99,
                                      ltc_phase_samples=int(rng.integers(0, 800)), name="early")
        _, report = run_pipeline(stim)
        assert report.offset * 1e3 == pytest.approx(-16.67, abs=1.0)
        assert report.offset_exact == Fraction(-1, 60)
        assert not report.passed
        notes.append(f"one frame early -> {report.offset * 1e3:.3f} ms, FAIL as required")

        _, report = run_pipeline(stim, threshold=0.02)
        assert report.passed


def test_2_inter_camera_spread(acceptance_log):
    with criterion(acceptance_log, 2, "inter-camera spread", 10) as notes:
        scenario = load_scenario(resources.files("avsync") / "scenarios" / "camera-array.json")
        trace = scenario.run()
        assert len(trace.slave_ids) + 1 == 12
        spread = scenario.spread_after(trace)
        assert spread <= 6e-9
        notes.append(f"12 clocks, spread {spread * 1e9:.3f} ns")

        zero = load_scenario(resources.files("avsync") / "scenarios" / "zero-jitter.json")
        trace = zero.run()
        first = float(np.abs(trace.residuals[0]).max())
        assert first <= 1e-12
        assert np.abs(trace.residuals).max() <= 1e-12
        notes.append(f"zero jitter residual after round 1 {first:.1e} s")


def expected(start, fps, n):
    tc = Timecode.parse(start, FrameRate(fps))
    return [tc + k for k in range(n)]


def test_3_ltc_robustness(acceptance_log):
    with criterion(acceptance_log, 3, "LTC codec robustness", 60) as notes:
        configs = 0
        for fps in (24, 25, 30, 50, 60):
            for sr in (44100, 48000, 96000):
                for amp in (0.1, 0.5, 1.0):
                    res = decode_ltc(make_ltc(fps, sr, fps, start="09:59:59:00", amplitude=amp))
                    assert res.discarded == 0
                    assert res.timecodes() == expected("09:59:59:00", fps, fps), (fps, sr, amp)
                    configs += 1
        notes.append(f"{configs} clean configs exact")

        rng = np.random.default_rng(7)
        frames = errors = 0
        while frames < 1200:
            fps = int(rng.choice([24, 25, 30, 50, 60]))
            sr = int(rng.choice([44100, 48000, 96000]))
            n = int(rng.integers(40, 120))
            start = f"{rng.integers(0, 24):02d}:{rng.integers(0, 60):02d}:{rng.integers(0, 60):02d}:00"
            amp = float(rng.uniform(0.1, 1.0))
            buf = make_ltc(fps, sr, n, start=start, amplitude=amp)
            res = decode_ltc(PcmBuffer(add_noise(buf.mono, 20, int(rng.integers(1 << 31))), sr))
            want = expected(start, fps, n)
            errors += res.discarded + sum(a != b for a, b in zip(res.timecodes(), want))
            errors += abs(len(res.frames) - n)
            frames += n
        assert errors == 0
        notes.append(f"{frames} noisy frames at 20 dB, {errors} errors")

        for fps, sr in ((25, 44100), (60, 96000)):
            buf = make_ltc(fps, sr, 30, start="01:02:03:04")
            ref = decode_ltc(buf)
            assert decode_ltc(PcmBuffer(-buf.mono, sr)).frames == ref.frames
            for shift in (1, 17, 333):
                padded = PcmBuffer(np.concatenate([np.zeros(shift), buf.mono]), sr)
                got = decode_ltc(padded)
                assert got.frames == ref.shifted(shift).frames
        notes.append("polarity and phase invariant")


def test_4_wordclock_drift(acceptance_log):
    with criterion(acceptance_log, 4, "word-clock drift", 5) as notes:
        res = simulate_sampling(WordClockConfig("internal", SR, (0.0, 10.0)), 60.0)
        assert res.max_pairwise_drift == pytest.approx(600e-6, rel=0.01)
        notes.append(f"internal 10 ppm over 60 s: {res.max_pairwise_drift * 1e6:.3f} us")
        rng = np.random.default_rng(3)
        for _ in range(50):
            ppm = tuple(rng.uniform(-100, 100, int(rng.integers(1, 16))))
            ext = simulate_sampling(WordClockConfig("external", SR, ppm, float(rng.uniform(-5, 5))),
                                    float(rng.uniform(1, 3600)))
            assert ext.max_pairwise_drift == 0.0
        notes.append("external mode exactly 0 for 50 ppm lists")


def test_5_lossless_trim(tmp_path, acceptance_log):
    with criterion(acceptance_log, 5, "lossless trim", 10) as notes:
        spec = SyntheticSessionSpec(n_mics=31, bit_depth=24, ltc_phase_samples=123, video_offset_s=0.75,
                                    video_duration_frames=90)
        wav, manifest, _ = generate_synthetic_session(spec, tmp_path)
        assert read_wav_info(wav).channels == 32
        result = align_session(manifest)
        out = tmp_path / "aligned.wav"
        emit_aligned_audio(manifest, result, out)
        block = 32 * 3
        src = read_data_bytes(wav)
        s, e = result.trim_start.sample_index, result.trim_end.sample_index
        assert read_data_bytes(out) == src[s * block: e * block]
        notes.append(f"{e - s} frames x 32 ch byte-identical")

        rng = np.random.default_rng(5)
        for depth in (16, 24):
            ints = rng.integers(-(1 << depth - 1), 1 << depth - 1, size=(4800, 32))
            p, q = tmp_path / f"r{depth}.wav", tmp_path / f"q{depth}.wav"
            write_wav(p, PcmBuffer.from_integers(ints, SR, depth))
            back = read_wav(p)
            assert np.array_equal(back.quantized(), ints)
            write_wav(q, back)
            assert p.read_bytes() == q.read_bytes()
        notes.append("16/24-bit roundtrip bit-exact")


CLI_RUNS = [
    ["synth-session", "--out-dir", "sess", "--mics", "3", "--ltc-phase", "250", "--seed", "4"],
    ["info", "--in", "sess/session.wav"],
    ["ltc-encode", "--start", "01:00:00:00", "--fps", "25", "--duration", "2s", "--out", "ltc.wav"],
    ["ltc-decode", "--in", "ltc.wav", "--frames"],
    ["align", "--manifest", "sess/session.json", "--out", "aligned.wav", "--report", "align.json"],
    ["make-stimulus", "--out-dir", "st", "--offset=-8ms", "--seed", "3"],
    ["align", "--manifest", "st/stimulus.json", "--out", "st/aligned.wav"],
    ["verify", "--audio", "st/aligned.wav", "--annotation", "st/stimulus.annotation.json",
     "--report", "verify.json", "--plot", "verify.png"],
    ["ptp-sim", "--scenario", "builtin:camera-array", "--out", "ptp.csv", "--plot", "ptp.png"],
    ["wordclock-sim", "--mode", "internal", "--ppm", "0,10,-3", "--duration", "60s", "--plot", "wc.png"],
]


def run_all(workdir: Path) -> list[bytes]:
    workdir.mkdir()
    outputs = []
    for argv in CLI_RUNS:
        for prefix in ([], ["--json"]):
            proc = subprocess.run([sys.executable, "-m", "avsync", *prefix, *argv], cwd=workdir,
                                  capture_output=True, check=False)
            assert proc.returncode == 0, (argv, proc.stderr.decode())
            outputs.append(proc.stdout)
    return outputs


def test_6_cli_determinism(tmp_path, acceptance_log):
    with criterion(acceptance_log, 6, "CLI determinism") as notes:
        out_a = run_all(tmp_path / "a")
        out_b = run_all(tmp_path / "b")
        assert out_a == out_b
        files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
        files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
        assert files_a == files_b
        differing = [str(p) for p in files_a if (tmp_path / "a" / p).read_bytes() != (tmp_path / "b" / p).read_bytes()]
        assert not differing, differing
        notes.append(f"{len(CLI_RUNS)} commands in text and JSON mode, {len(files_a)} files identical")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
