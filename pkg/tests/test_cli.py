import csv
import json
from fractions import Fraction
from importlib import resources

import jsonschema
import numpy as np
import pytest
from conftest import add_noise

from avsync import cli
from avsync.cli import Duration, main
from avsync.pcm_io import PcmBuffer, read_wav, write_wav


def schema(name):
    return json.loads((resources.files("avsync") / "schemas" / f"{name}.schema.json").read_text())


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def run_json(capsys, *argv):
    code, out, err = run(capsys, "--json", *argv)
    return code, json.loads(out), err


class TestDuration:
    @pytest.mark.parametrize("text,seconds", [
        ("1.5s", Fraction(3, 2)),
        ("250ms", Fraction(1, 4)),
        ("-16.667ms", Fraction(-16667, 1000000)),
        ("24000smp", Fraction(1, 2)),
        ("30f", Fraction(1, 2)),
        ("00:00:01:30", Fraction(3, 2)),
    ])
    def test_units(self, text, seconds):
        assert Duration(text).seconds(48000, 60) == seconds

    @pytest.mark.parametrize("text", ["1.5", "10 s", "3min", "1.5smp", "2.5f", ""])
    def test_rejected(self, text):
        with pytest.raises(Exception):
            Duration(text)

    def test_bare_number_exits_2(self, capsys, tmp_path):
        with pytest.raises(SystemExit) as info:
            main(["ltc-encode", "--start", "00:00:00:00", "--fps", "30", "--duration", "1",
                  "--out", str(tmp_path / "a.wav")])
        assert info.value.code == 2
        assert "unit suffix" in capsys.readouterr().err


class TestLtcCommands:
    def test_encode_one_second(self, capsys, tmp_path):
        out = tmp_path / "a.wav"
        code, payload, _ = run_json(capsys, "ltc-encode", "--start", "00:00:00:00", "--fps", 30,
                                    "--sr", 48000, "--frames", 30, "--out", out)
        assert code == 0
        jsonschema.validate(payload, schema("ltc_encode"))
        buf = read_wav(out)
        assert buf.channels == 1 and len(buf) == 48000

    @pytest.mark.parametrize("duration,frames", [("1s", 30), ("500ms", 15), ("16000smp", 10), ("7f", 7),
                                                 ("00:00:02:00", 60)])
    def test_encode_duration_units(self, capsys, tmp_path, duration, frames):
        code, payload, _ = run_json(capsys, "ltc-encode", "--start", "01:00:00:00", "--fps", 30,
                                    "--duration", duration, "--out", tmp_path / "a.wav")
        assert code == 0 and payload["frames"] == frames

    def test_invalid_timecode(self, capsys, tmp_path):
        code, _, err = run(capsys, "ltc-encode", "--start", "00:00:0a:00", "--fps", 30, "--frames", 30,
                           "--out", tmp_path / "a.wav")
        assert code == 2
        assert "position 7" in err

    def test_roundtrip(self, capsys, tmp_path):
        out = tmp_path / "a.wav"
        run(capsys, "ltc-encode", "--start", "10:20:30:12", "--fps", 25, "--frames", 50, "--out", out)
        code, payload, _ = run_json(capsys, "ltc-decode", "--in", out)
        assert code == 0
        jsonschema.validate(payload, schema("ltc_decode"))
        assert payload["first_timecode"] == "10:20:30:12"
        assert payload["last_timecode"] == "10:20:32:11"
        assert payload["frame_count"] == 50 and payload["discarded"] == 0

    def test_text_and_frame_listing(self, capsys, tmp_path):
        out = tmp_path / "a.wav"
        run(capsys, "ltc-encode", "--start", "00:00:00:00", "--fps", 60, "--frames", 5, "--out", out)
        code, text, _ = run(capsys, "ltc-decode", "--in", out, "--frames")
        assert code == 0
        assert "first          00:00:00:00 at sample 0" in text
        assert "00:00:00:04" in text
        code, text, _ = run(capsys, "ltc-decode", "--in", out, "--format", "json", "--frames")
        assert len(json.loads(text)["frames"]) == 5

    def test_silent_file(self, capsys, tmp_path):
        p = tmp_path / "s.wav"
        write_wav(p, PcmBuffer(np.zeros(48000), 48000, 16))
        code, _, err = run(capsys, "ltc-decode", "--in", p)
        assert code == 2
        assert "no LTC found" in err

    def test_noisy_fixture_matches_clean(self, capsys, tmp_path):
        clean = tmp_path / "clean.wav"
        run(capsys, "ltc-encode", "--start", "00:10:00:00", "--fps", 60, "--frames", 120, "--out", clean)
        buf = read_wav(clean)
        noisy = tmp_path / "noisy.wav"
        write_wav(noisy, PcmBuffer(np.clip(add_noise(buf.mono, 20, 5), -1, 0.999), 48000))
        _, a, _ = run_json(capsys, "ltc-decode", "--in", clean, "--frames")
        _, b, _ = run_json(capsys, "ltc-decode", "--in", noisy, "--frames")
        assert [f["timecode"] for f in a["frames"]] == [f["timecode"] for f in b["frames"]]

    def test_channel_selection(self, capsys, tmp_path):
        run(capsys, "synth-session", "--out-dir", tmp_path, "--mics", 2)
        code, payload, _ = run_json(capsys, "ltc-decode", "--in", tmp_path / "session.wav", "--channel", 2)
        assert code == 0 and payload["first_timecode"] == "14:03:00:00"
        code, _, err = run(capsys, "ltc-decode", "--in", tmp_path / "session.wav", "--channel", 5)
        assert code == 2 and "out of range" in err

    def test_missing_file(self, capsys, tmp_path):
        code, _, err = run(capsys, "ltc-decode", "--in", tmp_path / "nope.wav")
        assert code == 2 and "No such file" in err


class TestAlignCommand:
    def test_ten_and_a_half_seconds(self, capsys, tmp_path):
        run(capsys, "synth-session", "--out-dir", tmp_path, "--video-offset", "10.5s", "--video-frames", 60)
        code, payload, _ = run_json(capsys, "align", "--manifest", tmp_path / "session.json",
                                    "--out", tmp_path / "o.wav", "--report", tmp_path / "r.json")
        assert code == 0
        jsonschema.validate(payload, schema("alignment"))
        assert payload["trim_start"] == {"samples": 504000, "ms": 10500.0}
        assert json.loads((tmp_path / "r.json").read_text()) == payload
        assert len(read_wav(tmp_path / "o.wav")) == 48000

    def test_zero_offset(self, capsys, tmp_path):
        run(capsys, "synth-session", "--out-dir", tmp_path, "--video-offset", "0s")
        code, payload, _ = run_json(capsys, "align", "--manifest", tmp_path / "session.json")
        assert code == 0 and payload["trim_start"]["samples"] == 0

    def test_deficit(self, capsys, tmp_path):
        run(capsys, "synth-session", "--out-dir", tmp_path, "--trail-padding=-0.5s")
        code, out, err = run(capsys, "align", "--manifest", tmp_path / "session.json",
                             "--out", tmp_path / "o.wav", "--report", tmp_path / "r.json")
        assert code == 2
        assert "500.000 ms missing after video end" in err
        assert not (tmp_path / "o.wav").exists()
        assert json.loads((tmp_path / "r.json").read_text())["padding_ok"] is False
        code, payload, _ = run_json(capsys, "align", "--manifest", tmp_path / "session.json",
                                    "--out", tmp_path / "o.wav", "--force-pad")
        assert code == 0
        assert payload["output"]["trail_fill_samples"] == 24000

    def test_flags(self, capsys, tmp_path):
        run(capsys, "synth-session", "--out-dir", tmp_path, "--ltc-phase", 300, "--mics", 3)
        code, payload, _ = run_json(capsys, "align", "--manifest", tmp_path / "session.json", "--no-subframe",
                                    "--drop-ltc", "--out", tmp_path / "o.wav")
        assert code == 0
        assert payload["subframe"] is False
        assert read_wav(tmp_path / "o.wav").channels == 3

    def test_malformed_manifest(self, capsys, tmp_path):
        (tmp_path / "m.json").write_text('{"audio": {}}')
        code, _, err = run(capsys, "align", "--manifest", tmp_path / "m.json")
        assert code == 2 and "malformed manifest" in err


class TestVerifyCommand:
    @pytest.mark.parametrize("offset,expected", [("0ms", 0), ("-10ms", 0), ("-16.6666666667ms", 1),
                                                 ("50ms", 1)])
    def test_exit_codes(self, capsys, tmp_path, offset, expected):
        run(capsys, "make-stimulus", "--out-dir", tmp_path, f"--offset={offset}")
        run(capsys, "align", "--manifest", tmp_path / "stimulus.json", "--out", tmp_path / "a.wav")
        code, payload, _ = run_json(capsys, "verify", "--audio", tmp_path / "a.wav",
                                    "--annotation", tmp_path / "stimulus.annotation.json",
                                    "--report", tmp_path / "r.json", "--plot", tmp_path / "v.png")
        assert code == expected
        jsonschema.validate(payload, schema("sync_report"))
        assert payload["pass"] is (expected == 0)
        assert (tmp_path / "v.png").read_bytes()[:4] == b"\x89PNG"

    def test_threshold_flag(self, capsys, tmp_path):
        run(capsys, "make-stimulus", "--out-dir", tmp_path, "--offset=-20ms")
        run(capsys, "align", "--manifest", tmp_path / "stimulus.json", "--out", tmp_path / "a.wav")
        args = ["verify", "--audio", tmp_path / "a.wav", "--annotation", tmp_path / "stimulus.annotation.json"]
        assert run(capsys, *args)[0] == 1
        assert run(capsys, *args, "--threshold", "2f")[0] == 0
        code, text, _ = run(capsys, *args, "--threshold", "25ms")
        assert code == 0 and "audio leads" in text

    def test_silent_audio(self, capsys, tmp_path):
        write_wav(tmp_path / "s.wav", PcmBuffer(np.zeros(96000), 48000))
        (tmp_path / "a.json").write_text('{"visual_event_frame": 10, "fps": 60}')
        code, _, err = run(capsys, "verify", "--audio", tmp_path / "s.wav", "--annotation", tmp_path / "a.json")
        assert code == 2 and "no onset found" in err


class TestSimulationCommands:
    def test_zero_jitter(self, capsys, tmp_path):
        out = tmp_path / "t.csv"
        code, payload, _ = run_json(capsys, "ptp-sim", "--scenario", "builtin:zero-jitter", "--out", out)
        assert code == 0
        jsonschema.validate(payload, schema("ptp_sim"))
        rows = list(csv.DictReader(out.open()))
        assert rows and all(float(r["residual_seconds"]) == 0.0 for r in rows if int(r["round"]) > 1)
        assert payload["round1_max_abs_residual_s"] <= 1e-12

    def test_camera_array(self, capsys, tmp_path):
        code, payload, _ = run_json(capsys, "ptp-sim", "--scenario", "builtin:camera-array",
                                    "--plot", tmp_path / "p.png")
        assert code == 0
        assert payload["slaves"] == 11
        assert payload["final_spread_s"] <= 6e-9
        assert (tmp_path / "p.png").exists()

    @pytest.mark.parametrize("content", ['{"rounds": 3}', "{not json", '{"slaves": [{"drift": 1}]}', "[]"])
    def test_malformed_scenario(self, capsys, tmp_path, content):
        p = tmp_path / "s.json"
        p.write_text(content)
        code, _, err = run(capsys, "ptp-sim", "--scenario", p)
        assert code == 2 and err

    def test_missing_scenario(self, capsys, tmp_path):
        assert run(capsys, "ptp-sim", "--scenario", tmp_path / "none.json")[0] == 2
        assert run(capsys, "ptp-sim", "--scenario", "builtin:nothing")[0] == 2

    def test_wordclock(self, capsys, tmp_path):
        code, payload, _ = run_json(capsys, "wordclock-sim", "--mode", "internal", "--ppm", "0,10",
                                    "--duration", "60s", "--plot", tmp_path / "w.png")
        assert code == 0
        jsonschema.validate(payload, schema("wordclock_sim"))
        assert payload["max_pairwise_drift_s"] == pytest.approx(600e-6, rel=0.01)
        _, payload, _ = run_json(capsys, "wordclock-sim", "--mode", "external", "--ppm", "0,10,-4",
                                 "--duration", "3600s")
        assert payload["max_pairwise_drift_s"] == 0.0
        code, _, err = run(capsys, "wordclock-sim", "--mode", "external", "--ppm", "0", "--duration", "10f")
        assert code == 2 and "frame rate" in err
        assert run(capsys, "wordclock-sim", "--mode", "internal", "--ppm", "a,b", "--duration", "1s")[0] == 2


class TestMisc:
    def test_generators_and_info(self, capsys, tmp_path):
        code, payload, _ = run_json(capsys, "synth-session", "--out-dir", tmp_path, "--mics", 31)
        jsonschema.validate(payload, schema("synth_session"))
        code, payload, _ = run_json(capsys, "info", "--in", tmp_path / "session.wav")
        jsonschema.validate(payload, schema("wav_info"))
        assert payload["channels"] == 32 and payload["extensible"]
        code, payload, _ = run_json(capsys, "make-stimulus", "--out-dir", tmp_path, "--offset", "5ms")
        jsonschema.validate(payload, schema("stimulus"))

    def test_json_error(self, capsys, tmp_path):
        code, payload, _ = run_json(capsys, "ltc-decode", "--in", tmp_path / "none.wav")
        assert code == 2
        jsonschema.validate(payload, schema("error"))

    def test_internal_error_exit_3(self, capsys, tmp_path, monkeypatch):
        def boom(args):
            raise RuntimeError("kaput")

        monkeypatch.setattr(cli, "cmd_info", boom)
        code, _, err = run(capsys, "info", "--in", tmp_path / "x.wav")
        assert code == 3 and "internal error" in err

    def test_usage_error(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["frobnicate"])
        assert info.value.code == 2
