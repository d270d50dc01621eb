from __future__ import annotations

import numpy as np
import pytest

from avsync.ltc import LtcEncodeConfig, encode_ltc
from avsync.timecode import FrameRate, Timecode


def make_ltc(fps=30, sr=48000, n=30, start="00:00:00:00", amplitude=0.5, user_bits=0):
    rate = FrameRate(fps)
    cfg = LtcEncodeConfig(rate, sr, amplitude, Timecode.parse(start, rate), user_bits)
    return encode_ltc(cfg, n)


def add_noise(x, snr_db, seed):
    """White Gaussian noise at ``snr_db`` relative to the signal's mean power."""
    rng = np.random.default_rng(seed)
    power = float(np.mean(np.asarray(x) ** 2))
    return x + rng.normal(0.0, np.sqrt(power / 10 ** (snr_db / 10)), len(x))


@pytest.fixture
def ltc_factory():
    return make_ltc


_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
