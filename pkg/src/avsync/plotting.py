"""Report figures (PNG, rendered off-screen).

PNG metadata is stripped so repeated runs write byte-identical files.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGURE_SIZE = (7.0, 4.0)
DPI = 100
_STYLE = {
    "font.size": 9,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "axes.spines.top": False,
    "axes.spines.right": False,
}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=DPI, format="png", metadata={"Software": None})
    plt.close(fig)


def plot_ptp_residuals(trace, path, spread: float | None = None):
    """|residual| per slave against round number, log scale."""
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=FIGURE_SIZE)
        rounds = np.arange(1, trace.n_rounds + 1)
        floor = 1e-15
        for i, sid in enumerate(trace.slave_ids):
            ax.semilogy(rounds, np.maximum(np.abs(trace.residuals[:, i]), floor), lw=0.8, label=sid)
        ax.axhline(6e-9, color="k", ls="--", lw=0.8)
        ax.set_xlabel("round")
        ax.set_ylabel("|slave - master| (s)")
        title = "PTP residual offset"
        if spread is not None:
            title += f" (final spread {spread * 1e9:.2f} ns)"
        ax.set_title(title)
        if len(trace.slave_ids) <= 12:
            ax.legend(fontsize=6, ncol=4, loc="upper right")
        _save(fig, path)


def plot_sync_report(audio, report, path, context_s: float = 0.1):
    """Mic waveform around the event with onset and visual-frame markers."""
    sr = audio.sample_rate
    x = audio.mono
    centre = report.visual_frame * sr // report.fps
    half = int(context_s * sr)
    lo, hi = max(0, centre - half), min(len(x), centre + half)
    t = (np.arange(lo, hi) - centre) / sr * 1000.0
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=FIGURE_SIZE)
        ax.plot(t, x[lo:hi], lw=0.6, color="0.3")
        ax.axvline(0.0, color="tab:blue", lw=1.2, label=f"visual frame {report.visual_frame}")
        ax.axvline(1000.0 * report.offset, color="tab:red", lw=1.2, ls="--",
                   label=f"onset ({1000 * report.offset:+.2f} ms)")
        ax.axvspan(-1000.0 * report.threshold, 1000.0 * report.threshold, color="tab:green", alpha=0.1,
                   label="pass region")
        ax.set_xlabel("time relative to visual event (ms)")
        ax.set_ylabel("amplitude")
        ax.set_title(f"AV sync: {'PASS' if report.passed else 'FAIL'}")
        ax.legend(fontsize=7, loc="upper right")
        _save(fig, path)


def plot_wordclock(result, ppm, path, points: int = 50):
    """Accumulated offset of each device against the first, over the run."""
    ppm = np.asarray(ppm, dtype=float)
    t = np.linspace(0.0, result.duration, points)
    with plt.rc_context(_STYLE):
        fig, ax = plt.subplots(figsize=FIGURE_SIZE)
        for i, p in enumerate(ppm):
            lag = t / (1 + p * 1e-6) - t / (1 + ppm[0] * 1e-6)
            ax.plot(t, lag * 1e6, lw=1.0, label=f"device {i} ({p:g} ppm)")
        ax.set_xlabel("elapsed time (s)")
        ax.set_ylabel("offset vs device 0 (us)")
        ax.set_title(f"word-clock drift, max {result.max_pairwise_drift * 1e6:.3f} us")
        ax.legend(fontsize=7)
        _save(fig, path)
