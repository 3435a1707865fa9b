"""Deterministic SVG rendering of Bode tables and simulation traces.

Plots use matplotlib's non-interactive SVG backend with a fixed hash salt
and no date metadata, so the same data always yields the same bytes.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("svg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .freq_analysis import BodePoint  # noqa: E402
from .loop_sim import SimTrace  # noqa: E402

_RC = {"svg.hashsalt": "loopshape", "svg.fonttype": "path", "figure.dpi": 72}


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None, "Creator": None})
    plt.close(fig)


def bode_svg(table: Sequence[BodePoint], path, title: str = "") -> None:
    """Three stacked panels: magnitude in dB, linear magnitude, phase in degrees."""
    f = np.array([p.freq for p in table])
    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(3, 1, sharex=True, figsize=(6.4, 7.2))
        axes[0].plot(f, [p.mag_db for p in table])
        axes[0].set_ylabel("gain (dB)")
        axes[1].plot(f, [p.mag_linear for p in table])
        axes[1].set_ylabel("gain (linear)")
        axes[2].plot(f, [p.phase_deg for p in table])
        axes[2].set_ylabel("phase (deg)")
        axes[2].set_xlabel("frequency (cycles/sample)")
        for ax in axes:
            ax.grid(True, alpha=0.4)
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        _save(fig, path)


def trace_svg(trace: SimTrace, path, title: str = "") -> None:
    """Reference and output, control effort, and error against time."""
    t = np.arange(trace.length) * trace.T
    with matplotlib.rc_context(_RC):
        fig, axes = plt.subplots(3, 1, sharex=True, figsize=(6.4, 7.2))
        axes[0].plot(t, trace.r, label="r")
        axes[0].plot(t, trace.c, label="c")
        axes[0].legend(loc="best")
        axes[0].set_ylabel("output")
        axes[1].plot(t, trace.u)
        axes[1].set_ylabel("u")
        axes[2].plot(t, trace.e)
        axes[2].set_ylabel("e")
        axes[2].set_xlabel("time (s)")
        for ax in axes:
            ax.grid(True, alpha=0.4)
        if title:
            axes[0].set_title(title)
        fig.tight_layout()
        _save(fig, path)
