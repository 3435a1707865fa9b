"""Frequency response, Bode tables and stability margins of sampled loops.

Frequencies are in cycles/sample throughout (Nyquist = 0.5).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .ratfun import PoleEvaluationError, RationalTF, poly_eval, rf_eval, rf_mul, rf_scale

GRID_POINTS = 4096
BISECT_TOL = 1e-10
POLE_ADJACENCY = 1e-4


@dataclass(frozen=True)
class BodePoint:
    freq: float
    mag_db: float
    mag_linear: float
    phase_deg: float


@dataclass(frozen=True)
class MarginReport:
    """Gain, phase and delay margins of an open loop.

    ``gm_linear`` is ``inf`` and ``pm_deg`` / ``dm_samples`` are ``None`` when
    the corresponding crossover does not exist.  ``dm_samples`` satisfies
    ``dm_samples * 2*pi*pm_freq == radians(pm_deg)``.
    """

    gm_linear: float
    gm_freq: Optional[float]
    pm_deg: Optional[float]
    pm_freq: Optional[float]
    dm_samples: Optional[float]
    sample_period: Optional[float]
    multiple_phase_crossovers: bool = False
    multiple_gain_crossovers: bool = False

    @property
    def gm_db(self) -> float:
        return 20 * math.log10(self.gm_linear) if self.gm_linear > 0 else -math.inf

    @property
    def dm_seconds(self) -> Optional[float]:
        if self.dm_samples is None or self.sample_period is None:
            return None
        return self.dm_samples * self.sample_period

    def as_dict(self) -> dict:
        return {
            "gm_linear": self.gm_linear,
            "gm_freq_cps": self.gm_freq,
            "pm_deg": self.pm_deg,
            "pm_freq_cps": self.pm_freq,
            "dm_samples": self.dm_samples,
            "dm_seconds": self.dm_seconds,
            "T": self.sample_period,
            "multiple_phase_crossovers": self.multiple_phase_crossovers,
            "multiple_gain_crossovers": self.multiple_gain_crossovers,
        }


def _z(freqs) -> np.ndarray:
    return np.exp(2j * np.pi * np.asarray(freqs, dtype=float))


def freq_response(h: RationalTF, freqs) -> np.ndarray:
    """Complex response at ``z = exp(i 2 pi f)``.

    Points that land on a unit-circle pole come back as ``nan`` rather than
    aborting the whole grid.
    """
    f = np.atleast_1d(np.asarray(freqs, dtype=float))
    if np.any(f < 0) or np.any(f > 0.5):
        raise ValueError("frequencies must lie in [0, 0.5] cycles/sample")
    z = _z(f)
    with np.errstate(divide="ignore", invalid="ignore"):
        num = poly_eval(h.num, z)
        den = poly_eval(h.den, z)
        out = np.where(np.abs(den) > 1e-300, num / np.where(den == 0, 1, den), np.nan + 0j)
    return out


def group_delay(h: RationalTF, f: float, step: float = 1e-6) -> float:
    """-d(phase)/d(omega) in samples, by central difference in omega.

    Raises :class:`PoleEvaluationError` when ``exp(i 2 pi f)`` lies within
    ``POLE_ADJACENCY`` of a pole, where the difference quotient is useless.
    """
    w = 2 * math.pi * f
    if h.den.degree > 0:
        gap = np.min(np.abs(h.poles() - np.exp(1j * w)))
        if gap < POLE_ADJACENCY:
            raise PoleEvaluationError(f"group delay requested next to a pole at f={f}")
    try:
        hp = rf_eval(h, np.exp(1j * (w + step)))
        hm = rf_eval(h, np.exp(1j * (w - step)))
    except PoleEvaluationError as exc:
        raise PoleEvaluationError(f"group delay requested next to a pole at f={f}") from exc
    if hp == 0 or hm == 0:
        raise PoleEvaluationError(f"group delay requested next to a zero at f={f}")
    dphi = np.angle(hp / hm)
    return float(-dphi / (2 * step))


def open_loop(blocks: Sequence[RationalTF], gain: float = 1.0) -> RationalTF:
    if not blocks:
        raise ValueError("open_loop needs at least one block")
    out = blocks[0]
    for blk in blocks[1:]:
        out = rf_mul(out, blk)
    return rf_scale(out, gain) if gain != 1.0 else out


def _bisect(fn, lo: float, hi: float, flo: float) -> float:
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        fm = fn(mid)
        if (fm > 0) == (flo > 0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _sign_changes(vals: np.ndarray) -> np.ndarray:
    s = np.sign(vals)
    return np.nonzero((s[:-1] * s[1:] < 0) | ((s[:-1] != 0) & (s[1:] == 0)))[0]


def phase_crossovers(L: RationalTF, n: int = GRID_POINTS) -> list[float]:
    """Frequencies in (0, 0.5] where L(e^{jw}) crosses the negative real axis."""
    f = np.arange(1, n + 1) * (0.5 / n)
    vals = freq_response(L, f)
    im = vals.imag
    # L is real on the real axis, so Nyquist itself is always a real-axis point
    im[-1] = 0.0
    out = []
    for i in _sign_changes(im):
        if im[i + 1] == 0 and i + 1 == n - 1:
            fc = 0.5
        else:
            fc = _bisect(lambda x: rf_eval(L, np.exp(2j * np.pi * x)).imag, f[i], f[i + 1], im[i])
        if rf_eval(L, np.exp(2j * np.pi * fc)).real < 0:
            out.append(fc)
    if vals[-1].real < 0 and 0.5 not in out:
        out.append(0.5)
    return sorted(set(out))


def gain_crossovers(L: RationalTF, n: int = GRID_POINTS) -> list[float]:
    """Frequencies in (0, 0.5] where |L| crosses 1."""
    f = np.arange(1, n + 1) * (0.5 / n)
    g = np.log(np.abs(freq_response(L, f)))
    out = []
    for i in _sign_changes(g):
        out.append(
            _bisect(lambda x: math.log(abs(rf_eval(L, np.exp(2j * np.pi * x)))), f[i], f[i + 1], g[i])
        )
    return out


def margins(L: RationalTF, T: Optional[float] = None) -> MarginReport:
    """Gain, phase and delay margins of the open loop ``L``.

    The gain margin is ``1/|L|`` at a -180 degree crossing, the phase margin
    ``180 + angle(L)`` at unity gain, and the delay margin the pure delay
    that would use up the phase margin at the gain crossover,
    ``radians(PM) / (T * w_gxo)`` seconds, reported in samples.  With several
    crossovers the smallest margin is reported and the multiplicity flagged.
    """
    T = T if T is not None else L.sample_period
    pcs = phase_crossovers(L)
    gcs = gain_crossovers(L)

    gm, gm_f = math.inf, None
    for fc in pcs:
        cand = 1.0 / abs(rf_eval(L, np.exp(2j * np.pi * fc)))
        if cand < gm:
            gm, gm_f = cand, fc

    pm = pm_f = dm = None
    for fc in gcs:
        ang = math.degrees(np.angle(rf_eval(L, np.exp(2j * np.pi * fc))))
        cand = (ang + 180.0) % 360.0
        if cand > 180.0:
            cand -= 360.0
        if pm is None or cand < pm:
            pm, pm_f = cand, fc
    if pm is not None:
        dm = math.radians(pm) / (2 * math.pi * pm_f)

    return MarginReport(
        gm_linear=gm,
        gm_freq=gm_f,
        pm_deg=pm,
        pm_freq=pm_f,
        dm_samples=dm,
        sample_period=T,
        multiple_phase_crossovers=len(pcs) > 1,
        multiple_gain_crossovers=len(gcs) > 1,
    )


def frequency_grid(n_points: int, spacing: str = "linear", f_min: float = 1e-3) -> np.ndarray:
    if n_points < 2:
        raise ValueError("need at least two grid points")
    if spacing == "linear":
        return np.arange(1, n_points + 1) * (0.5 / n_points)
    if spacing == "log":
        return np.geomspace(f_min, 0.5, n_points)
    raise ValueError(f"unknown spacing {spacing!r}")


def bode_table(h: RationalTF, n_points: int = 512, spacing: str = "linear",
               f_min: float = 1e-3) -> list[BodePoint]:
    f = frequency_grid(n_points, spacing, f_min)
    H = freq_response(h, f)
    mag = np.abs(H)
    with np.errstate(divide="ignore"):
        db = 20 * np.log10(mag)
    phase = np.degrees(np.unwrap(np.angle(H)))
    return [BodePoint(float(a), float(b), float(c), float(d)) for a, b, c, d in zip(f, db, mag, phase)]


def peak_phase(h: RationalTF, n_points: int = 8192) -> tuple[float, float]:
    """(max phase in degrees, frequency) over a fine linear grid."""
    table = bode_table(h, n_points)
    best = max(table, key=lambda p: p.phase_deg)
    return best.phase_deg, best.freq


def peak_gain_db(h: RationalTF, n_points: int = 8192) -> tuple[float, float]:
    table = bode_table(h, n_points)
    best = max(table, key=lambda p: p.mag_db)
    return best.mag_db, best.freq


def sensitivity(L: RationalTF) -> RationalTF:
    """S = 1 / (1 + L): output response to a disturbance added after the plant."""
    return RationalTF(L.den, L.den + L.num, L.sample_period)


def iter_rows(table: Iterable[BodePoint]):
    for p in table:
        yield (p.freq, p.mag_db, p.mag_linear, p.phase_deg)
