"""Sample-by-sample simulation of the two-degree-of-freedom loop.

Signal flow per sample ``n``::

    r~ = K_r * G_r[r]                       reference shaper
    c  = out_delay[plant_out + d_q]         disturbance added after the plant
    e  = r~ - (c + d_r)                     sensor noise on the measurement
    u  = sat(K_e * G_e[e] + G_i[e])         or the PID / LSS law
    plant input = in_delay[u]

The plant must be strictly proper, so its output at ``n`` only depends on
inputs up to ``n - 1`` and the loop has no algebraic cycle.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from .ratfun import RationalTF
from .plant_tools import LSSGains, StateSpace, integrator_tf, pid_tf, to_controllable_canonical

MIN_METRIC_LENGTH = 64


class SimulationError(ValueError):
    pass


class DF2Filter:
    """Transposed direct-form II realization of a real ``RationalTF``.

    Implements ``y(n) = sum b_m x(n-m) - sum_{m>=1} a_m y(n-m)`` with
    ``max(len(b), len(a)) - 1`` state variables.
    """

    def __init__(self, tf: RationalTF):
        if not tf.is_real:
            raise SimulationError("only real-coefficient filters can be simulated")
        b, a = np.asarray(tf.b.real, float), np.asarray(tf.a.real, float)
        n = max(len(b), len(a))
        self.b = np.zeros(n)
        self.a = np.zeros(n)
        self.b[: len(b)] = b
        self.a[: len(a)] = a
        self.state = np.zeros(n - 1)

    def step(self, x: float) -> float:
        s = self.state
        y = self.b[0] * x + (s[0] if len(s) else 0.0)
        if len(s):
            s[:-1] = s[1:] + self.b[1:-1] * x - self.a[1:-1] * y
            s[-1] = self.b[-1] * x - self.a[-1] * y
        return float(y)

    def run(self, xs) -> np.ndarray:
        return np.array([self.step(float(x)) for x in xs])


def df2_step(state: DF2Filter, x: float) -> float:
    return state.step(x)


class _DelayLine:
    def __init__(self, n: int):
        self.buf = deque([0.0] * n, maxlen=n) if n > 0 else None

    def push(self, x: float) -> float:
        if self.buf is None:
            return x
        out = self.buf[0]
        self.buf.append(x)
        return out


class _StatePlant:
    """Strictly proper plant run in controllable canonical form."""

    def __init__(self, g: RationalTF, x0=None):
        try:
            self.ss: StateSpace = to_controllable_canonical(g)
        except ValueError as exc:
            raise SimulationError(f"plant must be strictly proper: {exc}") from exc
        self.A = np.real(self.ss.A).astype(float)
        self.B = self.ss.B[:, 0].astype(float)
        self.C = np.real(self.ss.C[0]).astype(float)
        self.x = np.zeros(self.ss.order) if x0 is None else np.asarray(x0, float).copy()

    def output(self) -> float:
        return float(self.C @ self.x)

    def advance(self, u: float) -> None:
        self.x = self.A @ self.x + self.B * u


@dataclass(frozen=True)
class PIDGains:
    Kp: float
    Ki: float
    Kd: float


@dataclass
class LoopConfig:
    """One instance of the two-degree-of-freedom loop.

    ``controller`` selects the law: ``None`` for ``K_e G_e`` plus the optional
    parallel integrator ``Ki``, :class:`PIDGains`, or :class:`LSSGains`.
    ``io_delay`` samples are inserted on both sides of the plant and
    ``saturation`` is ``(u_min, u_max)``.  ``feedback=False`` opens the loop
    (``e = r~``) for open-loop response checks.
    """

    plant: RationalTF
    K_e: float = 1.0
    G_e: Optional[RationalTF] = None
    Ki: Optional[float] = None
    G_r: Optional[RationalTF] = None
    K_r: float = 1.0
    controller: Union[None, PIDGains, LSSGains] = None
    io_delay: int = 0
    saturation: Optional[tuple] = None
    T: float = 1.0
    feedback: bool = True

    def __post_init__(self):
        if self.io_delay < 0 or int(self.io_delay) != self.io_delay:
            raise SimulationError("io_delay must be a non-negative integer")
        b = self.plant.b
        if b[0] != 0:
            raise SimulationError("plant must be strictly proper (zero first impulse-response sample)")
        if self.saturation is not None:
            lo, hi = self.saturation
            if lo > hi:
                raise SimulationError("saturation lower bound exceeds upper bound")

    @property
    def kind(self) -> str:
        if isinstance(self.controller, PIDGains):
            return "pid"
        if isinstance(self.controller, LSSGains):
            return "lss"
        return "cmp"

    def controller_tf(self) -> RationalTF:
        """Forward-path controller C(z) for the CMP and PID structures."""
        T = self.plant.sample_period
        if isinstance(self.controller, PIDGains):
            g = self.controller
            return _with_period(pid_tf(g.Kp, g.Ki, g.Kd, self.T), T)
        if isinstance(self.controller, LSSGains):
            raise SimulationError("the LSS controller has no single forward-path transfer function")
        ge = self.G_e if self.G_e is not None else RationalTF.constant(1.0, T)
        out = _with_period(ge, T) * self.K_e
        if self.Ki:
            out = out + _with_period(integrator_tf(self.Ki, self.T), T)
        return out

    def open_loop(self) -> RationalTF:
        """K_e G_e + G_i in series with the plant and the round-trip delay."""
        L = self.controller_tf() * self.plant
        if self.io_delay:
            L = L * RationalTF.delay(2 * self.io_delay, self.plant.sample_period)
        return L


def _with_period(tf: RationalTF, T) -> RationalTF:
    return RationalTF(tf.num, tf.den, T)


@dataclass(frozen=True)
class Sinusoid:
    amplitude: float
    omega: float
    phase: float = 0.0

    def __post_init__(self):
        if not 0 < self.omega <= math.pi:
            raise SimulationError("disturbance frequency must lie in (0, pi] rad/sample")

    def samples(self, n: int) -> np.ndarray:
        return self.amplitude * np.sin(self.omega * np.arange(n) + self.phase)


@dataclass(frozen=True)
class GaussianNoise:
    mean: float
    variance: float
    seed: int

    def __post_init__(self):
        if self.variance < 0:
            raise SimulationError("noise variance must be non-negative")
        if self.seed is None:
            raise SimulationError("a seed is required for reproducible noise")


@dataclass(frozen=True)
class SignalSpec:
    reference: str = "step"
    amplitude: float = 1.0
    start: int = 0
    disturbance: Optional[Sinusoid] = None
    noise: Optional[GaussianNoise] = None

    def __post_init__(self):
        if self.reference not in ("step", "zero", "ramp"):
            raise SimulationError(f"unknown reference kind {self.reference!r}")

    def reference_samples(self, n: int) -> np.ndarray:
        k = np.arange(n)
        if self.reference == "zero":
            return np.zeros(n)
        if self.reference == "step":
            return np.where(k >= self.start, self.amplitude, 0.0)
        return np.where(k >= self.start, self.amplitude * (k - self.start), 0.0)


@dataclass(frozen=True)
class SimTrace:
    r: np.ndarray
    e: np.ndarray
    u: np.ndarray
    c: np.ndarray
    dq: np.ndarray
    dr: np.ndarray
    T: float
    x_true: Optional[np.ndarray] = field(default=None, repr=False)
    x_hat: Optional[np.ndarray] = field(default=None, repr=False)

    @property
    def length(self) -> int:
        return len(self.c)

    def rows(self):
        for n in range(self.length):
            yield (n, n * self.T, self.r[n], self.e[n], self.u[n], self.c[n], self.dq[n], self.dr[n])


@dataclass(frozen=True)
class Metrics:
    overshoot_pct: Optional[float]
    settling_time_samples: Optional[int]
    steady_state_error: float
    residual_amplitude: Optional[float] = None

    def as_dict(self) -> dict:
        return {
            "overshoot_pct": self.overshoot_pct,
            "settling_time_samples": self.settling_time_samples,
            "steady_state_error": self.steady_state_error,
            "residual_amplitude": self.residual_amplitude,
        }


def gaussian_noise(mean: float, variance: float, seed: int, n: int) -> np.ndarray:
    """Box-Muller normal deviates from NumPy's PCG64 uniform stream.

    Pairs ``(u1, u2)`` are drawn as two consecutive blocks of ``ceil(n/2)``
    uniforms; ``u1`` is mapped to ``(0, 1]`` so the log never sees zero.
    Both cosine and sine outputs are used, interleaved.
    """
    if variance < 0:
        raise ValueError("variance must be non-negative")
    if n == 0:
        return np.zeros(0)
    if variance == 0:
        return np.full(n, float(mean))
    gen = np.random.Generator(np.random.PCG64(seed))
    half = (n + 1) // 2
    u1 = 1.0 - gen.random(half)
    u2 = gen.random(half)
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * half)
    z[0::2] = rad * np.cos(2 * np.pi * u2)
    z[1::2] = rad * np.sin(2 * np.pi * u2)
    return mean + math.sqrt(variance) * z[:n]


def _inputs(config: LoopConfig, signals: SignalSpec, n: int):
    r = signals.reference_samples(n)
    dq = signals.disturbance.samples(n) if signals.disturbance else np.zeros(n)
    if signals.noise:
        nz = signals.noise
        dr = gaussian_noise(nz.mean, nz.variance, nz.seed, n)
    else:
        dr = np.zeros(n)
    shaper = DF2Filter(config.G_r) if config.G_r is not None else None
    rs = np.array([config.K_r * (shaper.step(x) if shaper else x) for x in r])
    return r, rs, dq, dr


def _clip(u: float, sat) -> float:
    if sat is None:
        return u
    return min(max(u, sat[0]), sat[1])


def simulate(config: LoopConfig, signals: SignalSpec, n: int, plant_x0=None) -> SimTrace:
    """Run the closed loop for ``n`` samples and record every signal."""
    if config.kind == "lss":
        return simulate_lss(config, signals, n, plant_x0=plant_x0)
    r, rs, dq, dr = _inputs(config, signals, n)
    plant = _StatePlant(config.plant, plant_x0)
    ctrl = DF2Filter(config.controller_tf())
    in_delay, out_delay = _DelayLine(config.io_delay), _DelayLine(config.io_delay)

    e = np.zeros(n)
    u = np.zeros(n)
    c = np.zeros(n)
    for k in range(n):
        c[k] = out_delay.push(plant.output() + dq[k])
        e[k] = rs[k] - (c[k] + dr[k]) if config.feedback else rs[k]
        u[k] = _clip(ctrl.step(e[k]), config.saturation)
        plant.advance(in_delay.push(u[k]))
    return SimTrace(r, e, u, c, dq, dr, config.T)


def simulate_lss(config: LoopConfig, signals: SignalSpec, n: int, plant_x0=None) -> SimTrace:
    """Integral servo with a current observer.

    Per sample: predict ``x~ = A x^ + B u_prev``, correct with the measured
    output, accumulate ``v += r~ - y``, and apply ``u = -K_fbk x^ + K_int v``.
    The observer model uses the plant's canonical realization and knows
    nothing about ``io_delay``.
    """
    gains = config.controller
    if not isinstance(gains, LSSGains):
        raise SimulationError("simulate_lss needs LSSGains as the controller")
    if not config.feedback:
        raise SimulationError("the LSS servo cannot run with the feedback path open")
    plant = _StatePlant(config.plant, plant_x0)
    nx = plant.ss.order
    if len(gains.K_obs) != nx or len(gains.K_fbk) != nx:
        raise SimulationError(f"LSS gains sized for {len(gains.K_fbk)} states, plant has {nx}")
    r, rs, dq, dr = _inputs(config, signals, n)
    A, B, C = plant.A, plant.B, plant.C
    K_obs = np.asarray(gains.K_obs, float)
    K_fbk = np.asarray(gains.K_fbk, float)
    in_delay, out_delay = _DelayLine(config.io_delay), _DelayLine(config.io_delay)

    e, u, c = np.zeros(n), np.zeros(n), np.zeros(n)
    x_true, x_hat = np.zeros((n, nx)), np.zeros((n, nx))
    xh = np.zeros(nx)
    v = 0.0
    u_prev = 0.0
    for k in range(n):
        x_true[k] = plant.x
        c[k] = out_delay.push(plant.output() + dq[k])
        y = c[k] + dr[k]
        pred = A @ xh + B * u_prev
        xh = pred + K_obs * (y - C @ pred)
        x_hat[k] = xh
        e[k] = rs[k] - y
        v += e[k]
        u[k] = _clip(float(-K_fbk @ xh + gains.K_int * v), config.saturation)
        u_prev = u[k]
        plant.advance(in_delay.push(u[k]))
    return SimTrace(r, e, u, c, dq, dr, config.T, x_true, x_hat)


def residual_amplitude(signal, omega: float) -> float:
    """Amplitude of the ``omega`` component over the final quarter of a signal.

    Fits ``alpha sin(omega n) + beta cos(omega n) + gamma`` by least squares
    and returns ``hypot(alpha, beta)``.  The constant term absorbs any
    steady-state offset.
    """
    x = np.asarray(signal.c if isinstance(signal, SimTrace) else signal, dtype=float)
    if len(x) < MIN_METRIC_LENGTH:
        raise SimulationError(f"trace too short for metrics ({len(x)} < {MIN_METRIC_LENGTH})")
    start = len(x) - len(x) // 4
    k = np.arange(start, len(x))
    X = np.column_stack([np.sin(omega * k), np.cos(omega * k), np.ones(len(k))])
    coef, *_ = np.linalg.lstsq(X, x[start:], rcond=None)
    return float(math.hypot(coef[0], coef[1]))


def step_metrics(trace: SimTrace, omega_q: Optional[float] = None) -> Metrics:
    c = trace.c
    if len(c) < MIN_METRIC_LENGTH:
        raise SimulationError(f"trace too short for metrics ({len(c)} < {MIN_METRIC_LENGTH})")
    tail = max(1, len(c) // 10)
    final = float(np.mean(c[-tail:]))
    sse = float(np.mean(trace.r[-tail:]) - final)
    overshoot = settle = None
    if final != 0.0:
        overshoot = max(0.0, float((np.max(c * np.sign(final)) - abs(final)) / abs(final) * 100.0))
        outside = np.nonzero(np.abs(c - final) > 0.02 * abs(final))[0]
        if len(outside) == 0:
            settle = 0
        elif outside[-1] < len(c) - 1:
            settle = int(outside[-1] + 1)
    amp = residual_amplitude(trace, omega_q) if omega_q else None
    return Metrics(overshoot, settle, sse, amp)
