"""Plant discretization, baseline controllers and LSS pole placement."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .ratfun import (
    Poly,
    RationalTF,
    poly_eval_ascending,
    poly_from_roots,
    poly_roots,
    poly_roots_ascending,
    rf_add,
)

MOTOR_T = 0.05
SIM_T = 0.05


class UnsupportedPlantError(ValueError):
    """Plant structure outside what the ZOH partial-fraction route handles."""


class PlacementError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ContinuousTF:
    """Continuous-time ``num(s)/den(s)``, coefficients in ascending powers of s."""

    num: Poly
    den: Poly

    def __post_init__(self):
        num = self.num if isinstance(self.num, Poly) else Poly(self.num)
        den = self.den if isinstance(self.den, Poly) else Poly(self.den)
        if den.is_zero:
            raise ZeroDivisionError("denominator is identically zero")
        if num.degree > den.degree and not num.is_zero:
            raise UnsupportedPlantError("continuous transfer function is improper")
        object.__setattr__(self, "num", num)
        object.__setattr__(self, "den", den)

    @classmethod
    def from_coeffs(cls, num, den) -> "ContinuousTF":
        return cls(Poly(num), Poly(den))

    def __call__(self, s):
        return poly_eval_ascending(self.num, s) / poly_eval_ascending(self.den, s)

    def poles(self) -> np.ndarray:
        if self.den.degree == 0:
            return np.array([], dtype=complex)
        return poly_roots_ascending(self.den)

    def step_response(self, t) -> np.ndarray:
        """Closed-form unit-step response by partial fractions of G(s)/s."""
        t = np.asarray(t, dtype=float)
        r0, pairs = _step_residues(self)
        y = np.full(t.shape, r0, dtype=complex)
        for p, r in pairs:
            y += r * np.exp(p * t)
        return y.real


@dataclass(frozen=True)
class StateSpace:
    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: float
    sample_period: Optional[float] = None

    def __post_init__(self):
        n = self.A.shape[0]
        if self.A.shape != (n, n) or self.B.shape != (n, 1) or self.C.shape != (1, n):
            raise ValueError("inconsistent state-space dimensions")

    @property
    def order(self) -> int:
        return self.A.shape[0]

    def transfer(self, z) -> complex:
        n = self.order
        x = np.linalg.solve(z * np.eye(n) - self.A, self.B)
        return complex((self.C @ x)[0, 0] + self.D)


@dataclass(frozen=True)
class LSSGains:
    K_obs: np.ndarray
    K_fbk: np.ndarray
    K_int: float

    def as_dict(self) -> dict:
        return {"K_obs": list(map(float, self.K_obs)), "K_fbk": list(map(float, self.K_fbk)),
                "K_int": float(self.K_int)}


# --- continuous plants -------------------------------------------------------


def _step_residues(g: ContinuousTF):
    poles = g.poles()
    scale = max(1.0, float(np.max(np.abs(poles)))) if len(poles) else 1.0
    if np.any(np.abs(poles) < 1e-9 * scale):
        raise UnsupportedPlantError("plant has a pole at s = 0; only simple nonzero poles are supported")
    for i in range(len(poles)):
        for j in range(i + 1, len(poles)):
            if abs(poles[i] - poles[j]) < 1e-7 * scale:
                raise UnsupportedPlantError("plant has repeated poles; only simple poles are supported")
    lead = g.den.coeffs[-1]
    r0 = complex(g(0.0))
    pairs = []
    for i, p in enumerate(poles):
        # residue of N(s) / (s * D(s)) at a simple pole p of D
        others = np.prod([p - q for j, q in enumerate(poles) if j != i]) if len(poles) > 1 else 1.0
        r = poly_eval_ascending(g.num, p) / (p * lead * others)
        pairs.append((complex(p), complex(r)))
    return r0, pairs


def zoh_discretize(g: ContinuousTF, T: float) -> RationalTF:
    """Zero-order-hold equivalent ``(1 - z^-1) Z{g(s)/s}``.

    Each partial-fraction term ``r/(s - p)`` of ``g(s)/s`` maps to
    ``r / (1 - exp(pT) z^-1)``; the ``1/s`` term cancels against the hold.
    Complex pole pairs recombine to real coefficients.
    """
    if T <= 0:
        raise ValueError("sample period must be positive")
    r0, pairs = _step_residues(g)
    one_minus = Poly([1.0, -1.0])
    out = RationalTF.constant(r0, T)
    for p, r in pairs:
        term = RationalTF(one_minus * r, Poly([1.0, -np.exp(p * T)]), T)
        out = rf_add(out, term)
    return out.real()


def sim_plant() -> ContinuousTF:
    """Over-damped test plant 1/(s^2 + 2.813 s + 0.7813): poles near -2.5, -0.3125."""
    return ContinuousTF.from_coeffs([1.0], [0.7813, 2.813, 1.0])


def sim_plant_z(T: float = SIM_T) -> RationalTF:
    return zoh_discretize(sim_plant(), T)


def motor_model() -> RationalTF:
    """Identified motor speed model 1.7263 / (z^2 - 1.2375 z + 0.2624), T = 0.05 s."""
    return RationalTF.from_coeffs([0.0, 0.0, 1.7263], [1.0, -1.2375, 0.2624], MOTOR_T)


# --- baseline controllers ----------------------------------------------------


def integrator_tf(Ki: float, T: float) -> RationalTF:
    """Forward-difference integrator ``Ki T z/(z - 1)``."""
    if T <= 0:
        raise ValueError("sample period must be positive")
    return RationalTF.from_coeffs([Ki * T], [1.0, -1.0], T)


def pid_tf(Kp: float, Ki: float, Kd: float, T: float) -> RationalTF:
    """Positional PID: ``Kp + Ki T z/(z-1) + Kd (z-1)/(T z)``."""
    if T <= 0:
        raise ValueError("sample period must be positive")
    out = RationalTF.constant(Kp, T)
    if Ki:
        out = rf_add(out, integrator_tf(Ki, T))
    if Kd:
        out = rf_add(out, RationalTF.from_coeffs([Kd / T, -Kd / T], [1.0], T))
    return out


# --- state space --------------------------------------------------------------


def to_controllable_canonical(g: RationalTF) -> StateSpace:
    """Companion-form realization with ``B = [0 ... 0 1]^T``.

    For ``g = (b1 z^{n-1} + ... + bn) / (z^n + a1 z^{n-1} + ... + an)`` the
    last row of ``A`` is ``[-an ... -a1]`` and ``C = [bn ... b1]``.
    """
    a = np.asarray(g.a)
    n = len(a) - 1
    if n < 1:
        raise ValueError("transfer function has no dynamics")
    b = np.zeros(n + 1, dtype=np.result_type(g.b, float))
    if len(g.b) > n + 1:
        raise ValueError("numerator longer than denominator: improper in z")
    b[: len(g.b)] = g.b
    if b[0] != 0:
        raise ValueError("transfer function must be strictly proper")
    A = np.zeros((n, n), dtype=a.dtype)
    A[:-1, 1:] = np.eye(n - 1)
    A[-1, :] = -a[1:][::-1]
    B = np.zeros((n, 1))
    B[-1, 0] = 1.0
    C = b[1:][::-1].reshape(1, n)
    return StateSpace(A, B, C, 0.0, g.sample_period)


def char_poly(A: np.ndarray) -> np.ndarray:
    """Characteristic polynomial ``[1, c1, ..., cn]`` by Faddeev-LeVerrier.

    Coefficients come straight from traces, so repeated eigenvalues do not
    smear them the way an eigen-decomposition would.
    """
    n = A.shape[0]
    c = np.zeros(n + 1, dtype=np.result_type(A, float))
    c[0] = 1.0
    M = np.zeros_like(A, dtype=c.dtype)
    I = np.eye(n)
    for k in range(1, n + 1):
        M = A @ M + c[k - 1] * I
        c[k] = -np.trace(A @ M) / k
    return c


def eigenvalues(A: np.ndarray) -> np.ndarray:
    return poly_roots(Poly(char_poly(A)))


def _matrix_poly(coeffs: np.ndarray, A: np.ndarray) -> np.ndarray:
    out = np.zeros_like(A, dtype=float)
    for c in coeffs:
        out = out @ A + c * np.eye(A.shape[0])
    return out


def acker(A: np.ndarray, B: np.ndarray, poles: Sequence[complex]) -> np.ndarray:
    """Ackermann's formula: ``K`` with ``eig(A - B K)`` at ``poles``."""
    n = A.shape[0]
    if len(poles) != n:
        raise PlacementError(f"expected {n} poles, got {len(poles)}")
    Wc = np.hstack([np.linalg.matrix_power(A, i) @ B for i in range(n)])
    if np.linalg.matrix_rank(Wc) < n:
        raise PlacementError("system is not controllable")
    phi = _matrix_poly(poly_from_roots(poles).coeffs.real, A)
    e_last = np.zeros((1, n))
    e_last[0, -1] = 1.0
    return e_last @ np.linalg.solve(Wc, phi)


def servo_matrices(ss: StateSpace) -> tuple[np.ndarray, np.ndarray]:
    """Integrator-augmented plant with the error integrator state appended last.

    v(k+1) = v(k) + r(k+1) - C x(k+1) = v(k) + r - C A x(k) - C B u(k)
    """
    n = ss.order
    A_aug = np.block([[ss.A, np.zeros((n, 1))], [-ss.C @ ss.A, np.ones((1, 1))]])
    B_aug = np.vstack([ss.B, -ss.C @ ss.B])
    return A_aug, B_aug


def current_observer_gain(ss: StateSpace, poles: Sequence[complex]) -> np.ndarray:
    """Gain of the current observer, error dynamics ``A - K C A``.

    predict: x~(k) = A x^(k-1) + B u(k-1)
    correct: x^(k) = x~(k) + K (y(k) - C x~(k))
    """
    CA = ss.C @ ss.A
    Wo = np.vstack([CA @ np.linalg.matrix_power(ss.A, i) for i in range(ss.order)])
    if np.linalg.matrix_rank(Wo) < ss.order:
        raise PlacementError("realization is not observable")
    return acker(ss.A.T, CA.T, poles).T


def lss_design(g: RationalTF, ctrl_poles: Sequence[complex], obs_poles: Sequence[complex]) -> LSSGains:
    """Servo with integral action plus a current observer, by pole placement.

    The control law is ``u = -K_fbk x^ + K_int v`` with ``v`` the running sum
    of tracking errors; ``n + 1`` control poles and ``n`` observer poles.
    """
    ss = to_controllable_canonical(g)
    n = ss.order
    if len(ctrl_poles) != n + 1:
        raise PlacementError(f"need {n + 1} control poles for the integrator-augmented plant")
    if len(obs_poles) != n:
        raise PlacementError(f"need {n} observer poles")
    A_aug, B_aug = servo_matrices(ss)
    K_hat = acker(A_aug, B_aug, ctrl_poles)
    K_fbk = K_hat[0, :n].copy()
    K_int = float(-K_hat[0, n])
    K_obs = current_observer_gain(ss, obs_poles)[:, 0]
    gains = LSSGains(K_obs, K_fbk, K_int)

    target_c = poly_from_roots(ctrl_poles).coeffs.real
    target_o = poly_from_roots(obs_poles).coeffs.real
    got_c = char_poly(A_aug - B_aug @ K_hat)
    got_o = char_poly(ss.A - np.outer(K_obs, ss.C @ ss.A))
    if not (np.allclose(got_c, target_c, atol=1e-8) and np.allclose(got_o, target_o, atol=1e-8)):
        raise PlacementError("placed eigenvalues miss their targets")
    return gains


def closed_loop_matrices(g: RationalTF, gains: LSSGains):
    """State matrices used to check the placement: (servo loop, observer error)."""
    ss = to_controllable_canonical(g)
    A_aug, B_aug = servo_matrices(ss)
    K_hat = np.concatenate([gains.K_fbk, [-gains.K_int]])[None, :]
    return A_aug - B_aug @ K_hat, ss.A - np.outer(gains.K_obs, ss.C @ ss.A)
