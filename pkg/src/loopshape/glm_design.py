"""Fading-memory least-squares compensator design.

A signal is modelled over its recent past by a small set of basis functions
(monomials ``m**k`` or complex sinusoids ``exp(i*w*m)``), fitted by weighted
least squares with an exponential weight ``exp(sigma*m)``, ``sigma < 0``, and
the fit is re-evaluated at an offset ``m_hat`` samples into the past (lag) or
future (lead).  With an infinitely long window the estimator collapses to a
recursive filter

    H(z) = psi @ inv(O) @ p(z)

where ``O`` is the weighted Gram matrix of the basis, ``p(z)`` holds the
Z transforms of the weighted (conjugated) basis functions, and ``psi`` is the
synthesis row.  The weight fixes the poles; the fit places the zeros.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.linalg

from .ratfun import (
    Poly,
    RationalTF,
    imag_ratio,
    poly_mul,
    poly_pow,
    poly_theta,
    REAL_TOL,
)

COND_LIMIT = 1e12
# expanded (1 - r z^-1)**(K+1) coefficients lose DC accuracy as r -> 1
DC_SELF_CHECK = 1e-6


class DesignError(ValueError):
    """Invalid or numerically unusable design specification."""


class IllConditionedError(DesignError, ArithmeticError):
    pass


class TuningWarning(UserWarning):
    pass


@dataclass(frozen=True)
class PolyBasisSpec:
    K: int
    sigma: float
    m_hat: float = 0.0
    deriv: int = 0

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 0:
            raise DesignError(f"polynomial order K must be a non-negative integer, got {self.K}")
        if not self.sigma < 0:
            raise DesignError(f"sigma must be negative for a decaying weight, got {self.sigma}")
        if int(self.deriv) != self.deriv or self.deriv < 0:
            raise DesignError(f"derivative order must be a non-negative integer, got {self.deriv}")
        if self.deriv > self.K:
            raise DesignError(
                f"derivative order {self.deriv} exceeds polynomial order {self.K}; "
                "the result would be identically zero"
            )


@dataclass(frozen=True)
class SinBasisSpec:
    """Sinusoidal basis specification.

    ``freqs`` are non-negative design frequencies in radians/sample.  Interior
    frequencies (0 < w < pi) stand for a conjugate pair of basis functions;
    0 and pi contribute one real basis function each.  At every design
    frequency the filter response is ``gains[k] * exp(1j * phases[k])``.
    """

    freqs: tuple
    gains: tuple
    phases: tuple
    sigma: float

    def __post_init__(self):
        freqs = tuple(float(w) for w in self.freqs)
        gains = tuple(float(c) for c in self.gains)
        phases = tuple(float(p) for p in (self.phases or [0.0] * len(freqs)))
        object.__setattr__(self, "freqs", freqs)
        object.__setattr__(self, "gains", gains)
        object.__setattr__(self, "phases", phases)
        if not freqs:
            raise DesignError("at least one design frequency is required")
        if not (len(freqs) == len(gains) == len(phases)):
            raise DesignError("freqs, gains and phases must have equal length")
        if not self.sigma < 0:
            raise DesignError(f"sigma must be negative for a decaying weight, got {self.sigma}")
        for w in freqs:
            if not 0.0 <= w <= math.pi + 1e-12:
                raise DesignError(f"design frequency {w} outside [0, pi]")
        if any(b <= a for a, b in zip(freqs, freqs[1:])):
            raise DesignError("design frequencies must be distinct and strictly increasing")
        if any(c < 0 for c in gains):
            raise DesignError("gains must be non-negative")
        for w, c, p in zip(freqs, gains, phases):
            if _is_boundary(w) and c != 0 and abs(math.sin(p)) > 1e-12:
                raise DesignError(
                    f"phase at w={w:g} must be 0 or pi for a real-coefficient filter"
                )

    @classmethod
    def uniform(cls, K: int, N: int, gains, phases, sigma: float) -> "SinBasisSpec":
        """Bins ``w_k = 2*pi*k/N`` for ``k = 0..K``."""
        return cls(tuple(2 * math.pi * k / N for k in range(K + 1)), gains, phases, sigma)

    @property
    def order(self) -> int:
        return sum(1 if _is_boundary(w) else 2 for w in self.freqs)


def _is_boundary(w: float) -> bool:
    return w == 0.0 or abs(w - math.pi) < 1e-12


@dataclass
class DesignResult:
    h: RationalTF
    gram: np.ndarray
    poles: np.ndarray
    condition_estimate: float
    weights: np.ndarray = field(repr=False, default=None)

    @property
    def b(self) -> np.ndarray:
        return self.h.b

    @property
    def a(self) -> np.ndarray:
        return self.h.a


# --- Z transforms of weighted basis functions --------------------------------


def ztrans_weighted_monomial(k: int, sigma: float, sample_period=None) -> RationalTF:
    """Z{exp(sigma*m) * m**k} as a rational function in ``z^-1``.

    Starts from the geometric series ``1/(1 - r z^-1)``, ``r = exp(sigma)``,
    and applies ``-z d/dz`` k times.  Writing the running result as
    ``N / D**j`` with ``D = 1 - r z^-1`` keeps the denominator at
    ``D**(k+1)`` instead of squaring it at every step.
    """
    if not sigma < 0:
        raise DesignError("sigma must be negative")
    r = math.exp(sigma)
    D = Poly([1.0, -r])
    theta_D = poly_theta(D)
    N = Poly([1.0])
    for j in range(1, k + 1):
        N = poly_theta(N) * D - j * (N * theta_D)
    return RationalTF(N, poly_pow(D, k + 1), sample_period)


def weighted_moment(j: int, sigma: float) -> float:
    """sum_m m**j exp(sigma m), i.e. Z{exp(sigma m) m**j} at z = 1.

    The expanded denominator (1 - r z^-1)**(j+1) cancels catastrophically at
    z = 1 when r is close to 1, so the factored form is used instead.  The
    numerator coefficients are all non-negative, so summing them is exact
    to rounding.
    """
    N = ztrans_weighted_monomial(j, sigma).num
    return float(np.sum(N.coeffs.real)) / (1.0 - math.exp(sigma)) ** (j + 1)


def gram_poly(K: int, sigma: float) -> np.ndarray:
    """Weighted Gram matrix of the monomials ``m**0 .. m**K``."""
    if not sigma < 0:
        raise DesignError("sigma must be negative")
    moments = [weighted_moment(j, sigma) for j in range(2 * K + 1)]
    O = np.empty((K + 1, K + 1))
    for k2 in range(K + 1):
        for k1 in range(K + 1):
            O[k2, k1] = moments[k1 + k2]
    return O


def gram_sin(omegas: Sequence[float], sigma: float) -> np.ndarray:
    """Hermitian Gram matrix of ``exp(i*w*m)`` over a signed frequency set.

    Entry (k2, k1) is ``sum_m conj(psi_k2) exp(sigma m) psi_k1 =
    1 / (1 - exp(sigma + i(w_k1 - w_k2)))``.
    """
    if not sigma < 0:
        raise DesignError("sigma must be negative")
    w = np.asarray(omegas, dtype=float)
    diff = w[None, :] - w[:, None]
    O = 1.0 / (1.0 - np.exp(sigma + 1j * diff))
    # exact Hermitian symmetry, not just to rounding
    upper = np.triu(O, 1)
    O = upper + upper.conj().T + np.diag(np.full(len(w), 1.0 / (1.0 - math.exp(sigma))))
    return O


def projection_sin(omega: float, sigma: float, sample_period=None) -> RationalTF:
    """Z{exp((sigma - i*omega) m)} = 1 / (1 - exp(sigma - i*omega) z^-1)."""
    if not sigma < 0:
        raise DesignError("sigma must be negative")
    pole = np.exp(sigma - 1j * omega)
    if abs(pole.imag) < 1e-15 * abs(pole):
        pole = pole.real
    return RationalTF(Poly([1.0]), Poly([1.0, -pole]), sample_period)


def synth_poly(K: int, m_hat: float, d: int = 0) -> np.ndarray:
    """Synthesis row: the d-th derivative of ``m**k`` evaluated at ``m_hat``."""
    if d > K:
        raise DesignError("derivative order exceeds polynomial order")
    row = np.zeros(K + 1)
    for k in range(d, K + 1):
        row[k] = math.factorial(k) / math.factorial(k - d) * float(m_hat) ** (k - d)
    return row


def _time_synthesis_row(spec: PolyBasisSpec) -> np.ndarray:
    # m counts samples into the past, so d/dn = -d/dm
    return (-1.0) ** spec.deriv * synth_poly(spec.K, spec.m_hat, spec.deriv)


# --- assembly ----------------------------------------------------------------


def condition_estimate(O: np.ndarray) -> float:
    """2-norm condition number after symmetric diagonal (Jacobi) scaling.

    Monomial moments span many decades, so the raw condition number mostly
    measures that spread; scaling removes it and leaves the part that
    actually limits the solve.
    """
    d = np.sqrt(np.abs(np.diag(O)))
    if np.any(d == 0) or not np.all(np.isfinite(d)):
        return math.inf
    return float(np.linalg.cond(O / np.outer(d, d)))


def _solve_gram(O: np.ndarray, rhs: np.ndarray, what: str) -> tuple[np.ndarray, float]:
    cond = condition_estimate(O)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditionedError(
            f"Gram matrix for {what} is ill-conditioned (condition {cond:.3g} > {COND_LIMIT:g}); "
            "the order is too high for a weight that decays this slowly"
        )
    d = np.sqrt(np.abs(np.diag(O)))
    S = O / np.outer(d, d)
    try:
        factor = scipy.linalg.cho_factor(S, lower=True)
        x = scipy.linalg.cho_solve(factor, rhs / d)
    except np.linalg.LinAlgError:
        x = scipy.linalg.solve(S, rhs / d)
    return x / d, cond


def design_poly(spec: PolyBasisSpec, sample_period=None) -> DesignResult:
    """Polynomial fading-memory filter.

    Parameters
    ----------
    spec : PolyBasisSpec
        Order ``K``, decay ``sigma``, synthesis offset ``m_hat`` (negative for
        prediction/lead, positive for delay/lag) and derivative order.
    sample_period : float, optional
        Attached to the returned transfer function.

    Returns
    -------
    DesignResult
        ``h`` has denominator ``(1 - exp(sigma) z^-1)**(K+1)`` and ``K+1``
        numerator coefficients.
    """
    K, sigma = spec.K, spec.sigma
    O = gram_poly(K, sigma)
    psi = _time_synthesis_row(spec)
    # psi @ inv(O) == solve(O.T, psi); O is symmetric
    weights, cond = _solve_gram(O, psi, f"K={K}, sigma={sigma}")

    r = math.exp(sigma)
    D = Poly([1.0, -r])
    num = Poly([0.0])
    for k in range(K + 1):
        pk = ztrans_weighted_monomial(k, sigma)
        # every p_k has denominator D**(k+1); lift it to D**(K+1)
        num = num + weights[k] * poly_mul(pk.num, poly_pow(D, K - k))
    h = RationalTF(num, poly_pow(D, K + 1), sample_period)
    if spec.deriv == 0:
        dc_err = abs(h(1.0) - 1.0)
        if dc_err > DC_SELF_CHECK:
            raise IllConditionedError(
                f"K={K}, sigma={sigma}: difference-equation coefficients cannot hold the design "
                f"in double precision (DC gain error {dc_err:.2g}); reduce K or make sigma more negative"
            )
    return DesignResult(h, O, np.full(K + 1, r, dtype=complex), cond, weights)


def _signed_bins(spec: SinBasisSpec) -> tuple[np.ndarray, np.ndarray]:
    """Signed basis frequencies and their synthesis weights.

    The basis function ``exp(i*w*m)`` in the model of ``x(n - m)`` captures
    an input component at frequency ``-w``.  For ``H(exp(i*v)) = c exp(i*phi)``
    at ``v >= 0`` the basis at ``w = -v`` therefore gets weight
    ``c exp(i*phi)`` and its mirror at ``w = +v`` gets the conjugate.
    """
    omegas, weights = [], []
    for w, c, phi in zip(spec.freqs, spec.gains, spec.phases):
        if _is_boundary(w):
            omegas.append(0.0 if w == 0.0 else math.pi)
            weights.append(c * math.cos(phi))
        else:
            omegas += [-w, w]
            weights += [c * np.exp(1j * phi), c * np.exp(-1j * phi)]
    return np.asarray(omegas), np.asarray(weights, dtype=complex)


def design_sin(spec: SinBasisSpec, sample_period=None) -> DesignResult:
    """Sinusoidal fading-memory filter with exact gain/phase at design bins."""
    sigma = spec.sigma
    omegas, psi = _signed_bins(spec)
    O = gram_sin(omegas, sigma)
    # psi @ inv(O): solve O^T x = psi
    weights, cond = _solve_gram(O.T, psi, f"freqs={spec.freqs}, sigma={sigma}")

    dens = [projection_sin(w, sigma).den for w in omegas]
    den = Poly([1.0])
    for d in dens:
        den = den * d
    num = Poly([0.0])
    for k, wk in enumerate(weights):
        others = Poly([1.0])
        for j, d in enumerate(dens):
            if j != k:
                others = others * d
        num = num + wk * others
    h = RationalTF(num, den, sample_period)
    ratio = imag_ratio(h)
    if ratio >= REAL_TOL:
        raise DesignError(f"sinusoidal design is not real (imag ratio {ratio:.3g})")
    h = h.real()
    poles = np.exp(sigma + 1j * omegas)
    return DesignResult(h, O, poles, cond, weights)


def to_highpass(h: RationalTF, m_hat) -> RationalTF:
    """``z**-m_hat - H(z)``: the measured sample minus its fitted value."""
    if isinstance(m_hat, bool) or int(m_hat) != m_hat or m_hat <= 0:
        raise DesignError(f"high-pass conversion needs a positive integer m_hat, got {m_hat}")
    return RationalTF.delay(int(m_hat), h.sample_period) - h


def fir_oracle(spec, M: int) -> np.ndarray:
    """Finite-window estimator taps from the dense weighted normal equations.

    Builds the ``M x (K+1)`` basis matrix explicitly and solves
    ``(Psi^H W Psi) beta = Psi^H W x`` for the unit vectors ``x``, so
    ``y(n) = sum_m h[m] x(n - m)`` applies the same estimator on a window of
    ``M`` samples.  Independent of the Z-domain route in
    :func:`design_poly` / :func:`design_sin`.
    """
    m = np.arange(M, dtype=float)
    w = np.exp(spec.sigma * m)
    if isinstance(spec, PolyBasisSpec):
        if M < spec.K + 1:
            raise DesignError("window shorter than the model order")
        Psi = m[:, None] ** np.arange(spec.K + 1)[None, :]
        psi = _time_synthesis_row(spec)
    elif isinstance(spec, SinBasisSpec):
        omegas, psi = _signed_bins(spec)
        if M < len(omegas):
            raise DesignError("window shorter than the model order")
        Psi = np.exp(1j * m[:, None] * omegas[None, :])
    else:
        raise TypeError(f"unsupported spec type {type(spec).__name__}")
    P = Psi.conj().T * w[None, :]
    G = P @ Psi
    if np.linalg.matrix_rank(G) < G.shape[0]:
        raise DesignError("basis matrix is rank deficient over this window")
    h = psi @ np.linalg.solve(G, P)
    if np.iscomplexobj(h):
        if np.max(np.abs(h.imag)) > REAL_TOL * np.max(np.abs(h)):
            raise DesignError("finite-window estimator is not real")
        h = h.real
    return h


def tuning_hint(m_hat: float, sigma: float) -> Optional[str]:
    """Advice when ``m_hat * sigma`` strays from about -1; never an error."""
    prod = m_hat * sigma + 0.0
    if -3.0 <= prod <= -1.0 / 3.0:
        return None
    return (
        f"m_hat*sigma = {prod:.3g} is outside [-3, -1/3]; a lag filter usually wants "
        "m_hat*sigma close to -1 so the delay is supported by the filter memory"
    )


def warn_tuning(m_hat: float, sigma: float) -> None:
    msg = tuning_hint(m_hat, sigma)
    if msg:
        warnings.warn(msg, TuningWarning, stacklevel=2)
