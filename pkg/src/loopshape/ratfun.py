"""Polynomials and rational transfer functions in the delay operator z^-1.

Coefficients are stored in ascending powers of ``z^-1``: ``coeffs[m]`` is the
coefficient of ``z^-m``.  This is the layout of the ``b(m)`` / ``a(m)`` rows of
a difference equation, so a filter ``B(z)/A(z)`` realizes

    y(n) = sum_m b(m) x(n - m) - sum_{m>=1} a(m) y(n - m).

The same container is used for continuous-time polynomials in ascending
powers of ``s`` (see :func:`poly_eval_ascending`).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

STRIP_TOL = 1e-12
REAL_TOL = 1e-10
MAX_ROOT_DEGREE = 32

Number = Union[int, float, complex]


class PoleEvaluationError(ArithmeticError):
    """Raised when a rational function is evaluated at (or next to) a pole."""


class SamplePeriodMismatch(ValueError):
    pass


def _as_coeff_array(coeffs) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(coeffs))
    if arr.ndim != 1:
        raise ValueError("coefficients must be one-dimensional")
    if arr.size == 0:
        raise ValueError("a polynomial needs at least one coefficient")
    if np.iscomplexobj(arr):
        arr = arr.astype(complex)
    else:
        arr = arr.astype(float)
    return arr


def canonicalize(coeffs) -> np.ndarray:
    """Strip trailing coefficients below ``1e-12 * max|c|``."""
    arr = _as_coeff_array(coeffs)
    scale = np.max(np.abs(arr))
    if scale == 0.0:
        return arr[:1] * 0
    keep = np.nonzero(np.abs(arr) >= STRIP_TOL * scale)[0]
    return arr[: keep[-1] + 1].copy()


@dataclass(frozen=True, eq=False)
class Poly:
    """Immutable polynomial in ``z^-1`` (or in ``s``, ascending)."""

    coeffs: np.ndarray

    def __post_init__(self):
        arr = canonicalize(self.coeffs)
        arr.setflags(write=False)
        object.__setattr__(self, "coeffs", arr)

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return bool(np.all(self.coeffs == 0))

    @property
    def scale(self) -> float:
        return float(np.max(np.abs(self.coeffs)))

    def __call__(self, z):
        return poly_eval(self, z)

    def __add__(self, other: "Poly") -> "Poly":
        return poly_add(self, other)

    def __sub__(self, other: "Poly") -> "Poly":
        return poly_add(self, -other)

    def __neg__(self) -> "Poly":
        return Poly(-self.coeffs)

    def __mul__(self, other) -> "Poly":
        if isinstance(other, Poly):
            return poly_mul(self, other)
        return Poly(self.coeffs * other)

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"Poly({np.array2string(self.coeffs, precision=6)})"


def poly_add(p: Poly, q: Poly) -> Poly:
    n = max(len(p.coeffs), len(q.coeffs))
    out = np.zeros(n, dtype=np.result_type(p.coeffs, q.coeffs))
    out[: len(p.coeffs)] += p.coeffs
    out[: len(q.coeffs)] += q.coeffs
    return Poly(out)


def poly_mul(p: Poly, q: Poly) -> Poly:
    return Poly(np.convolve(p.coeffs, q.coeffs))


def poly_pow(p: Poly, n: int) -> Poly:
    out = Poly([1.0])
    for _ in range(n):
        out = poly_mul(out, p)
    return out


def poly_eval_ascending(p: Poly, x):
    """Evaluate ``sum_m c_m x^m`` (Horner); ``x`` may be an array."""
    return np.polynomial.polynomial.polyval(x, p.coeffs)


def poly_eval(p: Poly, z):
    """Evaluate ``sum_m c_m z^-m``."""
    return poly_eval_ascending(p, 1.0 / np.asarray(z, dtype=complex))


def poly_dz(p: Poly) -> Poly:
    """d/dz expressed back in the ``z^-1`` convention.

    d/dz z^-m = -m z^-(m+1), so coefficient m moves to index m+1 scaled by -m.
    """
    c = p.coeffs
    out = np.zeros(len(c) + 1, dtype=c.dtype)
    out[1:] = -np.arange(len(c)) * c
    return Poly(out)


def poly_theta(p: Poly) -> Poly:
    """The operator ``-z d/dz``, which maps c_m z^-m to m c_m z^-m."""
    return Poly(np.arange(len(p.coeffs)) * p.coeffs)


def _polish(c_desc: np.ndarray, root: complex, steps: int = 3) -> complex:
    dc = np.polyder(c_desc)
    for _ in range(steps):
        f = np.polyval(c_desc, root)
        d = np.polyval(dc, root)
        if d == 0 or not np.isfinite(d):
            break
        new = root - f / d
        if abs(np.polyval(c_desc, new)) >= abs(f):
            break
        root = new
    return root


def _roots_desc(c_desc: np.ndarray) -> np.ndarray:
    c_desc = np.trim_zeros(np.asarray(c_desc), "f")
    deg = len(c_desc) - 1
    if deg < 1:
        raise ValueError("root finding needs a polynomial of degree >= 1")
    if deg > MAX_ROOT_DEGREE:
        raise ValueError(f"degree {deg} exceeds the root-finding cap of {MAX_ROOT_DEGREE}")
    # companion-matrix eigenvalues, then a few Newton steps
    raw = np.roots(c_desc)
    return np.array([_polish(c_desc, complex(r)) for r in raw])


def poly_roots(p: Poly) -> np.ndarray:
    """Roots in the z plane of a polynomial stored in powers of ``z^-1``.

    ``z^n p(z)`` has descending coefficients equal to ``p.coeffs``, so the
    roots follow from the companion matrix of the stored array directly.
    Trailing zeros are already stripped; leading zeros (pure delays) carry
    no finite nonzero root.
    """
    return _roots_desc(p.coeffs)


def _finite_roots(p: Poly) -> np.ndarray:
    # c z^-k has no finite nonzero root; only its delay remains
    if np.count_nonzero(p.coeffs) <= 1:
        return np.array([], dtype=complex)
    return poly_roots(p)


def poly_roots_ascending(p: Poly) -> np.ndarray:
    """Roots in x of ``sum_m c_m x^m`` (used for s-domain polynomials)."""
    return _roots_desc(p.coeffs[::-1])


def poly_from_roots(roots: Sequence[Number]) -> Poly:
    """Monic polynomial ``prod (1 - r z^-1)``; real if roots come in pairs."""
    c = np.poly(np.asarray(roots, dtype=complex)) if len(roots) else np.array([1.0])
    return Poly(_maybe_real(c))


def _maybe_real(c: np.ndarray, tol: float = REAL_TOL) -> np.ndarray:
    c = np.asarray(c)
    if np.iscomplexobj(c):
        scale = np.max(np.abs(c)) if c.size else 0.0
        if scale == 0.0 or np.max(np.abs(c.imag)) < tol * scale:
            return c.real.copy()
    return c


def _check_period(*tfs: "RationalTF") -> Optional[float]:
    periods = {tf.sample_period for tf in tfs}
    if len(periods) > 1:
        raise SamplePeriodMismatch(f"sample periods differ: {sorted(periods, key=str)}")
    return periods.pop()


@dataclass(frozen=True, eq=False)
class RationalTF:
    """Normalized ratio ``num(z^-1) / den(z^-1)`` with ``den[0] == 1``.

    Leading zeros shared by numerator and denominator (common powers of
    ``z^-1``) are cancelled before normalization.  A denominator with a
    leading zero that cannot be cancelled would be non-causal and is rejected.
    """

    num: Poly
    den: Poly
    sample_period: Optional[float] = None

    def __post_init__(self):
        num = self.num if isinstance(self.num, Poly) else Poly(self.num)
        den = self.den if isinstance(self.den, Poly) else Poly(self.den)
        if den.is_zero:
            raise ZeroDivisionError("denominator is identically zero")
        n, d = num.coeffs, den.coeffs
        if num.is_zero:
            n = n[:1] * 0
        else:
            shift = 0
            while shift < min(len(n), len(d)) and n[shift] == 0 and d[shift] == 0:
                shift += 1
            n, d = n[shift:], d[shift:]
        if d[0] == 0:
            raise ValueError("denominator has a leading zero: non-causal transfer function")
        lead = d[0]
        object.__setattr__(self, "num", Poly(n / lead))
        den_arr = d / lead
        den_arr[0] = 1.0
        object.__setattr__(self, "den", Poly(den_arr))

    @classmethod
    def from_coeffs(cls, b, a=(1.0,), sample_period=None) -> "RationalTF":
        return cls(Poly(b), Poly(a), sample_period)

    @classmethod
    def constant(cls, k: Number, sample_period=None) -> "RationalTF":
        return cls(Poly([k]), Poly([1.0]), sample_period)

    @classmethod
    def delay(cls, n: int, sample_period=None) -> "RationalTF":
        c = np.zeros(n + 1)
        c[n] = 1.0
        return cls(Poly(c), Poly([1.0]), sample_period)

    @property
    def b(self) -> np.ndarray:
        return self.num.coeffs

    @property
    def a(self) -> np.ndarray:
        return self.den.coeffs

    @property
    def is_real(self) -> bool:
        return imag_ratio(self) < REAL_TOL

    def real(self) -> "RationalTF":
        """Drop negligible imaginary parts; raise if they are not negligible."""
        ratio = imag_ratio(self)
        if ratio >= REAL_TOL:
            raise ValueError(f"transfer function is not real (imag/max = {ratio:.3g})")
        return RationalTF(Poly(self.b.real), Poly(self.a.real), self.sample_period)

    def poles(self) -> np.ndarray:
        return _finite_roots(self.den)

    def zeros(self) -> np.ndarray:
        return _finite_roots(self.num)

    def __call__(self, z):
        return rf_eval(self, z)

    def __add__(self, other):
        return rf_add(self, _coerce(other, self))

    __radd__ = __add__

    def __sub__(self, other):
        return rf_add(self, rf_scale(_coerce(other, self), -1.0))

    def __rsub__(self, other):
        return rf_add(_coerce(other, self), rf_scale(self, -1.0))

    def __mul__(self, other):
        if isinstance(other, RationalTF):
            return rf_mul(self, other)
        return rf_scale(self, other)

    __rmul__ = __mul__

    def __neg__(self):
        return rf_scale(self, -1.0)

    def __repr__(self) -> str:
        return (
            f"RationalTF(b={np.array2string(self.b, precision=6)}, "
            f"a={np.array2string(self.a, precision=6)}, T={self.sample_period})"
        )


def _coerce(x, like: RationalTF) -> RationalTF:
    if isinstance(x, RationalTF):
        return x
    return RationalTF.constant(x, like.sample_period)


def imag_ratio(tf: RationalTF) -> float:
    """max |imag coefficient| / max |coefficient| over numerator and denominator."""
    c = np.concatenate([tf.b, tf.a])
    if not np.iscomplexobj(c):
        return 0.0
    return float(np.max(np.abs(c.imag)) / np.max(np.abs(c)))


def rf_add(f: RationalTF, g: RationalTF) -> RationalTF:
    T = _check_period(f, g)
    if np.array_equal(f.a, g.a):
        return RationalTF(f.num + g.num, f.den, T)
    num = f.num * g.den + g.num * f.den
    return RationalTF(num, f.den * g.den, T)


def rf_mul(f: RationalTF, g: RationalTF) -> RationalTF:
    T = _check_period(f, g)
    return RationalTF(f.num * g.num, f.den * g.den, T)


def rf_scale(f: RationalTF, k: Number) -> RationalTF:
    return RationalTF(f.num * k, f.den, f.sample_period)


def rf_reciprocal(f: RationalTF) -> RationalTF:
    return RationalTF(f.den, f.num, f.sample_period)


def rf_eval(f: RationalTF, z):
    """Evaluate ``num(z)/den(z)``; accepts scalars or arrays."""
    z = np.asarray(z, dtype=complex)
    den = poly_eval(f.den, z)
    if np.any(np.abs(den) <= 1e-300):
        raise PoleEvaluationError("evaluation at a pole")
    out = poly_eval(f.num, z) / den
    return out.item() if out.ndim == 0 else out


def rf_differentiate(f: RationalTF) -> RationalTF:
    """d/dz by the quotient rule, kept in the ``z^-1`` coefficient layout."""
    num = poly_dz(f.num) * f.den - f.num * poly_dz(f.den)
    return RationalTF(num, f.den * f.den, f.sample_period)


def padded(tf: RationalTF, length: Optional[int] = None) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(b, a)`` zero-padded to a common length for printing."""
    n = length or max(len(tf.b), len(tf.a))
    b = np.zeros(n, dtype=tf.b.dtype)
    a = np.zeros(n, dtype=tf.a.dtype)
    b[: len(tf.b)] = tf.b
    a[: len(tf.a)] = tf.a
    return b, a


def impulse_response(tf: RationalTF, n: int) -> np.ndarray:
    """First ``n`` terms of the power series of ``num/den`` by long division."""
    b = np.zeros(n, dtype=np.result_type(tf.b, tf.a, float))
    k = min(n, len(tf.b))
    b[:k] = tf.b[:k]
    a = tf.a
    h = np.zeros(n, dtype=b.dtype)
    for i in range(n):
        acc = b[i]
        for j in range(1, min(i, len(a) - 1) + 1):
            acc -= a[j] * h[i - j]
        h[i] = acc
    return h
