"""Truncated power series and the analytic symbols they represent.

A :class:`PowerSeries` holds the first ``N`` Taylor coefficients at the origin
of a function analytic on the open unit disc, together with an exactness
record: ``exact_degree`` is the true degree when the function is a
polynomial, ``None`` when it has infinitely many nonzero coefficients.

A :class:`SymbolSpec` is a structured description of such a function
(polynomial, disc automorphism, the unit singular function, ...).  Specs
evaluate in closed form and know how to expand themselves composed with a
series, which is how compositions with a non-centred inner function avoid
re-expanding a truncated series around a point other than the origin.
"""

from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from typing import ClassVar, Sequence, Union

import numpy as np
from scipy.special import gammaln

from .tolerances import DEFAULT, Tolerances


class DomainError(ValueError):
    """A point handed to an evaluator lies outside the open unit disc."""


class TruncationMismatch(ValueError):
    pass


class CriticalPointError(ValueError):
    """Derivative vanishes where a local inverse is required."""


class NotSelfMapError(ValueError):
    pass


class SpecError(ValueError):
    """Malformed symbol description."""


# ---------------------------------------------------------------------------
# PowerSeries


@dataclass(frozen=True, eq=False)
class PowerSeries:
    """First ``N`` Taylor coefficients of an analytic function on the disc.

    ``sup_bound`` is an upper bound for ``sup |f|`` on the disc when one is
    known, and ``coeff_error`` bounds the absolute error carried by every
    stored coefficient (zero for coefficients computed by exact triangular
    recurrences, positive after recentring a truncated series).
    """

    coeffs: np.ndarray
    exact_degree: int | None = None
    sup_bound: float | None = None
    coeff_error: float = 0.0

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=complex).ravel()
        if c.size == 0:
            raise ValueError("a power series needs at least one coefficient")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        d = self.exact_degree
        if d is not None:
            if d < 0:
                raise ValueError("exact_degree must be nonnegative")
            if d < c.size - 1 and np.any(c[d + 1:] != 0):
                raise ValueError("coefficients beyond exact_degree must vanish")

    @classmethod
    def polynomial(cls, coeffs: Sequence[complex], N: int) -> "PowerSeries":
        c = np.trim_zeros(np.asarray(coeffs, dtype=complex), "b")
        degree = max(len(c) - 1, 0)
        out = np.zeros(N, dtype=complex)
        m = min(N, len(c))
        out[:m] = c[:m]
        return cls(out, exact_degree=degree, sup_bound=float(np.abs(c).sum()))

    @classmethod
    def constant(cls, value: complex, N: int) -> "PowerSeries":
        return cls.polynomial([value], N)

    @classmethod
    def identity(cls, N: int) -> "PowerSeries":
        return cls.polynomial([0, 1], N)

    @property
    def truncation(self) -> int:
        return self.coeffs.size

    def __len__(self) -> int:
        return self.coeffs.size

    def __getitem__(self, k):
        return self.coeffs[k]

    @property
    def is_polynomial(self) -> bool:
        return self.exact_degree is not None

    @property
    def is_exact(self) -> bool:
        """All nonzero coefficients of the function are stored."""
        return self.exact_degree is not None and self.exact_degree < self.truncation

    def _active(self) -> np.ndarray:
        if self.is_exact:
            return self.coeffs[: self.exact_degree + 1]
        return self.coeffs

    def __call__(self, z):
        return np.polyval(self._active()[::-1], z)

    def with_truncation(self, N: int) -> "PowerSeries":
        if N <= self.truncation:
            return PowerSeries(self.coeffs[:N], self.exact_degree, self.sup_bound, self.coeff_error)
        if not self.is_exact:
            raise TruncationMismatch(
                f"cannot extend a series known to {self.truncation} coefficients to {N}"
            )
        out = np.zeros(N, dtype=complex)
        out[: self.truncation] = self.coeffs
        return PowerSeries(out, self.exact_degree, self.sup_bound, self.coeff_error)

    def tail_bound(self, r: float) -> float:
        """Bound on ``|f(z) - truncated f(z)|`` for ``|z| <= r``."""
        if self.is_exact:
            return 0.0
        if self.sup_bound is None or r >= 1:
            return math.inf
        return self.sup_bound * r ** self.truncation / (1 - r)

    def h2_norm(self) -> float:
        return float(np.linalg.norm(self.coeffs))

    def allclose(self, other: "PowerSeries", atol: float = 1e-12) -> bool:
        n = min(self.truncation, other.truncation)
        return bool(np.allclose(self.coeffs[:n], other.coeffs[:n], rtol=0, atol=atol))

    # arithmetic -----------------------------------------------------------

    def _coerce(self, other) -> "PowerSeries":
        if isinstance(other, PowerSeries):
            if other.truncation != self.truncation:
                raise TruncationMismatch(f"truncations differ: {self.truncation} vs {other.truncation}")
            return other
        if np.isscalar(other):
            return PowerSeries.constant(other, self.truncation)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        deg = None
        if self.exact_degree is not None and other.exact_degree is not None:
            deg = _trimmed_degree(self.coeffs + other.coeffs, max(self.exact_degree, other.exact_degree))
        bound = None
        if self.sup_bound is not None and other.sup_bound is not None:
            bound = self.sup_bound + other.sup_bound
        return PowerSeries(self.coeffs + other.coeffs, deg, bound, self.coeff_error + other.coeff_error)

    __radd__ = __add__

    def __neg__(self):
        return PowerSeries(-self.coeffs, self.exact_degree, self.sup_bound, self.coeff_error)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return other
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if np.isscalar(other):
            if other == 0:
                return PowerSeries(np.zeros(self.truncation), exact_degree=0, sup_bound=0.0)
            bound = None if self.sup_bound is None else abs(other) * self.sup_bound
            return PowerSeries(other * self.coeffs, self.exact_degree, bound, abs(other) * self.coeff_error)
        if isinstance(other, PowerSeries):
            return multiply(self, other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other):
        if np.isscalar(other):
            return self * (1 / other)
        if isinstance(other, PowerSeries):
            return divide(self, other)
        return NotImplemented

    def __repr__(self) -> str:
        head = ", ".join(f"{c:.6g}" for c in self.coeffs[:6])
        more = ", ..." if self.truncation > 6 else ""
        return f"PowerSeries([{head}{more}], N={self.truncation}, exact_degree={self.exact_degree})"


def _trimmed_degree(c: np.ndarray, upper: int) -> int:
    d = min(upper, c.size - 1)
    while d > 0 and c[d] == 0:
        d -= 1
    return d if upper < c.size else upper


def _check_same(s: PowerSeries, t: PowerSeries) -> int:
    if s.truncation != t.truncation:
        raise TruncationMismatch(f"truncations differ: {s.truncation} vs {t.truncation}")
    return s.truncation


def multiply(s: PowerSeries, t: PowerSeries) -> PowerSeries:
    """Cauchy product truncated to the common length."""
    N = _check_same(s, t)
    prod = np.convolve(s._active(), t._active())[:N]
    out = np.zeros(N, dtype=complex)
    out[: prod.size] = prod
    deg = None
    if s.exact_degree is not None and t.exact_degree is not None:
        deg = s.exact_degree + t.exact_degree
        if deg < N and np.any(out[deg + 1:] != 0):
            deg = None
    bound = None
    if s.sup_bound is not None and t.sup_bound is not None:
        bound = s.sup_bound * t.sup_bound
    err = 0.0
    if s.coeff_error or t.coeff_error:
        err = s.coeff_error * np.abs(t.coeffs).sum() + t.coeff_error * np.abs(s.coeffs).sum()
    return PowerSeries(out, deg, bound, float(err))


def power(s: PowerSeries, n: int) -> PowerSeries:
    out = PowerSeries.constant(1.0, s.truncation)
    for _ in range(n):
        out = multiply(out, s)
    return out


def divide(s: PowerSeries, t: PowerSeries) -> PowerSeries:
    """Quotient ``s / t`` for ``t(0) != 0`` by the triangular recurrence."""
    N = _check_same(s, t)
    a, b = t.coeffs, s.coeffs
    if a[0] == 0:
        raise ZeroDivisionError("divisor series vanishes at the origin")
    q = np.zeros(N, dtype=complex)
    inv = 1 / a[0]
    q[0] = b[0] * inv
    for n in range(1, N):
        q[n] = (b[n] - np.dot(a[1: n + 1], q[n - 1:: -1])) * inv
    return PowerSeries(q)


def reciprocal(t: PowerSeries) -> PowerSeries:
    return divide(PowerSeries.constant(1.0, t.truncation), t)


def series_exp(s: PowerSeries) -> PowerSeries:
    """``exp`` of a series; the constant term is handled in closed form."""
    N = s.truncation
    f = s.coeffs
    k = np.arange(N)
    kf = k * f
    g = np.zeros(N, dtype=complex)
    g[0] = 1.0
    for n in range(1, N):
        g[n] = np.dot(kf[1: n + 1], g[n - 1:: -1]) / n
    return PowerSeries(cmath.exp(f[0]) * g)


def series_sqrt(s: PowerSeries) -> PowerSeries:
    """Square root with the principal branch at the constant term."""
    N = s.truncation
    f = s.coeffs
    if f[0] == 0:
        raise CriticalPointError("square root of a series vanishing at the origin")
    g = np.zeros(N, dtype=complex)
    g[0] = cmath.sqrt(f[0])
    inv = 1 / (2 * g[0])
    for n in range(1, N):
        g[n] = (f[n] - np.dot(g[1:n], g[n - 1: 0: -1])) * inv
    return PowerSeries(g)


def _horner(coeffs: np.ndarray, inner: PowerSeries) -> PowerSeries:
    N = inner.truncation
    out = PowerSeries.constant(coeffs[-1], N)
    for a in coeffs[-2::-1]:
        out = multiply(out, inner) + a
    return out


def _taylor_shift(coeffs: np.ndarray, c: complex, bound: float | None) -> tuple[np.ndarray, float]:
    """Re-expand ``sum a_k z^k`` around ``c``; returns coefficients and a tail bound.

    Only the ``N`` stored coefficients contribute; ``bound`` (a sup-norm bound
    of the function, hence of every coefficient) controls the neglected part.
    """
    N = coeffs.size
    if c == 0:
        return coeffs.copy(), 0.0
    x = abs(c)
    k = np.arange(N)[:, None]
    j = np.arange(N)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        logw = gammaln(k + 1) - gammaln(j + 1) - gammaln(k - j + 1) + (k - j) * math.log(x)
        w = np.where(k >= j, np.exp(np.where(k >= j, logw, -np.inf)), 0.0)
    phase = np.exp(1j * cmath.phase(c) * (k - j))
    b = ((w * phase) * coeffs[:, None]).sum(axis=0)
    if bound is None:
        return b, math.inf
    # sum_{k>=N} C(k,j) x^(k-j) = (1-x)^-(j+1) - partial sums
    partial = w.sum(axis=0)
    total = (1 - x) ** -(np.arange(N) + 1.0)
    tail = bound * np.maximum(total - partial, 0.0)
    return b, float(tail.max())


def compose(outer: Union[PowerSeries, "SymbolSpec"], inner: PowerSeries,
            tol: Tolerances = DEFAULT) -> PowerSeries:
    """Taylor coefficients of ``outer o inner`` to the truncation of ``inner``.

    With ``inner(0) == 0`` (or a polynomial outer) the result is exact given
    exact inputs.  Otherwise a closed-form outer is expanded structurally; a
    bare series outer is recentred at ``inner(0)``, which requires ``inner``
    to be certified as a self-map and records the recentring tail in
    ``coeff_error``.
    """
    if isinstance(outer, SymbolSpec):
        return outer.compose_series(inner)
    N = inner.truncation
    if outer.truncation < N and not outer.is_exact:
        raise TruncationMismatch("outer series is shorter than the inner truncation")
    c = inner.coeffs[0]
    if outer.is_exact:
        res = _horner(outer.coeffs[: outer.exact_degree + 1], inner)
    elif c == 0:
        res = _horner(outer.coeffs[:N], inner)
    else:
        cert = sup_norm_estimate(inner)
        if not cert.value < 1 - tol.self_map_margin:
            raise NotSelfMapError(
                f"inner(0) = {c:.3g} != 0 and inner is not certified as a self-map "
                f"(sampled sup {cert.value:.6g}); supply a closed-form outer instead"
            )
        shifted, tail = _taylor_shift(outer.coeffs[:N], c, outer.sup_bound)
        res = _horner(shifted, inner - c)
        res = PowerSeries(res.coeffs, None, outer.sup_bound, tail)
        return res
    deg = None
    if outer.exact_degree is not None and inner.exact_degree is not None:
        deg = outer.exact_degree * inner.exact_degree
        if deg < N and np.any(res.coeffs[deg + 1:] != 0):
            deg = None
    return PowerSeries(res.coeffs, deg, outer.sup_bound if c == 0 or outer.is_exact else None,
                       res.coeff_error)


def reversion(s: PowerSeries) -> PowerSeries:
    """Compositional inverse of ``s`` with ``s(0) = 0``, ``s'(0) != 0``.

    Lagrange inversion: ``[z^n] r = [w^(n-1)] (w / s(w))^n / n``.
    """
    N = s.truncation
    c = s.coeffs
    scale = max(float(np.abs(c[:8]).max()), 1.0)
    if abs(c[0]) > 1e-14 * scale:
        raise ValueError("reversion needs s(0) = 0; shift the series first")
    if N < 2 or abs(c[1]) <= 1e-14 * scale:
        raise CriticalPointError("s'(0) = 0: critical point, no single-valued local inverse")
    r = np.zeros(N, dtype=complex)
    r[1] = 1 / c[1]
    if s.exact_degree == 1:
        return PowerSeries(r, exact_degree=1)
    M = N - 1
    g = reciprocal(PowerSeries(c[1:N])).coeffs  # w / s(w), M coefficients
    p = g.copy()
    for n in range(2, N):
        p = np.convolve(p, g)[:M]
        r[n] = p[n - 1] / n
    return PowerSeries(r)


# ---------------------------------------------------------------------------
# evaluation and boundary estimates


def _check_disc(z) -> None:
    if np.any(np.abs(z) >= 1):
        raise DomainError("evaluation point must satisfy |z| < 1")


def evaluate(s: Union[PowerSeries, "SymbolSpec"], z):
    """Value of ``s`` at ``z`` (scalar or array) inside the unit disc."""
    z = np.asarray(z, dtype=complex)
    _check_disc(z)
    val = s(z)
    return complex(val) if np.ndim(val) == 0 else val


def evaluate_with_tail(s: PowerSeries, z) -> tuple[complex, float]:
    """Value of the truncated series plus the geometric tail bound at ``|z|``."""
    val = evaluate(s, z)
    return val, s.tail_bound(float(np.max(np.abs(z))))


@dataclass(frozen=True)
class SupNorm:
    """Sampled maximum of ``|f|`` on the circle of the given radius.

    A lower bound for the sup norm over the disc; doubles as the self-map
    certificate when compared against ``1 - margin``.
    """

    value: float
    mesh: int
    radius: float
    argmax: complex

    def __float__(self) -> float:
        return self.value

    def certifies_self_map(self, margin: float = 0.0) -> bool:
        return self.value < 1 - margin


def boundary_values(f: Union[PowerSeries, "SymbolSpec"], M: int, r: float) -> np.ndarray:
    theta = 2 * np.pi * np.arange(M) / M
    if isinstance(f, PowerSeries) and M >= f.truncation:
        c = f.coeffs * r ** np.arange(f.truncation)
        return M * np.fft.ifft(c, M)
    return np.asarray(f(r * np.exp(1j * theta)), dtype=complex)


def sup_norm_estimate(f: Union[PowerSeries, "SymbolSpec"], M: int = 4096,
                      eps: float | None = None) -> SupNorm:
    if M < 8:
        raise ValueError("need at least 8 boundary samples")
    eps = DEFAULT.sup_eps if eps is None else eps
    r = 1 - eps
    vals = np.abs(boundary_values(f, M, r))
    j = int(np.argmax(vals))
    return SupNorm(float(vals[j]), M, r, complex(r * cmath.exp(2j * math.pi * j / M)))


# ---------------------------------------------------------------------------
# symbol descriptions


def _cx(v) -> complex:
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise SpecError(f"complex numbers are [re, im] pairs, got {v!r}")
        return complex(float(v[0]), float(v[1]))
    if isinstance(v, (int, float, complex)):
        return complex(v)
    raise SpecError(f"cannot read a complex number from {v!r}")


def _pair(z: complex) -> list[float]:
    z = complex(z)
    return [z.real, z.imag]


class SymbolSpec:
    """Closed-form description of an analytic function on the unit disc."""

    tag: ClassVar[str] = ""

    def __call__(self, z):
        raise NotImplementedError

    def derivative(self, z):
        raise NotImplementedError

    def series(self, N: int) -> PowerSeries:
        if N < 1:
            raise ValueError("truncation must be at least 1")
        return self.compose_series(PowerSeries.identity(N))

    def compose_series(self, t: PowerSeries) -> PowerSeries:
        raise NotImplementedError

    def sup_bound(self) -> float | None:
        return None

    def polynomial_coeffs(self) -> np.ndarray | None:
        return None

    def image_membership(self, w):
        """Closed-form membership in the image of the disc, or ``None``.

        Returns ``(inside, margin)`` arrays where ``margin`` is the distance
        from ``w`` to the boundary of the image.
        """
        return None

    def to_json(self) -> dict:
        raise NotImplementedError

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


def _poly_trim(coeffs) -> tuple:
    c = [complex(x) for x in coeffs] or [0j]
    while len(c) > 1 and c[-1] == 0:
        c.pop()
    return tuple(c)


@dataclass(frozen=True)
class Polynomial(SymbolSpec):
    coeffs: tuple
    tag: ClassVar[str] = "polynomial"

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _poly_trim(self.coeffs))

    @property
    def degree(self) -> int:
        return len(self.coeffs) - 1

    def __call__(self, z):
        return np.polyval(np.array(self.coeffs[::-1]), z)

    def derivative(self, z):
        c = np.array(self.coeffs)
        if c.size == 1:
            return np.zeros_like(np.asarray(z, dtype=complex))
        d = c[1:] * np.arange(1, c.size)
        return np.polyval(d[::-1], z)

    def series(self, N: int) -> PowerSeries:
        return PowerSeries.polynomial(self.coeffs, N)

    def compose_series(self, t: PowerSeries) -> PowerSeries:
        res = _horner(np.array(self.coeffs), t)
        deg = None
        if t.exact_degree is not None:
            deg = self.degree * t.exact_degree
            if deg < t.truncation and np.any(res.coeffs[deg + 1:] != 0):
                deg = None
        return PowerSeries(res.coeffs, deg, None, res.coeff_error)

    def sup_bound(self) -> float:
        return float(sum(abs(c) for c in self.coeffs))

    def polynomial_coeffs(self) -> np.ndarray:
        return np.array(self.coeffs)

    def to_json(self) -> dict:
        return {"tag": self.tag, "coeffs": [_pair(c) for c in self.coeffs]}


@dataclass(frozen=True)
class Moebius(SymbolSpec):
    """Disc automorphism ``z -> (a - z) / (1 - conj(a) z)``."""

    a: complex
    tag: ClassVar[str] = "moebius"

    def __post_init__(self):
        object.__setattr__(self, "a", complex(self.a))
        if abs(self.a) >= 1:
            raise SpecError("moebius parameter must satisfy |a| < 1")

    def __call__(self, z):
        a = self.a
        return (a - z) / (1 - a.conjugate() * z)

    def derivative(self, z):
        a = self.a
        return (abs(a) ** 2 - 1) / (1 - a.conjugate() * z) ** 2

    def series(self, N: int) -> PowerSeries:
        a = self.a
        c = np.zeros(N, dtype=complex)
        c[0] = a
        if N > 1:
            c[1:] = a.conjugate() ** np.arange(N - 1) * (abs(a) ** 2 - 1)
        deg = 1 if a == 0 else None
        return PowerSeries(c, deg, 1.0)

    def compose_series(self, t: PowerSeries) -> PowerSeries:
        a = self.a
        return divide(a - t, 1 - a.conjugate() * t)

    def sup_bound(self) -> float:
        return 1.0

    def polynomial_coeffs(self):
        return np.array([0, -1], dtype=complex) if self.a == 0 else None

    def to_json(self) -> dict:
        return {"tag": self.tag, "a": _pair(self.a)}


def cayley(z):
    """``(z + 1) / (z - 1)``: the disc onto the left half-plane."""
    return (z + 1) / (z - 1)


def cayley_inverse(w):
    return (w + 1) / (w - 1)


@dataclass(frozen=True)
class UnitSingular(SymbolSpec):
    """``exp((z + 1) / (z - 1))``: inner, with image the punctured disc."""

    tag: ClassVar[str] = "unit_singular"

    def __call__(self, z):
        return np.exp(cayley(z))

    def derivative(self, z):
        return np.exp(cayley(z)) * (-2 / (z - 1) ** 2)

    def compose_series(self, t: PowerSeries) -> PowerSeries:
        # exp's derivatives are known at every point, so exp(s(t)) is taken
        # around s(t)(0) in closed form and the remaining part is formal.
        s = divide(t + 1, t - 1)
        out = series_exp(s)
        return PowerSeries(out.coeffs, None, 1.0)

    def sup_bound(self) -> float:
        return 1.0

    def image_membership(self, w):
        m = np.abs(np.asarray(w))
        return (m > 0) & (m < 1), np.minimum(m, np.abs(1 - m))

    def to_json(self) -> dict:
        return {"tag": self.tag}


@dataclass(frozen=True)
class FractionalLinear(SymbolSpec):
    """``z -> (a z + b) / (c z + d)`` with its pole off the open disc."""

    a: complex
    b: complex
    c: complex
    d: complex
    tag: ClassVar[str] = "fractional_linear"

    def __post_init__(self):
        for name in "abcd":
            object.__setattr__(self, name, complex(getattr(self, name)))
        if abs(self.d) < abs(self.c):
            raise SpecError("pole -d/c lies inside the unit disc")
        if self.a * self.d - self.b * self.c == 0:
            raise SpecError("degenerate fractional linear map")

    def __call__(self, z):
        return (self.a * z + self.b) / (self.c * z + self.d)

    def derivative(self, z):
        return (self.a * self.d - self.b * self.c) / (self.c * z + self.d) ** 2

    def compose_series(self, t: PowerSeries) -> PowerSeries:
        return divide(self.a * t + self.b, self.c * t + self.d)

    def polynomial_coeffs(self):
        if self.c == 0:
            return np.array([self.b / self.d, self.a / self.d])
        return None

    def to_json(self) -> dict:
        return {"tag": self.tag, **{k: _pair(getattr(self, k)) for k in "abcd"}}


@dataclass(frozen=True)
class QuadraticBranch(SymbolSpec):
    """``-1/2 + sign * sqrt(inner + 1/4)`` with the principal square root.

    The two branches invert ``z^2 + z``.  The series is the analytic branch
    through ``inner(0)``; it agrees with the principal-root closed form when
    ``inner`` omits the ray ``(-inf, -1/4]``.
    """

    inner: SymbolSpec
    sign: int = 1
    tag: ClassVar[str] = "quadratic_branch"

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise SpecError("branch sign must be +1 or -1")

    def __call__(self, z):
        return -0.5 + self.sign * np.sqrt(np.asarray(self.inner(z), dtype=complex) + 0.25)

    def derivative(self, z):
        root = np.sqrt(np.asarray(self.inner(z), dtype=complex) + 0.25)
        return self.sign * self.inner.derivative(z) / (2 * root)

    def compose_series(self, t: PowerSeries) -> PowerSeries:
        root = series_sqrt(self.inner.compose_series(t) + 0.25)
        return self.sign * root - 0.5

    def to_json(self) -> dict:
        return {"tag": self.tag, "sign": self.sign, "inner": self.inner.to_json()}


@dataclass(frozen=True)
class Scale(SymbolSpec):
    lam: complex
    inner: SymbolSpec
    tag: ClassVar[str] = "scale"

    def __post_init__(self):
        object.__setattr__(self, "lam", complex(self.lam))
        if self.lam == 0:
            raise SpecError("scale factor must be nonzero")

    def __call__(self, z):
        return self.lam * self.inner(z)

    def derivative(self, z):
        return self.lam * self.inner.derivative(z)

    def series(self, N: int) -> PowerSeries:
        return self.lam * self.inner.series(N)

    def compose_series(self, t: PowerSeries) -> PowerSeries:
        return self.lam * self.inner.compose_series(t)

    def sup_bound(self):
        b = self.inner.sup_bound()
        return None if b is None else abs(self.lam) * b

    def polynomial_coeffs(self):
        p = self.inner.polynomial_coeffs()
        return None if p is None else self.lam * p

    def image_membership(self, w):
        inner = self.inner.image_membership(np.asarray(w) / self.lam)
        if inner is None:
            return None
        inside, margin = inner
        return inside, margin * abs(self.lam)

    def to_json(self) -> dict:
        return {"tag": self.tag, "lambda": _pair(self.lam), "inner": self.inner.to_json()}


@dataclass(frozen=True)
class Shift(SymbolSpec):
    c: complex
    inner: SymbolSpec
    tag: ClassVar[str] = "shift"

    def __post_init__(self):
        object.__setattr__(self, "c", complex(self.c))

    def __call__(self, z):
        return self.c + self.inner(z)

    def derivative(self, z):
        return self.inner.derivative(z)

    def series(self, N: int) -> PowerSeries:
        return self.inner.series(N) + self.c

    def compose_series(self, t: PowerSeries) -> PowerSeries:
        return self.inner.compose_series(t) + self.c

    def sup_bound(self):
        b = self.inner.sup_bound()
        return None if b is None else abs(self.c) + b

    def polynomial_coeffs(self):
        p = self.inner.polynomial_coeffs()
        if p is None:
            return None
        p = p.copy()
        p[0] += self.c
        return p

    def image_membership(self, w):
        return self.inner.image_membership(np.asarray(w) - self.c)

    def to_json(self) -> dict:
        return {"tag": self.tag, "c": _pair(self.c), "inner": self.inner.to_json()}


@dataclass(frozen=True)
class Compose(SymbolSpec):
    """``outer o inner``; ``inner`` must map the disc into ``outer``'s domain."""

    outer: SymbolSpec
    inner: SymbolSpec
    tag: ClassVar[str] = "compose"

    def __call__(self, z):
        return self.outer(self.inner(z))

    def derivative(self, z):
        return self.outer.derivative(self.inner(z)) * self.inner.derivative(z)

    def series(self, N: int) -> PowerSeries:
        return self.outer.compose_series(self.inner.series(N))

    def compose_series(self, t: PowerSeries) -> PowerSeries:
        return self.outer.compose_series(self.inner.compose_series(t))

    def sup_bound(self):
        p = self.outer.polynomial_coeffs()
        if p is not None:
            b = self.inner.sup_bound()
            return None if b is None else float(sum(abs(c) * b ** k for k, c in enumerate(p)))
        return self.outer.sup_bound()

    def polynomial_coeffs(self):
        p, q = self.outer.polynomial_coeffs(), self.inner.polynomial_coeffs()
        if p is None or q is None:
            return None
        out = np.polynomial.polynomial.polyval(np.polynomial.Polynomial(q), p)
        return np.asarray(out.coef, dtype=complex)

    def to_json(self) -> dict:
        return {"tag": self.tag, "outer": self.outer.to_json(), "inner": self.inner.to_json()}


@dataclass(frozen=True, eq=False)
class Raw(SymbolSpec):
    """A symbol known only through stored coefficients."""

    data: PowerSeries
    tag: ClassVar[str] = "raw"

    def __call__(self, z):
        return self.data(z)

    def derivative(self, z):
        c = self.data._active()
        if c.size == 1:
            return np.zeros_like(np.asarray(z, dtype=complex))
        return np.polyval((c[1:] * np.arange(1, c.size))[::-1], z)

    def series(self, N: int) -> PowerSeries:
        return self.data.with_truncation(N)

    def compose_series(self, t: PowerSeries) -> PowerSeries:
        outer = self.data.with_truncation(t.truncation) if (
            self.data.is_exact or self.data.truncation >= t.truncation) else self.data
        return compose(outer, t)

    def sup_bound(self):
        return self.data.sup_bound

    def polynomial_coeffs(self):
        if self.data.is_exact:
            return self.data.coeffs[: self.data.exact_degree + 1].copy()
        return None

    def to_json(self) -> dict:
        return {"tag": self.tag, "coeffs": [_pair(c) for c in self.data.coeffs],
                "exact_degree": self.data.exact_degree}


def to_series(spec: SymbolSpec, N: int) -> PowerSeries:
    """First ``N`` Taylor coefficients of ``spec``."""
    if N < 1:
        raise ValueError("truncation must be at least 1")
    return spec.series(N)


def as_series(f: Union[PowerSeries, SymbolSpec], N: int) -> PowerSeries:
    if isinstance(f, PowerSeries):
        return f if f.truncation == N else f.with_truncation(N)
    return f.series(N)


def spec_from_json(obj) -> SymbolSpec:
    """Parse the JSON symbol schema; complex numbers are ``[re, im]`` pairs."""
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise SpecError(f"symbol is not valid JSON: {exc}") from exc
    if not isinstance(obj, dict) or "tag" not in obj:
        raise SpecError("symbol JSON must be an object with a 'tag' field")
    tag = obj["tag"]
    try:
        if tag == "polynomial":
            return Polynomial(tuple(_cx(c) for c in obj["coeffs"]))
        if tag == "moebius":
            return Moebius(_cx(obj["a"]))
        if tag == "unit_singular":
            return UnitSingular()
        if tag == "fractional_linear":
            return FractionalLinear(*(_cx(obj[k]) for k in "abcd"))
        if tag == "scale":
            return Scale(_cx(obj["lambda"]), spec_from_json(obj["inner"]))
        if tag == "shift":
            return Shift(_cx(obj["c"]), spec_from_json(obj["inner"]))
        if tag == "compose":
            return Compose(spec_from_json(obj["outer"]), spec_from_json(obj["inner"]))
        if tag == "quadratic_branch":
            return QuadraticBranch(spec_from_json(obj["inner"]), int(obj.get("sign", 1)))
        if tag == "raw":
            coeffs = [_cx(c) for c in obj["coeffs"]]
            return Raw(PowerSeries(coeffs, obj.get("exact_degree")))
    except KeyError as exc:
        raise SpecError(f"symbol with tag {tag!r} is missing field {exc}") from exc
    raise SpecError(f"unknown symbol tag {tag!r}")


Z = Polynomial((0, 1))
Z2Z = Polynomial((0, 1, 1))

NAMED_SYMBOLS: dict[str, SymbolSpec] = {
    "z": Z,
    "identity": Z,
    "2z": Polynomial((0, 2)),
    "z/2": Polynomial((0, 0.5)),
    "z/4": Polynomial((0, 0.25)),
    "z^2": Polynomial((0, 0, 1)),
    "z2z": Z2Z,
    "z^2+z": Z2Z,
    "z+1": Polynomial((1, 1)),
    "z+2": Polynomial((2, 1)),
    "2+z^2": Polynomial((2, 0, 1)),
    "unit_singular": UnitSingular(),
}


def parse_symbol(text: str) -> SymbolSpec:
    """A named shorthand (``z``, ``z2z``, ``unit_singular``, ...) or symbol JSON."""
    key = text.strip().replace(" ", "")
    if key in NAMED_SYMBOLS:
        return NAMED_SYMBOLS[key]
    if key.startswith("{"):
        return spec_from_json(text)
    raise SpecError(
        f"unknown symbol {text!r}; use one of {sorted(NAMED_SYMBOLS)} or JSON "
        '{"tag": "polynomial"|"moebius"|"unit_singular"|"fractional_linear"|"scale"|'
        '"shift"|"compose"|"quadratic_branch"|"raw", ...}'
    )


def is_z2z(spec: SymbolSpec) -> bool:
    p = spec.polynomial_coeffs()
    return p is not None and p.size == 3 and np.allclose(p, [0, 1, 1], atol=0)


# ---------------------------------------------------------------------------
# preimages


def preimages(spec: SymbolSpec, value: complex, tol: Tolerances = DEFAULT,
              radius: float = 1.0) -> np.ndarray:
    """Points ``a`` with ``|a| < radius`` and ``spec(a) = value``, sorted by modulus.

    Polynomials use companion-matrix roots; everything else runs Newton's
    method from a deterministic polar grid of starting points.
    """
    value = complex(value)
    p = spec.polynomial_coeffs()
    if p is not None:
        q = np.trim_zeros(np.array(p, dtype=complex), "b")
        if q.size <= 1:
            return np.zeros(0, dtype=complex)
        q = q.copy()
        q[0] -= value
        roots = np.roots(q[::-1])
        roots = roots[np.abs(roots) < radius]
        return roots[np.argsort(np.abs(roots), kind="stable")]
    n = tol.newton_grid
    rad = (np.arange(n) + 0.5) / n * 0.995 * radius
    ang = 2 * np.pi * np.arange(n) / n
    z = (rad[:, None] * np.exp(1j * ang[None, :])).ravel()
    with np.errstate(all="ignore"):
        for _ in range(tol.newton_iter):
            step = (spec(z) - value) / spec.derivative(z)
            z = z - step
            out = ~(np.abs(z) < radius)
            z[out] = 0.999 * radius * np.exp(1j * np.angle(z[out]))
            z[~np.isfinite(z)] = 0
        resid = np.abs(spec(z) - value)
    ok = np.isfinite(resid) & (resid <= tol.newton_tol * max(1.0, abs(value)) * 1e3) & (np.abs(z) < radius)
    found: list[complex] = []
    for a in z[ok][np.argsort(np.abs(z[ok]), kind="stable")]:
        if all(abs(a - b) > 1e-8 for b in found):
            found.append(complex(a))
    return np.array(found, dtype=complex)
