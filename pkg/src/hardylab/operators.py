"""Operator matrices on truncated H^2 in the monomial basis.

Column ``k`` of every matrix is the image of ``z^k`` truncated to ``N``
coefficients.  Write ``P`` for the projection onto the first ``N``
coordinates.  Analytic Toeplitz matrices are lower-triangular, and for
lower-triangular operators truncation commutes with products
(``P A B P = (P A P)(P B P)``), which is what makes most identities below
exact on all ``N`` columns.  The only leakage in ``P X T P`` comes from
``P X (I - P)``; :attr:`OperatorMatrix.leak` bounds its norm.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from .series import (
    DomainError,
    NotSelfMapError,
    PowerSeries,
    SymbolSpec,
    as_series,
    evaluate,
    multiply,
    sup_norm_estimate,
)
from .tolerances import DEFAULT, Tolerances

EPS = np.finfo(float).eps


class NotInnerError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Truncated operator with exactness bookkeeping.

    ``valid_block``: columns ``0..valid_block-1`` are the exact truncations
    of the corresponding columns of the untruncated operator.
    ``leak``: upper bound for ``||P X (I - P)||``, zero for lower-triangular
    operators.
    """

    entries: np.ndarray
    valid_block: int
    label: str = ""
    leak: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        a = np.array(self.entries, dtype=complex)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("operator matrices are square")
        a.setflags(write=False)
        object.__setattr__(self, "entries", a)
        if not 0 <= self.valid_block <= a.shape[0]:
            raise ValueError("valid_block must lie in [0, N]")

    @property
    def N(self) -> int:
        return self.entries.shape[0]

    truncation = N

    @property
    def is_lower_triangular(self) -> bool:
        return not np.any(np.triu(self.entries, 1))

    def adjoint(self) -> np.ndarray:
        return self.entries.conj().T

    def __matmul__(self, other):
        if isinstance(other, OperatorMatrix):
            return OperatorMatrix(
                self.entries @ other.entries,
                min(self.valid_block, other.valid_block),
                f"{self.label}{other.label}",
                leak=_product_leak(self, other),
            )
        return self.entries @ np.asarray(other)

    def __add__(self, other: "OperatorMatrix") -> "OperatorMatrix":
        if other.N != self.N:
            raise ValueError("truncations differ")
        return OperatorMatrix(self.entries + other.entries,
                              min(self.valid_block, other.valid_block),
                              f"{self.label}+{other.label}", leak=self.leak + other.leak)

    def to_csv(self, path: Union[str, Path]) -> None:
        """Row-major dump, real and imaginary parts interleaved per entry."""
        rows = np.empty((self.N, 2 * self.N))
        rows[:, 0::2] = self.entries.real
        rows[:, 1::2] = self.entries.imag
        label = self.label.replace(" ", "_") or "matrix"
        np.savetxt(path, rows, delimiter=",", fmt="%.17g",
                   header=f"{label} {self.N} {self.valid_block}", comments="# ")

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "OperatorMatrix":
        with open(path) as fh:
            header = fh.readline()
        if not header.startswith("#"):
            raise ValueError("matrix CSV must start with '# label N valid_block'")
        label, n, block = header[1:].split()
        rows = np.loadtxt(path, delimiter=",", comments="#", ndmin=2)
        n = int(n)
        if rows.shape != (n, 2 * n):
            raise ValueError(f"expected {n} rows of {2 * n} numbers, got {rows.shape}")
        return cls(rows[:, 0::2] + 1j * rows[:, 1::2], int(block), label)


def _product_leak(a: OperatorMatrix, b: OperatorMatrix) -> float:
    # P AB (I-P) = PA P B (I-P) + P A (I-P) B (I-P); norms of the
    # untruncated factors are not tracked, so the second term uses a's leak
    # times b's truncated norm as a working estimate.
    if a.leak == 0 and b.leak == 0:
        return 0.0
    return a.leak * float(np.linalg.norm(b.entries, 2)) + float(np.linalg.norm(a.entries, 2)) * b.leak


# ---------------------------------------------------------------------------
# constructors


def toeplitz_matrix(phi: Union[PowerSeries, SymbolSpec], N: int) -> OperatorMatrix:
    """Lower-triangular Toeplitz matrix of multiplication by ``phi``."""
    s = as_series(phi, N) if isinstance(phi, SymbolSpec) else phi
    if s.truncation < N:
        s = s.with_truncation(N)
    c = s.coeffs[:N]
    idx = np.arange(N)
    diff = idx[:, None] - idx[None, :]
    T = np.where(diff >= 0, c[np.clip(diff, 0, N - 1)], 0)
    block = N - s.exact_degree if s.is_exact else 0
    return OperatorMatrix(T, max(block, 0), "T", meta={"symbol_series": s})


def weighted_composition_matrix(omega: Union[PowerSeries, SymbolSpec],
                                h: Union[PowerSeries, SymbolSpec, None], N: int,
                                tol: Tolerances = DEFAULT) -> OperatorMatrix:
    """Matrix of ``f -> h * (f o omega)``; column ``k`` holds ``h * omega^k``."""
    w = as_series(omega, N)
    hs = PowerSeries.constant(1.0, N) if h is None else as_series(h, N)
    if not np.any(hs.coeffs):
        raise ValueError("weight h is identically zero; the operator would vanish")
    cert = sup_norm_estimate(omega if isinstance(omega, SymbolSpec) else w)
    centred = w.coeffs[0] == 0
    if not centred and not cert.certifies_self_map(tol.self_map_margin):
        raise NotSelfMapError(f"omega is not certified as a self-map (sampled sup {cert.value:.6g})")
    if centred and cert.value > 1 + 1e-9:
        raise NotSelfMapError(f"omega maps outside the disc (sampled sup {cert.value:.6g})")
    cols = np.empty((N, N), dtype=complex)
    col = hs
    for k in range(N):
        cols[:, k] = col.coeffs
        if k < N - 1:
            col = multiply(col, w)
    if hs.is_exact and w.is_exact:
        dh, dw = hs.exact_degree, w.exact_degree
        block = N if dw == 0 else min(N, (N - 1 - dh) // dw + 1)
    else:
        block = 0
    if centred:
        leak = 0.0
    else:
        hb = hs.sup_bound if hs.sup_bound is not None else sup_norm_estimate(
            h if isinstance(h, SymbolSpec) else hs).value
        rho = cert.value
        leak = hb * rho ** N / math.sqrt(1 - rho * rho)
    return OperatorMatrix(cols, max(block, 0), "C", leak=leak,
                          meta={"omega": w, "h": hs, "self_map_sup": cert.value})


def composition_matrix(omega, N: int, tol: Tolerances = DEFAULT) -> OperatorMatrix:
    return weighted_composition_matrix(omega, None, N, tol)


def identity_matrix(N: int) -> OperatorMatrix:
    return OperatorMatrix(np.eye(N), N, "I")


# ---------------------------------------------------------------------------
# kernels


@dataclass(frozen=True, eq=False)
class KernelVector:
    """Truncated reproducing kernel ``K_a = sum conj(a)^n z^n``."""

    a: complex
    coords: np.ndarray

    @property
    def truncation(self) -> int:
        return self.coords.size

    @property
    def norm_squared(self) -> float:
        r2 = abs(self.a) ** 2
        if r2 == 0:
            return 1.0
        return (1 - r2 ** self.truncation) / (1 - r2)

    def tail_norm(self) -> float:
        """``||(I - P) K_a||`` for the untruncated kernel."""
        r = abs(self.a)
        return r ** self.truncation / math.sqrt(1 - r * r)


def kernel_vector(a: complex, N: int) -> KernelVector:
    a = complex(a)
    if abs(a) >= 1:
        raise DomainError("kernel point must satisfy |a| < 1")
    coords = np.conj(a) ** np.arange(N)
    coords.setflags(write=False)
    return KernelVector(a, coords)


@dataclass(frozen=True)
class KernelResidual:
    residual: float
    bound: float
    value: complex

    @property
    def within_bound(self) -> bool:
        return self.residual <= self.bound


def _symbol_bound(phi, s: PowerSeries) -> float:
    b = phi.sup_bound() if isinstance(phi, SymbolSpec) else s.sup_bound
    if b is None:
        b = sup_norm_estimate(phi if isinstance(phi, SymbolSpec) else s).value
    return float(b)


def kernel_eigen_residual(phi: Union[SymbolSpec, PowerSeries], a: complex, N: int,
                          T: OperatorMatrix | None = None) -> KernelResidual:
    """``||T^* K_a - conj(phi(a)) K_a||`` with its truncation bound.

    The exact truncation error is ``-P T^*(I - P) K_a``, bounded by
    ``||phi||_inf |a|^N / sqrt(1 - |a|^2)``.  A rounding floor proportional
    to ``N eps`` times the coefficient mass is added.
    """
    k = kernel_vector(a, N)
    T = toeplitz_matrix(phi, N) if T is None else T
    s = T.meta.get("symbol_series") or as_series(phi, N)
    value = evaluate(phi, a)
    r = T.adjoint() @ k.coords - np.conj(value) * k.coords
    knorm = math.sqrt(k.norm_squared)
    if s.is_exact and s.exact_degree < N:
        # only coefficients of degree >= 1 reach past the truncation
        trunc = float(np.abs(s.coeffs[1:]).sum()) * k.tail_norm() if abs(a) > 0 else 0.0
    else:
        trunc = _symbol_bound(phi, s) * k.tail_norm()
    mass = float(np.abs(s.coeffs).sum())
    floor = (N * EPS * mass + EPS * abs(value)) * knorm + s.coeff_error * N * knorm
    return KernelResidual(float(np.linalg.norm(r)), trunc + floor, value)


# ---------------------------------------------------------------------------
# norms


@dataclass(frozen=True)
class NormEstimate:
    value: float
    converged: bool
    iterations: int

    def __float__(self) -> float:
        return self.value


def operator_norm(M: Union[OperatorMatrix, np.ndarray], tol: Tolerances = DEFAULT) -> NormEstimate:
    """Largest singular value by power iteration on ``M^* M``.

    The start vector is drawn from a fixed-seed generator, so repeated runs
    agree bit for bit.  Non-convergence is reported through the flag.
    """
    A = M.entries if isinstance(M, OperatorMatrix) else np.asarray(M, dtype=complex)
    if A.size == 0 or not np.any(A):
        return NormEstimate(0.0, True, 0)
    rng = np.random.default_rng(0)
    n = A.shape[1]
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    AH = A.conj().T
    sigma = 0.0
    for it in range(1, tol.power_max_iter + 1):
        w = A @ v
        new = float(np.linalg.norm(w))
        u = AH @ w
        nu = np.linalg.norm(u)
        if nu == 0:
            return NormEstimate(new, True, it)
        v = u / nu
        if abs(new - sigma) <= tol.power_tol * new:
            return NormEstimate(new, True, it)
        sigma = new
    return NormEstimate(sigma, False, tol.power_max_iter)


def adjoint_power_norms(T: OperatorMatrix, v: np.ndarray, n_max: int) -> np.ndarray:
    """``||(T^*)^n v||`` for ``n = 0..n_max``."""
    TH = T.adjoint()
    out = np.empty(n_max + 1)
    x = np.asarray(v, dtype=complex)
    for n in range(n_max + 1):
        out[n] = np.linalg.norm(x)
        x = TH @ x
    return out


# ---------------------------------------------------------------------------
# Wold-shift data


def c_coeff(N: int, n: int) -> int:
    """``(n + 1)(n + 2)...(n + N)``, exact."""
    if N < 0 or n < 0:
        raise ValueError("indices are nonnegative")
    return math.perm(n + N, N)


@dataclass(frozen=True)
class WoldResidual:
    residual: float
    estimate: float
    order: int
    lam: complex

    @property
    def within_estimate(self) -> bool:
        return self.residual <= self.estimate


@dataclass(frozen=True, eq=False)
class WoldData:
    """Truncated isometry ``S = T_psi`` with an orthonormal basis of ``ker S^*``.

    ``w_singular_values`` are the singular values of the block of
    ``I - S S^*`` whose range spans the retained basis.
    """

    S: OperatorMatrix
    Wbasis: np.ndarray
    w_singular_values: np.ndarray
    cutoff: int
    def powers(self, w: np.ndarray, m: int) -> list[np.ndarray]:
        """``S^k w`` for ``k = 0..m``."""
        out = [np.asarray(w, dtype=complex)]
        for _ in range(m):
            out.append(self.S.entries @ out[-1])
        return out

    def kernel(self, lam: complex, w: np.ndarray, cutoff: int | None = None) -> np.ndarray:
        """``sum_{n <= cutoff} lam^n S^n w``."""
        return self.kernel_n(0, lam, w, cutoff)

    def kernel_n(self, order: int, lam: complex, w: np.ndarray, cutoff: int | None = None) -> np.ndarray:
        """``sum_{n <= cutoff} c(order, n) lam^n S^(order + n) w``."""
        C = self.cutoff if cutoff is None else cutoff
        u = self.powers(w, order + C)
        out = np.zeros(self.S.N, dtype=complex)
        for n in range(C + 1):
            out += float(c_coeff(order, n)) * lam ** n * u[order + n]
        return out

    def residual(self, order: int, lam: complex, w: np.ndarray,
                 cutoff: int | None = None) -> WoldResidual:
        """Residual of ``S^* K = lam K`` (order 0) or ``(S^* - lam) K_N = N K_(N-1)``.

        The estimate adds up the three ways the truncated identity can fail:
        the isometry defect ``S^* S - I`` on the vectors used, the series
        cutoff, and (order 0 only) ``S^* w`` for the approximate kernel
        vector ``w``.  A rounding floor covers the floating-point sums.
        """
        C = self.cutoff if cutoff is None else cutoff
        lam = complex(lam)
        SH = self.S.adjoint()
        u = self.powers(w, order + C + 1)
        D = lambda x: SH @ (self.S.entries @ x) - x  # noqa: E731
        K = self.kernel_n(order, lam, w, C)
        if order == 0:
            r = SH @ K - lam * K
            est = np.linalg.norm(SH @ u[0]) + abs(lam) ** (C + 1) * np.linalg.norm(u[C])
            est += sum(abs(lam) ** n * np.linalg.norm(D(u[n - 1])) for n in range(1, C + 1))
        else:
            r = SH @ K - lam * K - order * self.kernel_n(order - 1, lam, w, C)
            est = c_coeff(order, C) * abs(lam) ** (C + 1) * np.linalg.norm(u[order + C])
            est += sum(c_coeff(order, n) * abs(lam) ** n * np.linalg.norm(D(u[order + n - 1]))
                       for n in range(C + 1))
        mass = sum(float(c_coeff(order, n)) * abs(lam) ** n * np.linalg.norm(u[order + n])
                   for n in range(C + 1))
        floor = 10 * self.S.N * EPS * (1 + abs(lam) + order) * mass
        return WoldResidual(float(np.linalg.norm(r)), float(est + floor), order, lam)


def wold_data(psi: SymbolSpec, N: int, cutoff: int, tol: Tolerances = DEFAULT,
              w_dim: int = 8) -> WoldData:
    """Wold data for ``S = T_psi`` with ``psi`` inner.

    Column ``j`` of ``I - S S^*`` is the exact truncation of the projection
    of ``z^j`` onto ``ker T_psi^*`` (both factors are triangular), so the
    range of the first few columns is a faithful finite piece of the
    wandering subspace.  Polynomial symbols use their whole valid block;
    other symbols use the first ``w_dim`` columns.
    """
    s = as_series(psi, N)
    sup = sup_norm_estimate(psi)
    energy = float(np.vdot(s.coeffs, s.coeffs).real)
    if sup.value > 1 + 1e-9 or energy < 1 - tol.inner_energy:
        raise NotInnerError(
            f"psi is not inner at this truncation (sup {sup.value:.6g}, H2 energy {energy:.6g})")
    if s.is_exact:
        d = s.exact_degree
        if d == 0:
            raise NotInnerError("constant symbols are not shifts")
        if (cutoff + 5) * d >= N:
            raise ValueError(f"cutoff {cutoff} too large for N = {N} with degree {d}")
    S = toeplitz_matrix(s, N)
    b = S.valid_block if S.valid_block > 0 else min(w_dim, N)
    G = np.eye(N, b) - S.entries @ S.adjoint()[:, :b]
    U, sv, _ = np.linalg.svd(G, full_matrices=False)
    keep = sv > 1e-8 * sv[0]
    W = U[:, keep]
    # fix the phase so the largest entry of each column is real positive
    for j in range(W.shape[1]):
        p = np.argmax(np.abs(W[:, j]))
        W[:, j] *= np.exp(-1j * np.angle(W[p, j]))
    return WoldData(S, W, sv[keep], cutoff)
