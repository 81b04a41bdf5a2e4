"""Checking, building and inverting intertwiners ``X T_phi = T_psi X``."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .operators import (
    EPS,
    NotInnerError,
    OperatorMatrix,
    kernel_vector,
    operator_norm,
    toeplitz_matrix,
)
from .series import (
    PowerSeries,
    SymbolSpec,
    as_series,
    evaluate,
    sup_norm_estimate,
)
from .tolerances import DEFAULT, Tolerances

Symbol = Union[PowerSeries, SymbolSpec]


class EmptyValidBlock(ValueError):
    pass


class ZeroFieldError(ValueError):
    pass


class NotCommonEigenvalue(ValueError):
    pass


def _bound(f: Symbol, N: int) -> float:
    if isinstance(f, SymbolSpec):
        b = f.sup_bound()
        return float(b) if b is not None else sup_norm_estimate(f).value
    if f.sup_bound is not None:
        return float(f.sup_bound)
    return sup_norm_estimate(f).value


@dataclass(frozen=True)
class IntertwineReport:
    """Size of ``X T_phi - T_psi X`` on the columns where truncation is exact.

    ``relative_residual`` divides by ``||X|| (||T_phi|| + ||T_psi||)``, which
    bounds the norm of the difference, so it never exceeds one.  ``tail`` is
    the truncation allowance (zero on an exact block) and ``scale`` the
    Frobenius size of the two products, the reference for exact-zero tests.
    """

    residual: float
    relative_residual: float
    valid_block: int
    norm_X: float
    norm_phi: float
    norm_psi: float
    tail: float
    scale: float
    exact: bool
    restricted: bool = False

    def as_dict(self) -> dict:
        return {
            "residual": self.residual,
            "relative_residual": self.relative_residual,
            "valid_block": self.valid_block,
            "norms": {"X": self.norm_X, "T_phi": self.norm_phi, "T_psi": self.norm_psi},
            "tail": self.tail,
            "scale": self.scale,
            "exact": self.exact,
            "restricted": self.restricted,
        }


def intertwine_residual(X: OperatorMatrix, phi: Symbol, psi: Symbol, *,
                        subspace: np.ndarray | None = None, allow_tail: bool = False,
                        norms: bool = True, tol: Tolerances = DEFAULT) -> IntertwineReport:
    """Residual of ``X T_phi = T_psi X`` at the truncation of ``X``.

    ``T_psi`` is lower-triangular, so ``P T_psi X P`` is exact; the only
    leakage is ``P X (I - P) T_phi P``.  It vanishes when ``X`` is
    lower-triangular (``leak == 0``) and otherwise on the first
    ``N - deg(phi)`` columns for polynomial ``phi``.  With an empty block
    the call fails unless ``allow_tail`` is set, in which case all columns
    are used and ``tail = leak * ||phi||_inf``.

    ``subspace`` (orthonormal columns) restricts the residual to ``R Q``.
    """
    N = X.N
    A = toeplitz_matrix(phi, N)
    B = toeplitz_matrix(psi, N)
    a_series = A.meta["symbol_series"]
    b_series = B.meta["symbol_series"]
    if X.leak == 0:
        block = N
    else:
        block = A.valid_block
    tail = 0.0
    if block == 0:
        if not allow_tail:
            raise EmptyValidBlock(
                "no column of X T_phi is free of truncation leakage; raise N, use a "
                "lower-triangular X, or pass allow_tail=True to bound the leakage")
        block = N
        tail = X.leak * _bound(phi, N)
    XA = X.entries @ A.entries
    BX = B.entries @ X.entries
    R = XA - BX
    if subspace is not None:
        Q = np.asarray(subspace, dtype=complex)
        R = R @ Q
        scale = float(np.linalg.norm(XA @ Q) + np.linalg.norm(BX @ Q))
    else:
        R = R[:, :block]
        scale = float(np.linalg.norm(XA[:, :block]) + np.linalg.norm(BX[:, :block]))
    residual = operator_norm(R, tol).value
    if norms:
        nx, na, nb = (operator_norm(M, tol).value for M in (X, A, B))
    else:
        nx, na, nb = (float(np.linalg.norm(M.entries)) for M in (X, A, B))
    denom = nx * (na + nb)
    rel = residual / denom if denom > 0 else math.inf
    exact = a_series.is_exact and b_series.is_exact and tail == 0.0
    return IntertwineReport(residual, rel, block, nx, na, nb, tail, scale, exact,
                            subspace is not None)


# ---------------------------------------------------------------------------
# eigenvector field


@dataclass(frozen=True)
class FieldSample:
    z: complex
    field_norm: float
    residual: float
    relative_residual: float
    tail_estimate: float
    in_zero_set: bool


@dataclass(frozen=True)
class EigenFieldReport:
    samples: tuple
    threshold: float

    @property
    def max_relative_residual(self) -> float:
        vals = [s.relative_residual for s in self.samples if not s.in_zero_set]
        return max(vals) if vals else math.nan

    @property
    def zero_set(self) -> list[complex]:
        return [s.z for s in self.samples if s.in_zero_set]

    @property
    def within_tail(self) -> bool:
        return all(s.residual <= s.tail_estimate for s in self.samples if not s.in_zero_set)


def eigen_field(X: OperatorMatrix, phi: Symbol, psi: Symbol, samples: Sequence[complex],
                tol: Tolerances = DEFAULT) -> EigenFieldReport:
    """``F(z) = X^* K_z`` should satisfy ``T_phi^* F(z) = conj(psi(z)) F(z)``.

    Writing ``R`` for the truncated residual ``X T_phi - T_psi X`` and ``k``
    for the truncated kernel, the measured defect is
    ``R^* k + X^*(T_psi^* k - conj(psi(z)) k)``.  The estimate bounds the
    second term by the kernel tail and the first by the leakage of ``X``;
    for Deddens operators the finite rank contributes ``|z|^(C+1)`` and each
    ``f_n`` its truncated energy.
    """
    N = X.N
    A = toeplitz_matrix(phi, N)
    a_series = A.meta["symbol_series"]
    psi_series = as_series(psi, N)
    XH = X.adjoint()
    AH = A.adjoint()
    x_fro = float(np.linalg.norm(X.entries))
    col_norm = float(np.linalg.norm(XH, axis=0).max())
    threshold = tol.zero_detect * col_norm
    mass = float(np.abs(a_series.coeffs).sum() + np.abs(psi_series.coeffs).sum())
    kind = X.meta.get("kind")
    out = []
    for z in samples:
        z = complex(z)
        k = kernel_vector(z, N)
        knorm = math.sqrt(k.norm_squared)
        F = XH @ k.coords
        fn = float(np.linalg.norm(F))
        psi_z = complex(evaluate(psi, z))
        r = float(np.linalg.norm(AH @ F - np.conj(psi_z) * F))
        floor = 4 * N * EPS * mass * x_fro * knorm
        if kind == "deddens":
            C = X.meta["cutoff"]
            tails = X.meta["tail_energy"]
            fC = X.meta["fvec_norms"][C]
            est = abs(z) ** (C + 1) * fC + sum(abs(z) ** n * math.sqrt(max(tails[n], 0.0))
                                                for n in range(1, C + 1))
        else:
            est = x_fro * _bound(psi, N) * k.tail_norm() + X.leak * _bound(phi, N) * knorm
        est += floor
        zero = fn <= threshold * knorm
        out.append(FieldSample(z, fn, r, r / fn if fn > 0 else math.inf,
                               est, zero))
    if out and all(s.in_zero_set for s in out):
        raise ZeroFieldError("X numerically zero on kernel span")
    return EigenFieldReport(tuple(out), threshold)


# ---------------------------------------------------------------------------
# recovery of (omega, h)


@dataclass(frozen=True, eq=False)
class RecoveryReport:
    """Pointwise ``h = X 1`` and ``omega = X z / X 1`` with consistency checks."""

    samples: np.ndarray
    h: np.ndarray
    omega: np.ndarray
    h_zero: np.ndarray
    max_modulus: float
    power_defect: float
    powers_checked: int

    @property
    def consistent(self) -> bool:
        return self.max_modulus <= 1 + 1e-8 and self.power_defect <= 1e-8


def recover_weighted_comp(X: OperatorMatrix, samples: Sequence[complex], n_powers: int = 4,
                          tol: Tolerances = DEFAULT) -> RecoveryReport:
    """Read off ``h`` and ``omega`` assuming ``X f = h (f o omega)``.

    Consistency demands ``|omega| <= 1`` and ``(X z^n)/h = omega^n`` for
    ``n <= n_powers``; a sum of two composition operators fails the latter.
    """
    z = np.asarray(samples, dtype=complex)
    if np.any(np.abs(z) >= 1):
        raise ValueError("samples must lie in the open unit disc")
    cols = X.entries

    def col_at(k):
        return np.polyval(cols[::-1, k], z)

    h = col_at(0)
    zero = np.abs(h) <= tol.zero_detect * float(np.linalg.norm(cols[:, 0]))
    if np.all(zero):
        raise ValueError("h = X 1 vanishes on the whole sample grid")
    good = ~zero
    omega = np.full(z.shape, np.nan + 0j)
    omega[good] = col_at(1)[good] / h[good]
    defect = 0.0
    for n in range(2, min(n_powers, X.N - 1) + 1):
        pred = omega[good] ** n
        got = col_at(n)[good] / h[good]
        defect = max(defect, float(np.max(np.abs(got - pred) / np.maximum(1.0, np.abs(pred)))))
    return RecoveryReport(z, h, omega, zero, float(np.max(np.abs(omega[good]))), defect,
                          min(n_powers, X.N - 1))


# ---------------------------------------------------------------------------
# the inner-symbol construction


@dataclass(frozen=True, eq=False)
class DeddensBasis:
    """``f`` in ``ker T_phi^*`` and the truncated orbit ``f_n = phi^n f``."""

    f: np.ndarray
    fvecs: np.ndarray  # column n is f_n
    gram_defect: float
    tail_energy: np.ndarray

    @property
    def max_tail_energy(self) -> float:
        return float(self.tail_energy.max())

    def span_basis(self, count: int | None = None) -> np.ndarray:
        """Orthonormal basis of ``span{f_0, ..., f_(count-1)}``."""
        F = self.fvecs if count is None else self.fvecs[:, :count]
        q, _ = np.linalg.qr(F)
        return q


def deddens_inner_X(phi: SymbolSpec, N: int, cutoff: int,
                    tol: Tolerances = DEFAULT) -> tuple[OperatorMatrix, DeddensBasis]:
    """Finite-rank ``X = sum_{n <= cutoff} e_n f_n^*`` with ``X T_phi ~ T_z X``.

    ``f`` is the normalised projection of the constant 1 onto
    ``ker T_phi^* = (phi H^2)^perp``, i.e. ``1 - conj(phi(0)) phi``.
    """
    if cutoff < 1 or cutoff > N // 8:
        raise ValueError(f"cutoff must lie in [1, N/8] = [1, {N // 8}]")
    s = as_series(phi, N)
    sup = sup_norm_estimate(phi)
    energy = float(np.vdot(s.coeffs, s.coeffs).real)
    if sup.value > 1 + 1e-9 or energy < 1 - tol.inner_energy:
        raise NotInnerError(
            f"phi is not inner at this truncation (sup {sup.value:.6g}, H2 energy {energy:.6g})")
    g = -np.conj(s.coeffs[0]) * s.coeffs
    g[0] += 1
    gn = float(np.linalg.norm(g))
    if gn <= tol.zero_detect:
        raise ValueError("(I - T_phi T_phi^*) 1 vanishes: phi behaves like a unimodular constant")
    f = g / gn
    T = toeplitz_matrix(s, N)
    F = np.empty((N, cutoff + 1), dtype=complex)
    F[:, 0] = f
    for n in range(1, cutoff + 1):
        F[:, n] = T.entries @ F[:, n - 1]
    gram = F.conj().T @ F
    defect = float(np.abs(gram - np.eye(cutoff + 1)).max())
    norms = np.linalg.norm(F, axis=0)
    tails = 1 - norms ** 2
    Xm = np.zeros((N, N), dtype=complex)
    Xm[: cutoff + 1, :] = F.conj().T
    X = OperatorMatrix(Xm, N, "X", leak=float(math.sqrt(max(tails.clip(min=0).sum(), 0.0))),
                       meta={"kind": "deddens", "cutoff": cutoff, "tail_energy": tails.tolist(),
                             "fvec_norms": norms.tolist()})
    return X, DeddensBasis(f, F, defect, tails)


# ---------------------------------------------------------------------------
# finite-dimensional symmetry


@dataclass(frozen=True, eq=False)
class PartnerResult:
    Y: np.ndarray
    residual: float  # ||Y B - A Y||
    eigen_residual: float  # max(||A Y - lam Y||, ||Y B - lam Y||)
    scale: float


def finite_dim_partner(A, B, lam: complex, tol: Tolerances = DEFAULT) -> PartnerResult:
    """Rank-one ``Y = a b^T`` with ``A Y = Y B = lam Y``.

    ``a`` spans ``ker(A - lam)`` and ``b`` spans ``ker(B^T - lam)``; both are
    the right singular vectors for the smallest singular value.
    """
    A = np.asarray(A, dtype=complex)
    B = np.asarray(B, dtype=complex)
    n = A.shape[0]
    if A.shape != (n, n) or B.shape != (n, n):
        raise ValueError("A and B must be square of the same size")
    scale = max(float(np.linalg.norm(A, 2)), float(np.linalg.norm(B, 2)), abs(lam), 1.0)
    I = np.eye(n)
    _, sa, vha = np.linalg.svd(A - lam * I)
    _, sb, vhb = np.linalg.svd(B.T - lam * I)
    if sa[-1] > tol.finite_dim * scale or sb[-1] > tol.finite_dim * scale:
        raise NotCommonEigenvalue(
            f"{lam} is not a common eigenvalue (smallest singular values {sa[-1]:.3g}, {sb[-1]:.3g})")
    a = vha[-1].conj()
    b = vhb[-1].conj()
    Y = np.outer(a, b)
    res = float(np.linalg.norm(Y @ B - A @ Y, 2))
    eig = max(float(np.linalg.norm(A @ Y - lam * Y, 2)), float(np.linalg.norm(Y @ B - lam * Y, 2)))
    if res > tol.finite_dim * scale or not np.any(Y):
        raise NotCommonEigenvalue(f"partner check failed (residual {res:.3g})")
    return PartnerResult(Y, res, eig, scale)


# ---------------------------------------------------------------------------
# Vandermonde system for sums of weighted composition operators


@dataclass(frozen=True, eq=False)
class VandermondeReport:
    samples: np.ndarray
    V: np.ndarray  # (samples, k+1, k+1)
    u: np.ndarray  # (samples, k+1)
    system_residual: np.ndarray  # ||V(z) u(z)|| per sample
    composition_defect: np.ndarray  # max_z |phi(omega_j) - psi| per j
    collisions: list = field(default_factory=list)

    @property
    def max_system_residual(self) -> float:
        return float(self.system_residual.max())

    @property
    def max_u(self) -> float:
        return float(np.abs(self.u).max())


def vandermonde_system_check(omegas: Sequence[Symbol], hs: Sequence[Symbol], phi: Symbol,
                             psi: Symbol, samples: Sequence[complex],
                             collision_tol: float = 1e-6) -> VandermondeReport:
    """Evaluate ``V(z) u(z)`` with ``V[m, j] = omega_j(z)^m``, ``u_j = h_j (phi o omega_j - psi)``.

    If ``sum C_{omega_j, h_j}`` intertwines ``T_phi`` and ``T_psi`` then
    ``V u = 0`` at every point; a nonzero ``u`` is then only possible where
    two ``omega_j`` coincide, which is what ``collisions`` lists.
    """
    if len(omegas) != len(hs) or not omegas:
        raise ValueError("need matching, nonempty lists of omegas and weights")
    for w in omegas:
        cert = sup_norm_estimate(w)
        if not cert.certifies_self_map():
            raise ValueError(f"omega is not certified as a self-map (sampled sup {cert.value:.6g})")
    z = np.asarray(samples, dtype=complex)
    hv = []
    for h in hs:
        if isinstance(h, PowerSeries) and not np.any(h.coeffs):
            raise ValueError("weights h_j must not be the zero function")
        vals = np.asarray(evaluate(h, z), dtype=complex) * np.ones_like(z)
        if isinstance(h, SymbolSpec) and h.polynomial_coeffs() is not None and not np.any(h.polynomial_coeffs()):
            raise ValueError("weights h_j must not be the zero function")
        if not np.any(vals):
            raise ValueError("weights h_j must not be the zero function")
        hv.append(vals)
    wv = np.array([np.asarray(evaluate(w, z), dtype=complex) * np.ones_like(z) for w in omegas]).T
    hv = np.array(hv).T
    psi_v = np.asarray(evaluate(psi, z), dtype=complex) * np.ones_like(z)
    comp = np.array([np.asarray(evaluate(phi, wv[:, j]), dtype=complex) for j in range(wv.shape[1])]).T
    u = hv * (comp - psi_v[:, None])
    k1 = wv.shape[1]
    V = wv[:, None, :] ** np.arange(k1)[None, :, None]
    res = np.linalg.norm(np.einsum("smj,sj->sm", V, u), axis=1)
    collisions = []
    for s in range(z.size):
        for i in range(k1):
            for j in range(i + 1, k1):
                gap = abs(wv[s, i] - wv[s, j])
                if gap <= collision_tol:
                    collisions.append((complex(z[s]), i, j, float(gap)))
    defect = np.abs(comp - psi_v[:, None]).max(axis=0)
    return VandermondeReport(z, V, u, res, defect, collisions)
