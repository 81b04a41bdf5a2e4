"""Subordination, extended-eigenvalue verdicts and point-spectrum eigenvectors."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import (
    SamplingPlan,
    boundary_curve,
    cardioid_membership,
    image_contained,
    valence,
    valence_many,
)
from .operators import KernelResidual, KernelVector, kernel_eigen_residual, kernel_vector
from .series import (
    FractionalLinear,
    PowerSeries,
    QuadraticBranch,
    Scale,
    SupNorm,
    SymbolSpec,
    UnitSingular,
    Z,
    Z2Z,
    compose,
    is_z2z,
    power,
    preimages,
    reversion,
    sup_norm_estimate,
)
from .tolerances import DEFAULT, Tolerances

NO_ROOT = "no-root"
CRITICAL_POINT = "critical-point"
BRANCH_CUT_HIT = "branch-cut-hit"
NOT_SELF_MAP = "not-self-map"

IN = "in"
OUT = "out"
UNDETERMINED = "undetermined"


def _sample_points(n: int = 64, r: float = 0.9) -> np.ndarray:
    """Deterministic spiral of ``n`` points with modulus up to ``r``."""
    k = np.arange(n)
    return r * np.sqrt((k + 0.5) / n) * np.exp(2j * np.pi * k * 0.6180339887498949)


@dataclass(frozen=True, eq=False)
class SubordinationResult:
    """Outcome of solving ``phi o omega = psi``; ``failure`` is set instead of raising."""

    omega: PowerSeries | None
    omega_spec: SymbolSpec | None
    certificate: SupNorm | None
    composition_residual: float
    pointwise_residual: float
    method: str
    failure: str | None = None
    detail: str = ""

    @property
    def ok(self) -> bool:
        return self.failure is None

    def as_dict(self) -> dict:
        out = {
            "method": self.method,
            "failure": self.failure,
            "detail": self.detail,
            "composition_residual": self.composition_residual,
            "pointwise_residual": self.pointwise_residual,
            "certificate": None if self.certificate is None else self.certificate.value,
        }
        if self.omega is not None:
            out["omega_head"] = [[c.real, c.imag] for c in self.omega.coeffs[:8]]
        return out


def _failed(method: str, failure: str, detail: str) -> SubordinationResult:
    return SubordinationResult(None, None, None, math.inf, math.inf, method, failure, detail)


def _same(a: SymbolSpec, b: SymbolSpec) -> bool:
    return a.dumps() == b.dumps()


def _finish(phi: SymbolSpec, psi: SymbolSpec, omega: PowerSeries, spec: SymbolSpec | None,
            method: str, tol: Tolerances) -> SubordinationResult:
    N = omega.truncation
    cert = sup_norm_estimate(spec if spec is not None else omega)
    comp = phi.compose_series(omega)
    target = psi.series(N)
    scale = max(1.0, float(np.abs(target.coeffs).max()))
    comp_res = float(np.abs(comp.coeffs - target.coeffs).max()) / scale
    z = _sample_points()
    w = spec(z) if spec is not None else omega(z)
    point_res = float(np.abs(phi(w) - psi(z)).max())
    if not cert.certifies_self_map(tol.self_map_margin):
        return SubordinationResult(omega, spec, cert, comp_res, point_res, method, NOT_SELF_MAP,
                                   f"sampled sup of omega is {cert.value:.6g}")
    return SubordinationResult(omega, spec, cert, comp_res, point_res, method)


def _critical_obstruction(psi: SymbolSpec, value: complex, tol: Tolerances) -> complex | None:
    """A point where ``psi`` takes a critical value of ``phi`` without being critical itself."""
    for a in preimages(psi, value, tol):
        if abs(complex(psi.derivative(a))) > 1e-8:
            return complex(a)
    return None


def ray_meets_image(spec: SymbolSpec, x_max: float, M: int = 4096,
                    tol: Tolerances = DEFAULT) -> bool:
    """Does ``spec(U)`` meet the ray ``(-inf, x_max]``?

    The ray enters and leaves the image only across the boundary curve, so
    it suffices to test ``x_max`` and one point between each pair of
    consecutive crossings of the curve with the ray.  Points too close to
    the curve count as hits.
    """
    curve = boundary_curve(spec, M, tol=tol).samples
    a, b = curve, np.roll(curve, -1)
    sgn = (a.imag > 0) != (b.imag > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = a.imag[sgn] / (a.imag[sgn] - b.imag[sgn])
    xs = (a.real[sgn] + t * (b.real[sgn] - a.real[sgn]))
    xs = np.sort(xs[xs <= x_max])[::-1]
    probes = [x_max]
    edges = np.concatenate([[x_max], xs])
    probes += list((edges[:-1] + edges[1:]) / 2)
    probes = np.array(probes, dtype=complex)
    f = valence_many(spec, probes, M, tol=tol)
    return bool(np.any(f.status != 0))


def _unit_singular_scale(phi: SymbolSpec) -> complex | None:
    """``c`` when ``phi = c * unit_singular``."""
    if isinstance(phi, UnitSingular):
        return 1.0 + 0j
    if isinstance(phi, Scale) and isinstance(phi.inner, UnitSingular):
        return phi.lam
    return None


def _log_lift(phi: SymbolSpec, psi: SymbolSpec, N: int, tol: Tolerances) -> SubordinationResult | None:
    c = _unit_singular_scale(phi)
    if c is None:
        return None
    z = _sample_points()
    ratio = complex(psi(0)) / complex(phi(0))
    if np.abs(psi(z) - ratio * phi(z)).max() > 1e-12 * max(1.0, np.abs(psi(z)).max()):
        return None
    # psi = phi / lam with lam = 1 / ratio; exp(sigma(omega)) = exp(sigma(z) - L), L = Log lam
    L = -cmath.log(ratio)
    if L.real < 0:
        return _failed("log-lift", NOT_SELF_MAP,
                       f"|1/lambda| = {abs(ratio):.6g} > 1: phi/lambda leaves the image")
    if L == 0:
        return _finish(phi, psi, Z.series(N), Z, "identity", tol)
    spec = FractionalLinear(2 - L, L, -L, 2 + L)
    return _finish(phi, psi, spec.series(N), spec, "log-lift", tol)


def _explicit_branch(psi: SymbolSpec, N: int, tol: Tolerances) -> SubordinationResult:
    a = _critical_obstruction(psi, -0.25, tol)
    if a is not None:
        return _failed("explicit-branch", CRITICAL_POINT,
                       f"psi({a:.6g}) = -1/4, the critical value of z^2 + z, with psi'({a:.6g}) != 0")
    if ray_meets_image(psi, -0.25, tol=tol):
        return _failed("explicit-branch", BRANCH_CUT_HIT, "psi(U) meets the cut (-inf, -1/4]")
    spec = QuadraticBranch(psi, 1)
    return _finish(Z2Z, psi, spec.series(N), spec, "explicit-branch", tol)


def _reversion_method(phi: SymbolSpec, psi: SymbolSpec, N: int, tol: Tolerances) -> SubordinationResult:
    v = complex(psi(0))
    roots = preimages(phi, v, tol)
    if roots.size == 0:
        return _failed("reversion", NO_ROOT, f"no point of U maps to psi(0) = {v:.6g}")
    last = None
    psi_s = psi.series(N) - v
    for z0 in roots:
        if abs(complex(phi.derivative(z0))) <= 1e-10:
            last = last or _failed("reversion", CRITICAL_POINT, f"phi'({z0:.6g}) = 0")
            continue
        local = phi.compose_series(PowerSeries.polynomial([z0, 1], N)) - v
        local = PowerSeries(np.where(np.arange(N) == 0, 0, local.coeffs), local.exact_degree)
        omega = compose(reversion(local), psi_s) + z0
        res = _finish(phi, psi, omega, None, "reversion", tol)
        if res.ok:
            return res
        last = res
    return last


def subordination_solve(phi: SymbolSpec, psi: SymbolSpec, N: int = 256,
                        tol: Tolerances = DEFAULT) -> SubordinationResult:
    """Find a self-map ``omega`` with ``phi o omega = psi``.

    Methods, in order: identity; the explicit inverse branch for
    ``z^2 + z``; the logarithmic lift for multiples of the unit singular
    function; local inversion of ``phi`` at a noncritical preimage of
    ``psi(0)``.
    """
    if _same(phi, psi):
        return _finish(phi, psi, Z.series(N), Z, "identity", tol)
    if is_z2z(phi):
        return _explicit_branch(psi, N, tol)
    lift = _log_lift(phi, psi, N, tol)
    if lift is not None:
        return lift
    return _reversion_method(phi, psi, N, tol)


# ---------------------------------------------------------------------------
# extended eigenvalues


@dataclass(frozen=True)
class EEVerdict:
    lam: complex
    necessary: bool
    constructive: bool
    status: str
    method: str = ""
    failure: str | None = None

    def as_dict(self) -> dict:
        return {"lambda": [self.lam.real, self.lam.imag], "necessary": self.necessary,
                "constructive": self.constructive, "status": self.status,
                "method": self.method, "failure": self.failure}


def ee_membership(phi: SymbolSpec, lam: complex, N: int = 128, plan: SamplingPlan | None = None,
                  M: int = 1024, tol: Tolerances = DEFAULT) -> EEVerdict:
    """Is ``lam`` an extended eigenvalue of ``T_phi``?

    Necessary: ``phi(U) / lam`` lies in the closure of ``phi(U)`` (sampled).
    Constructive: a self-map ``omega`` with ``phi o omega = phi / lam``.
    For ``z^2 + z`` a critical-point obstruction also proves ``lam`` is out,
    and for affine ``phi`` so does a lift that is not a self-map.
    """
    lam = complex(lam)
    if lam == 0:
        raise ValueError("0 is never an extended eigenvalue of a nonconstant symbol")
    if lam == 1:
        return EEVerdict(lam, True, True, IN, "identity")
    psi = Scale(1 / lam, phi)
    necessary = image_contained(psi, phi, plan, M, tol).passes_closure
    if not necessary:
        return EEVerdict(lam, False, False, OUT)
    sub = subordination_solve(phi, psi, N, tol)
    if sub.ok:
        return EEVerdict(lam, True, True, IN, sub.method)
    status = UNDETERMINED
    if sub.failure == CRITICAL_POINT and is_z2z(phi):
        status = OUT
    elif sub.failure == NOT_SELF_MAP and _is_affine(phi) and sub.certificate is not None \
            and sub.certificate.value > 1 + 10 * tol.sup_eps:
        # phi is injective, so this omega is the only candidate lift
        status = OUT
    return EEVerdict(lam, True, False, status, sub.method, sub.failure)


def _is_affine(phi: SymbolSpec) -> bool:
    p = phi.polynomial_coeffs()
    return p is not None and np.trim_zeros(np.asarray(p), "b").size == 2


def ee_predicate_z2z(lam: complex, M: int = 4096, tol: Tolerances = DEFAULT) -> bool:
    """``lam = 1`` or ``-lam/4`` lies outside the image of ``z^2 + z``."""
    lam = complex(lam)
    if lam == 0:
        raise ValueError("lambda must be nonzero")
    if lam == 1:
        return True
    w = -lam / 4
    v = valence(Z2Z, w, M, tol=tol)
    if v.status == "unresolved":
        return not cardioid_membership(w)
    return not v.inside


@dataclass(frozen=True, eq=False)
class EEReport:
    symbol: SymbolSpec
    lambdas: np.ndarray
    verdicts: tuple

    @property
    def status(self) -> np.ndarray:
        return np.array([v.status for v in self.verdicts])

    def as_dict(self) -> dict:
        return {"symbol": self.symbol.to_json(), "verdicts": [v.as_dict() for v in self.verdicts]}


def default_grid(n: int = 64, half_width: float = 6.0) -> tuple[np.ndarray, np.ndarray]:
    x = np.linspace(-half_width, half_width, n)
    return x, x.copy()


def ee_scan(phi: SymbolSpec, xs: Sequence[float], ys: Sequence[float], N: int = 64,
            plan: SamplingPlan | None = None, M: int = 1024,
            tol: Tolerances = DEFAULT) -> EEReport:
    """Verdicts on the grid ``lambda = x + i y``; ``lambda = 0`` is skipped as out."""
    xs, ys = np.asarray(xs, float), np.asarray(ys, float)
    lams = (xs[None, :] + 1j * ys[:, None]).ravel()
    out = []
    for lam in lams:
        if lam == 0:
            out.append(EEVerdict(0j, False, False, OUT, failure="zero"))
            continue
        out.append(ee_membership(phi, lam, N, plan, M, tol))
    return EEReport(phi, lams, tuple(out))


@dataclass(frozen=True)
class PowerCheck:
    lam_power: complex
    certified: bool
    composition_residual: float
    pointwise_residual: float
    method: str


def ee_power_check(phi: SymbolSpec, lam: complex, n: int, N: int = 128,
                   tol: Tolerances = DEFAULT) -> PowerCheck:
    """A lift certifying ``lam`` for ``phi`` also certifies ``lam^n`` for ``phi^n``."""
    if n not in (2, 3):
        raise ValueError("n must be 2 or 3")
    lam = complex(lam)
    if lam == 1:
        return PowerCheck(1 + 0j, True, 0.0, 0.0, "identity")
    psi = Scale(1 / lam, phi)
    sub = subordination_solve(phi, psi, N, tol)
    if not sub.ok:
        return PowerCheck(lam ** n, False, math.inf, math.inf, sub.method)
    comp = phi.compose_series(sub.omega)
    lhs = power(comp, n)
    rhs = power(psi.series(N), n)
    scale = max(1.0, float(np.abs(rhs.coeffs).max()))
    comp_res = float(np.abs(lhs.coeffs - rhs.coeffs).max()) / scale
    z = _sample_points()
    w = sub.omega_spec(z) if sub.omega_spec is not None else sub.omega(z)
    point = float(np.abs(phi(w) ** n - psi(z) ** n).max())
    ok = comp_res <= 1e-8 and point <= 1e-8
    return PowerCheck(lam ** n, ok, comp_res, point, sub.method)


# ---------------------------------------------------------------------------
# eigenvectors of T_phi^* from preimages


@dataclass(frozen=True, eq=False)
class EigenvectorResult:
    found: bool
    a: complex | None = None
    kernel: KernelVector | None = None
    residual: KernelResidual | None = None

    @property
    def verified(self) -> bool:
        return self.found and self.residual is not None and self.residual.within_bound


def eigenvector_for_value(phi: SymbolSpec, alpha: complex, N: int = 256,
                          tol: Tolerances = DEFAULT) -> EigenvectorResult:
    """``K_a`` with ``phi(a) = alpha``: an eigenvector of ``T_phi^*`` for ``conj(alpha)``.

    Not finding a preimage says nothing about ``conj(alpha)`` being outside
    the point spectrum.
    """
    roots = preimages(phi, alpha, tol)
    if roots.size == 0:
        return EigenvectorResult(False)
    a = complex(roots[0])
    return EigenvectorResult(True, a, kernel_vector(a, N), kernel_eigen_residual(phi, a, N))


def point_spectrum_hits(phi: SymbolSpec, psi: SymbolSpec, samples: Sequence[complex],
                        N: int = 128, tol: Tolerances = DEFAULT) -> float:
    """Fraction of samples ``z`` for which ``conj(psi(z))`` gets a verified eigenvector of ``T_phi^*``."""
    hits = [eigenvector_for_value(phi, complex(psi(z)), N, tol).verified for z in samples]
    return float(np.mean(hits)) if hits else math.nan
