"""Image geometry of symbols: boundary curves, valence and containment.

Valence of a value ``w`` under ``phi`` is the winding number of the sampled
curve ``phi(r e^{it})`` around ``w`` (argument principle).  A point is only
classified when it is farther from the curve than the sampling threshold
and the winding number at radius ``r`` agrees with the one at ``(1 + r)/2``;
otherwise it is reported as unresolved.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence, Union

import numba
import numpy as np

# the TBB shipped with some distributions is too old for numba and warns on import
numba.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]

from .series import SymbolSpec, boundary_values
from .tolerances import DEFAULT, Tolerances

INSIDE = "inside"
OUTSIDE = "outside"
UNRESOLVED = "unresolved"


def configure_threads() -> int:
    """Cap numba's thread pool at ``HARDYLAB_THREADS`` when it is set."""
    raw = os.environ.get("HARDYLAB_THREADS")
    if raw:
        n = max(1, min(int(raw), numba.config.NUMBA_NUM_THREADS))
        numba.set_num_threads(n)
    return numba.get_num_threads()


@numba.njit(cache=True)
def _wind_one(xs, ys, px, py):
    """Crossing-number winding and distance from ``(px, py)`` to a closed polyline."""
    m = xs.size
    wn = 0
    best = np.inf
    for j in range(m):
        x0 = xs[j]
        y0 = ys[j]
        k = j + 1
        if k == m:
            k = 0
        x1 = xs[k]
        y1 = ys[k]
        ex = x1 - x0
        ey = y1 - y0
        cross = ex * (py - y0) - (px - x0) * ey
        if y0 <= py:
            if y1 > py and cross > 0:
                wn += 1
        elif y1 <= py and cross < 0:
            wn -= 1
        ll = ex * ex + ey * ey
        t = 0.0
        if ll > 0:
            t = ((px - x0) * ex + (py - y0) * ey) / ll
            if t < 0:
                t = 0.0
            elif t > 1:
                t = 1.0
        dx = x0 + t * ex - px
        dy = y0 + t * ey - py
        d = dx * dx + dy * dy
        if d < best:
            best = d
    return wn, math.sqrt(best)


@numba.njit(parallel=True, cache=True)
def _wind_many(xs, ys, px, py, wn, dist):
    for i in numba.prange(px.size):
        wn[i], dist[i] = _wind_one(xs, ys, px[i], py[i])


def winding_numbers(curve: np.ndarray, points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Winding numbers of a closed polyline around ``points`` and the distances to it."""
    c = np.ascontiguousarray(curve, dtype=complex)
    p = np.ascontiguousarray(np.ravel(points), dtype=complex)
    wn = np.empty(p.size, dtype=np.int64)
    dist = np.empty(p.size)
    _wind_many(c.real.copy(), c.imag.copy(), p.real.copy(), p.imag.copy(), wn, dist)
    return wn, dist


@dataclass(frozen=True, eq=False)
class BoundaryCurve:
    """``phi`` sampled at ``M`` equispaced angles on the circle of radius ``r``."""

    samples: np.ndarray
    spec: SymbolSpec
    mesh: int
    radius: float

    @property
    def threshold(self) -> float:
        """Distance below which a point is too close to the polyline to classify.

        Twice the largest second difference of the samples: a chord of the
        sampled curve deviates from the arc it replaces by less than that.
        """
        s = self.samples
        second = np.abs(np.roll(s, -1) - 2 * s + np.roll(s, 1))
        return float(2 * second.max())

    def winding(self, points) -> tuple[np.ndarray, np.ndarray]:
        return winding_numbers(self.samples, points)

    def self_intersections(self) -> list[complex]:
        """Crossing points of the polyline with itself (non-adjacent edges)."""
        s = self.samples
        a, b = s, np.roll(s, -1)
        out = []
        m = s.size
        for j in range(m):
            d1 = b[j] - a[j]
            rest = np.arange(j + 2, m if j > 0 else m - 1)
            if rest.size == 0:
                continue
            p, q = a[rest], b[rest]
            d2 = q - p
            den = d1.real * d2.imag - d1.imag * d2.real
            ok = den != 0
            diff = p - a[j]
            with np.errstate(divide="ignore", invalid="ignore"):
                t = (diff.real * d2.imag - diff.imag * d2.real) / den
                u = (diff.real * d1.imag - diff.imag * d1.real) / den
            hit = ok & (t >= 0) & (t < 1) & (u >= 0) & (u < 1)
            out.extend(complex(a[j] + t[h] * d1) for h in np.flatnonzero(hit))
        return out


def boundary_curve(spec: SymbolSpec, M: int = 4096, r: float | None = None,
                   tol: Tolerances = DEFAULT) -> BoundaryCurve:
    if M < 64:
        raise ValueError("boundary curves need at least 64 samples")
    r = 1 - tol.curve_radius_gap if r is None else r
    if not 0 < r < 1:
        raise ValueError("curve radius must lie in (0, 1)")
    samples = np.asarray(boundary_values(spec, M, r), dtype=complex)
    samples.setflags(write=False)
    return BoundaryCurve(samples, spec, M, r)


@dataclass(frozen=True)
class RegionVerdict:
    """Membership of ``point`` in ``phi(U)``.

    ``valence`` is ``None`` when membership comes from a closed-form
    description of the image instead of a winding number (e.g. the unit
    singular function, which covers each point infinitely often).
    """

    point: complex
    valence: int | None
    margin: float
    status: str

    @property
    def inside(self) -> bool:
        return self.status == INSIDE


@dataclass(frozen=True, eq=False)
class ValenceField:
    """Vectorised verdicts for many points."""

    points: np.ndarray
    valence: np.ndarray  # -1 where not available
    margin: np.ndarray
    status: np.ndarray  # 1 inside, 0 outside, -1 unresolved

    def verdict(self, i: int) -> RegionVerdict:
        v = int(self.valence[i])
        return RegionVerdict(complex(self.points[i]), None if v < 0 else v, float(self.margin[i]),
                             {1: INSIDE, 0: OUTSIDE, -1: UNRESOLVED}[int(self.status[i])])


@dataclass(frozen=True, eq=False)
class _Curves:
    outer: BoundaryCurve
    check: BoundaryCurve


_CURVE_CACHE: dict = {}


def _curves(spec: SymbolSpec, M: int, r: float) -> _Curves:
    key = (spec.dumps(), M, r)
    hit = _CURVE_CACHE.get(key)
    if hit is None:
        hit = _Curves(boundary_curve(spec, M, r), boundary_curve(spec, M, (1 + r) / 2))
        if len(_CURVE_CACHE) > 64:
            _CURVE_CACHE.clear()
        _CURVE_CACHE[key] = hit
    return hit


def valence_many(spec: SymbolSpec, points, M: int = 4096, r: float | None = None,
                 tol: Tolerances = DEFAULT) -> ValenceField:
    pts = np.ascontiguousarray(np.ravel(np.asarray(points, dtype=complex)))
    closed = spec.image_membership(pts)
    if closed is not None:
        inside, margin = closed
        thr = 1e-12 * max(1.0, float(np.abs(pts).max(initial=0)))
        status = np.where(margin <= thr, -1, np.where(inside, 1, 0))
        return ValenceField(pts, np.full(pts.size, -1), np.asarray(margin, float), status)
    r = 1 - tol.curve_radius_gap if r is None else r
    cv = _curves(spec, M, r)
    wn, dist = cv.outer.winding(pts)
    wn2, dist2 = cv.check.winding(pts)
    thr = max(cv.outer.threshold, cv.check.threshold)
    margin = np.minimum(dist, dist2)
    bad = (margin < thr) | (wn != wn2) | (wn < 0)
    status = np.where(bad, -1, np.where(wn > 0, 1, 0))
    return ValenceField(pts, np.where(bad, -1, wn), dist, status)


def valence(spec: SymbolSpec, w: complex, M: int = 4096, r: float | None = None,
            tol: Tolerances = DEFAULT) -> RegionVerdict:
    """Number of preimages of ``w`` under ``spec`` (argument principle)."""
    return valence_many(spec, [w], M, r, tol).verdict(0)


# ---------------------------------------------------------------------------
# containment


@dataclass(frozen=True)
class SamplingPlan:
    """Polar grid of sample points in the disc."""

    radii: tuple
    angles: int

    @classmethod
    def default(cls, n_radii: int = 64, n_angles: int = 256, r_max: float = 1 - 1e-3) -> "SamplingPlan":
        return cls(tuple(r_max * (k + 1) / n_radii for k in range(n_radii)), n_angles)

    @classmethod
    def ring(cls, n_angles: int = 256, r: float = 1 - 1e-3) -> "SamplingPlan":
        """Boundary circle only; enough when the target region is simply connected."""
        return cls((r,), n_angles)

    def points(self) -> np.ndarray:
        t = np.exp(2j * np.pi * np.arange(self.angles) / self.angles)
        return (np.array(self.radii)[:, None] * t[None, :]).ravel()


@dataclass(frozen=True, eq=False)
class ContainmentReport:
    """Verdicts for ``psi(z) in phi(U)`` over a sampling plan."""

    samples: np.ndarray
    values: np.ndarray
    status: np.ndarray
    margin: np.ndarray

    @property
    def fraction_inside(self) -> float:
        return float(np.mean(self.status == 1))

    @property
    def violations(self) -> list[tuple[complex, complex]]:
        idx = np.flatnonzero(self.status == 0)
        return [(complex(self.samples[i]), complex(self.values[i])) for i in idx]

    @property
    def unresolved(self) -> list[tuple[complex, complex]]:
        idx = np.flatnonzero(self.status == -1)
        return [(complex(self.samples[i]), complex(self.values[i])) for i in idx]

    @property
    def passes(self) -> bool:
        return bool(np.all(self.status == 1))

    @property
    def passes_closure(self) -> bool:
        """Every sample is inside or too close to the boundary to tell."""
        return not np.any(self.status == 0)

    def summary(self) -> dict:
        return {
            "samples": int(self.samples.size),
            "fraction_inside": self.fraction_inside,
            "violations": len(self.violations),
            "unresolved": len(self.unresolved),
            "passes": self.passes,
            "passes_closure": self.passes_closure,
        }


def image_contained(psi: SymbolSpec, phi: SymbolSpec, plan: SamplingPlan | None = None,
                    M: int = 4096, tol: Tolerances = DEFAULT) -> ContainmentReport:
    """Sampled test of ``psi(U) subset phi(U)``."""
    plan = SamplingPlan.default() if plan is None else plan
    z = plan.points()
    vals = np.asarray(psi(z), dtype=complex)
    field_ = valence_many(phi, vals, M, tol=tol)
    return ContainmentReport(z, vals, field_.status, field_.margin)


# ---------------------------------------------------------------------------
# the cardioid


def cardioid_membership(w):
    """``|w| < 2 cos(arg(w) / 3)``: the image of the disc under ``z^2 + z``."""
    w = np.asarray(w, dtype=complex)
    out = np.abs(w) < 2 * np.cos(np.angle(w) / 3)
    return bool(out) if out.ndim == 0 else out


def cardioid_boundary(M: int = 4096) -> np.ndarray:
    t = np.linspace(-np.pi, np.pi, M, endpoint=False)
    return 2 * np.cos(t / 3) * np.exp(1j * t)


# ---------------------------------------------------------------------------
# output


STATUS_COLOURS = {1: "#4caf50", 0: "#e0e0e0", -1: "#ff9800"}
STATUS_NAMES = {1: "in", 0: "out", -1: "undetermined"}


@dataclass
class Raster:
    """Status grid over a rectangle; ``status[i, j]`` belongs to ``(xs[j], ys[i])``."""

    xs: np.ndarray
    ys: np.ndarray
    status: np.ndarray
    valence: np.ndarray | None = None
    labels: dict = field(default_factory=lambda: dict(STATUS_NAMES))


def write_raster_csv(path: Union[str, Path], raster: Raster) -> None:
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["x", "y", "valence", "status"])
        for i, y in enumerate(raster.ys):
            for j, x in enumerate(raster.xs):
                v = "" if raster.valence is None else int(raster.valence[i, j])
                out.writerow([repr(float(x)), repr(float(y)), v, raster.labels[int(raster.status[i, j])]])


def render_svg(path: Union[str, Path] | None, curves: Sequence[np.ndarray] = (),
               raster: Raster | None = None, bounds: tuple | None = None,
               title: str = "", size: int = 1024) -> str:
    """Plot curves and a status raster in the complex plane; returns the SVG text."""
    if bounds is None:
        pts = [np.asarray(c) for c in curves]
        if raster is not None:
            pts.append(np.array([raster.xs[0] + 1j * raster.ys[0], raster.xs[-1] + 1j * raster.ys[-1]]))
        allp = np.concatenate(pts) if pts else np.array([-1 - 1j, 1 + 1j])
        pad = 0.05 * max(np.ptp(allp.real), np.ptp(allp.imag), 1e-9)
        bounds = (allp.real.min() - pad, allp.real.max() + pad, allp.imag.min() - pad, allp.imag.max() + pad)
    x0, x1, y0, y1 = bounds
    span = max(x1 - x0, y1 - y0)
    plot = size - 160

    def sx(x):
        return 20 + (x - x0) / span * plot

    def sy(y):
        return 20 + (y1 - y) / span * plot

    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}" '
             f'viewBox="0 0 {size} {size}">',
             f'<rect width="{size}" height="{size}" fill="white"/>']
    if raster is not None:
        dx = abs(raster.xs[1] - raster.xs[0]) if raster.xs.size > 1 else span
        dy = abs(raster.ys[1] - raster.ys[0]) if raster.ys.size > 1 else span
        w, h = dx / span * plot, dy / span * plot
        for i, y in enumerate(raster.ys):
            for j, x in enumerate(raster.xs):
                colour = STATUS_COLOURS[int(raster.status[i, j])]
                parts.append(f'<rect x="{sx(x) - w / 2:.2f}" y="{sy(y) - h / 2:.2f}" '
                             f'width="{w:.2f}" height="{h:.2f}" fill="{colour}"/>')
    for c in curves:
        c = np.asarray(c)
        coords = " ".join(f"{sx(p.real):.2f},{sy(p.imag):.2f}" for p in c)
        parts.append(f'<polygon points="{coords}" fill="none" stroke="#1a237e" stroke-width="1.5"/>')
    # axes
    if x0 < 0 < x1:
        parts.append(f'<line x1="{sx(0):.2f}" y1="{sy(y0):.2f}" x2="{sx(0):.2f}" y2="{sy(y1):.2f}" '
                     'stroke="#9e9e9e" stroke-width="0.5"/>')
    if y0 < 0 < y1:
        parts.append(f'<line x1="{sx(x0):.2f}" y1="{sy(0):.2f}" x2="{sx(x1):.2f}" y2="{sy(0):.2f}" '
                     'stroke="#9e9e9e" stroke-width="0.5"/>')
    ly = size - 120
    if title:
        parts.append(f'<text x="20" y="{ly}" font-family="sans-serif" font-size="18">{_escape(title)}</text>')
    legend = [("boundary curve", "#1a237e")]
    if raster is not None:
        legend += [(raster.labels[k], STATUS_COLOURS[k]) for k in (1, 0, -1)]
    for n, (name, colour) in enumerate(legend):
        y = ly + 24 + 22 * n
        parts.append(f'<rect x="20" y="{y - 12}" width="14" height="14" fill="{colour}"/>')
        parts.append(f'<text x="42" y="{y}" font-family="sans-serif" font-size="14">{_escape(name)}</text>')
    parts.append(f'<text x="{size - 20}" y="{size - 20}" text-anchor="end" font-family="sans-serif" '
                 f'font-size="12">[{x0:.3g}, {x1:.3g}] x [{y0:.3g}, {y1:.3g}]</text>')
    parts.append("</svg>")
    text = "\n".join(parts) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _escape(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
