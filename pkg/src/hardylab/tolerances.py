"""Numerical tolerances shared across the package.

Every report written by the CLI embeds the :class:`Tolerances` instance that
produced it, so the values here are the single source of truth.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace


@dataclass(frozen=True)
class Tolerances:
    exact: float = 1e-12  # relative, for identities that hold exactly in exact arithmetic
    zero_detect: float = 1e-8  # relative to column norm (h, X*K_z)
    sup_eps: float = 1e-6  # boundary sampling radius is 1 - sup_eps
    self_map_margin: float = 0.0
    power_tol: float = 1e-8
    power_max_iter: int = 10_000
    newton_grid: int = 32
    newton_iter: int = 50
    newton_tol: float = 1e-12
    curve_radius_gap: float = 1e-4  # valence curves are drawn at r = 1 - gap
    subordination: float = 1e-8
    finite_dim: float = 1e-8
    inner_energy: float = 0.1  # allowed missing H^2 energy of an inner symbol at truncation N

    def as_dict(self) -> dict:
        return asdict(self)

    def updated(self, **changes) -> "Tolerances":
        return replace(self, **changes)


DEFAULT = Tolerances()
