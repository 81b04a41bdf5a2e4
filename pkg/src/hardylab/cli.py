"""Command-line front end.

Every subcommand writes one JSON report (stdout or ``--out``) with sorted
keys and the tolerance set that produced it.  Exit status: 0 success,
2 typed mathematical failure, 1 usage error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .geometry import (
    Raster,
    SamplingPlan,
    boundary_curve,
    cardioid_boundary,
    configure_threads,
    image_contained,
    render_svg,
    write_raster_csv,
)
from .intertwine import (
    EmptyValidBlock,
    NotCommonEigenvalue,
    deddens_inner_X,
    finite_dim_partner,
    intertwine_residual,
    recover_weighted_comp,
    vandermonde_system_check,
)
from .operators import (
    NotInnerError,
    OperatorMatrix,
    c_coeff,
    composition_matrix,
    identity_matrix,
    operator_norm,
    toeplitz_matrix,
    weighted_composition_matrix,
    wold_data,
)
from .series import (
    NAMED_SYMBOLS,
    CriticalPointError,
    DomainError,
    NotSelfMapError,
    Polynomial,
    QuadraticBranch,
    Shift,
    SpecError,
    SymbolSpec,
    Z,
    is_z2z,
    parse_symbol,
    sup_norm_estimate,
    to_series,
)
from .spectra import default_grid, ee_predicate_z2z, ee_scan
from .tolerances import DEFAULT, Tolerances

COMMANDS = ("series", "build-operator", "check-intertwine", "deddens", "recover", "vandermonde",
            "image-test", "ee-scan", "wold-check", "finite-dim")

SCHEMA_HINT = ('symbols are shorthands (' + ", ".join(sorted(NAMED_SYMBOLS)) + ') or JSON such as '
               '{"tag":"polynomial","coeffs":[[0,0],[2,0]]}; complex numbers are [re, im] pairs')


class UsageError(Exception):
    pass


class MathFailure(Exception):
    """A well-formed request whose mathematical check failed."""

    def __init__(self, message: str, report: dict | None = None):
        super().__init__(message)
        self.report = report or {}


TYPED_FAILURES = (NotSelfMapError, NotInnerError, NotCommonEigenvalue, CriticalPointError,
                  DomainError, EmptyValidBlock)


@dataclass
class RunConfig:
    command: str
    N: int = 256
    M: int = 4096
    tolerances: Tolerances = field(default_factory=lambda: DEFAULT)
    out: str | None = None
    svg: str | None = None
    csv: str | None = None
    params: dict = field(default_factory=dict)

    def validate(self) -> "RunConfig":
        if self.command not in COMMANDS:
            raise UsageError(f"unknown command {self.command!r}; choose from {', '.join(COMMANDS)}")
        if not 16 <= self.N <= 8192:
            raise UsageError(f"N must lie in [16, 8192], got {self.N}")
        if not 64 <= self.M <= 2 ** 20:
            raise UsageError(f"M must lie in [64, 2^20], got {self.M}")
        return self


# ---------------------------------------------------------------------------
# parsing helpers


def _symbol(text: str | None, what: str) -> SymbolSpec:
    if text is None:
        raise UsageError(f"missing --{what}; {SCHEMA_HINT}")
    path = Path(text)
    if not text.strip().startswith("{") and text not in NAMED_SYMBOLS and path.suffix == ".json" and path.exists():
        text = path.read_text()
    try:
        return parse_symbol(text)
    except SpecError as exc:
        raise UsageError(f"bad --{what}: {exc}. {SCHEMA_HINT}") from exc


def _operator(text: str, N: int, tol: Tolerances) -> OperatorMatrix:
    """``identity``, ``c<symbol>`` (composition), ``csv:PATH`` or JSON
    ``{"omega": symbol, "h": symbol}`` for a weighted composition."""
    t = text.strip()
    if t in ("I", "identity"):
        return identity_matrix(N)
    if t.startswith("csv:"):
        X = OperatorMatrix.from_csv(t[4:])
        if X.N != N:
            raise UsageError(f"matrix in {t[4:]} has N = {X.N}, expected {N}")
        return X
    if t.startswith("{"):
        obj = json.loads(t)
        omega = _symbol(json.dumps(obj["omega"]) if isinstance(obj["omega"], dict) else obj["omega"], "x.omega")
        h = obj.get("h")
        h = None if h is None else _symbol(json.dumps(h) if isinstance(h, dict) else h, "x.h")
        return weighted_composition_matrix(omega, h, N, tol)
    if t.startswith("c"):
        return composition_matrix(_symbol(t[1:], "x"), N, tol)
    raise UsageError(f"cannot read operator {text!r}; use identity, c<symbol>, csv:PATH or JSON")


def _complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError as exc:
        raise UsageError(f"not a complex number: {text!r}") from exc


def _tolerances(items: list[str] | None) -> Tolerances:
    tol = DEFAULT
    names = {f.name: f.type for f in fields(Tolerances)}
    for item in items or []:
        key, _, val = item.partition("=")
        if key not in names:
            raise UsageError(f"unknown tolerance {key!r}; known: {', '.join(sorted(names))}")
        try:
            value = int(val) if isinstance(getattr(DEFAULT, key), int) else float(val)
        except ValueError as exc:
            raise UsageError(f"bad value for tolerance {key}: {val!r}") from exc
        tol = tol.updated(**{key: value})
    return tol


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


# ---------------------------------------------------------------------------
# commands


def cmd_series(cfg: RunConfig) -> dict:
    spec = _symbol(cfg.params.get("symbol"), "symbol")
    s = to_series(spec, cfg.N)
    sup = sup_norm_estimate(spec, cfg.M)
    return {
        "symbol": spec.to_json(),
        "coeffs": s.coeffs,
        "exact_degree": s.exact_degree,
        "coeff_error": s.coeff_error,
        "sup_norm_estimate": {"value": sup.value, "mesh": sup.mesh, "radius": sup.radius},
    }


def cmd_build_operator(cfg: RunConfig) -> dict:
    kind = cfg.params.get("kind") or "toeplitz"
    tol = cfg.tolerances
    if kind == "toeplitz":
        M = toeplitz_matrix(_symbol(cfg.params.get("phi"), "phi"), cfg.N)
    elif kind == "composition":
        M = composition_matrix(_symbol(cfg.params.get("omega"), "omega"), cfg.N, tol)
    elif kind == "weighted":
        M = weighted_composition_matrix(_symbol(cfg.params.get("omega"), "omega"),
                                        _symbol(cfg.params.get("h"), "h"), cfg.N, tol)
    else:
        raise UsageError("--kind must be toeplitz, composition or weighted")
    if cfg.csv:
        M.to_csv(cfg.csv)
    return {"label": M.label, "N": M.N, "valid_block": M.valid_block, "leak": M.leak,
            "lower_triangular": M.is_lower_triangular, "csv": cfg.csv}


def cmd_check_intertwine(cfg: RunConfig) -> dict:
    phi = _symbol(cfg.params.get("phi"), "phi")
    psi = _symbol(cfg.params.get("psi"), "psi")
    X = _operator(cfg.params.get("x") or "identity", cfg.N, cfg.tolerances)
    rep = intertwine_residual(X, phi, psi, allow_tail=True, tol=cfg.tolerances)
    out = {"phi": phi.to_json(), "psi": psi.to_json(), "report": rep.as_dict()}
    limit = cfg.tolerances.exact * max(rep.scale, 1.0) + rep.tail
    out["limit"] = limit
    out["intertwines"] = rep.residual <= limit
    if not out["intertwines"]:
        raise MathFailure("X does not intertwine T_phi and T_psi at this truncation", out)
    return out


def cmd_deddens(cfg: RunConfig) -> dict:
    phi = _symbol(cfg.params.get("symbol"), "symbol")
    cutoff = int(cfg.params.get("cutoff") or 16)
    X, basis = deddens_inner_X(phi, cfg.N, cutoff, cfg.tolerances)
    Q = basis.span_basis(cutoff)
    rep = intertwine_residual(X, phi, Z, subspace=Q, allow_tail=True, norms=False, tol=cfg.tolerances)
    tail = basis.max_tail_energy
    out = {
        "symbol": phi.to_json(),
        "cutoff": cutoff,
        "gram_defect": basis.gram_defect,
        "tail_energy": basis.tail_energy,
        "restricted_residual": rep.residual,
        "residual_bound": 10 * math.sqrt(max(tail, 0.0)),
        "gram_bound": 10 * tail,
        "norm_X": operator_norm(X, cfg.tolerances).value,
    }
    out["passes"] = (basis.gram_defect <= out["gram_bound"] + cfg.tolerances.exact
                     and rep.residual <= out["residual_bound"] + cfg.tolerances.exact)
    if not out["passes"]:
        raise MathFailure("truncation does not explain the Deddens defects", out)
    return out


def _disc_grid(n: int, r: float = 0.5) -> np.ndarray:
    k = np.arange(n)
    return r * np.sqrt((k + 0.5) / n) * np.exp(2j * np.pi * k * 0.6180339887498949)


def cmd_recover(cfg: RunConfig) -> dict:
    X = _operator(cfg.params.get("x") or "identity", cfg.N, cfg.tolerances)
    z = _disc_grid(int(cfg.params.get("grid") or 64))
    rep = recover_weighted_comp(X, z, tol=cfg.tolerances)
    out = {"samples": z, "h": rep.h, "omega": rep.omega, "max_modulus": rep.max_modulus,
           "power_defect": rep.power_defect, "consistent": rep.consistent}
    if not rep.consistent:
        raise MathFailure("X is not a weighted composition operator on the sample grid", out)
    return out


def cmd_vandermonde(cfg: RunConfig) -> dict:
    phi = _symbol(cfg.params.get("phi") or "z2z", "phi")
    psi_text = cfg.params.get("psi")
    psi = _symbol(psi_text, "psi") if psi_text else Shift(-0.2, Polynomial((0, 0.01)))
    omegas = [_symbol(t, "omega") for t in cfg.params.get("omega") or []]
    if not omegas:
        if not is_z2z(phi):
            raise UsageError("--omega is required unless phi is z^2 + z")
        omegas = [QuadraticBranch(psi, 1), QuadraticBranch(psi, -1)]
    hs = [_symbol(t, "h") for t in cfg.params.get("h") or []] or [Polynomial((1,))] * len(omegas)
    if len(hs) != len(omegas):
        raise UsageError("give one --h per --omega")
    z = _disc_grid(int(cfg.params.get("grid") or 32))
    try:
        rep = vandermonde_system_check(omegas, hs, phi, psi, z)
    except ValueError as exc:
        raise MathFailure(str(exc)) from exc
    Y = None
    for w, h in zip(omegas, hs):
        C = weighted_composition_matrix(w, h, cfg.N, cfg.tolerances)
        Y = C if Y is None else Y + C
    ir = intertwine_residual(Y, phi, psi, allow_tail=True, norms=False, tol=cfg.tolerances)
    rec = recover_weighted_comp(Y, z, tol=cfg.tolerances)
    return {
        "phi": phi.to_json(), "psi": psi.to_json(), "omegas": [w.to_json() for w in omegas],
        "max_system_residual": rep.max_system_residual, "max_u": rep.max_u,
        "composition_defect": rep.composition_defect, "collisions": rep.collisions,
        "intertwine": ir.as_dict(), "recovery_consistent": rec.consistent,
    }


def _image_svg(cfg: RunConfig, phi: SymbolSpec, psi: SymbolSpec, rep) -> None:
    curves = [boundary_curve(phi, min(cfg.M, 4096)).samples,
              boundary_curve(psi, min(cfg.M, 4096)).samples]
    render_svg(cfg.svg, curves, title="image test: phi(U) boundary and psi(U) boundary")


def cmd_image_test(cfg: RunConfig) -> dict:
    psi = _symbol(cfg.params.get("psi"), "psi")
    phi = _symbol(cfg.params.get("phi"), "phi")
    rep = image_contained(psi, phi, SamplingPlan.default(), cfg.M, cfg.tolerances)
    out = {"psi": psi.to_json(), "phi": phi.to_json(), **rep.summary(),
           "first_violations": rep.violations[:20], "first_unresolved": rep.unresolved[:20]}
    if cfg.svg:
        _image_svg(cfg, phi, psi, rep)
    if cfg.csv:
        with open(cfg.csv, "w") as fh:
            fh.write("z_re,z_im,w_re,w_im,status\n")
            for z, w, s in zip(rep.samples, rep.values, rep.status):
                fh.write(f"{z.real!r},{z.imag!r},{w.real!r},{w.imag!r},{int(s)}\n")
    if not rep.passes_closure:
        raise MathFailure("psi(U) is not contained in the closure of phi(U)", out)
    return out


def _grid(spec: str | None) -> tuple[np.ndarray, np.ndarray]:
    if spec in (None, "default"):
        return default_grid()
    try:
        x0, x1, y0, y1, n = spec.split(",")
        n = int(n)
        return np.linspace(float(x0), float(x1), n), np.linspace(float(y0), float(y1), n)
    except ValueError as exc:
        raise UsageError("--grid is 'default' or 'x0,x1,y0,y1,n' (write --grid=-6,6,-6,6,64)") from exc


def cmd_ee_scan(cfg: RunConfig) -> dict:
    phi = _symbol(cfg.params.get("symbol"), "symbol")
    xs, ys = _grid(cfg.params.get("grid"))
    plan = SamplingPlan.ring() if cfg.params.get("plan", "ring") == "ring" else SamplingPlan.default()
    rep = ee_scan(phi, xs, ys, N=64, plan=plan, M=min(cfg.M, 1024), tol=cfg.tolerances)
    out = rep.as_dict()
    out["grid"] = {"xs": xs, "ys": ys}
    out["plan"] = cfg.params.get("plan", "ring")
    code = {"in": 1, "out": 0, "undetermined": -1}
    status = np.array([code[v.status] for v in rep.verdicts]).reshape(ys.size, xs.size)
    if is_z2z(phi):
        pred = np.array([ee_predicate_z2z(v.lam) if v.lam != 0 else False for v in rep.verdicts])
        resolved = status.ravel() != -1
        agree = (pred == (status.ravel() == 1)) & resolved
        out["predicate_agreement"] = float(agree.sum() / max(resolved.sum(), 1))
    if cfg.svg:
        curves = []
        if is_z2z(phi):
            curves.append(-4 * cardioid_boundary(1024))
        render_svg(cfg.svg, curves, Raster(xs, ys, status), title=f"extended eigenvalues, {cfg.params.get('symbol')}")
    if cfg.csv:
        write_raster_csv(cfg.csv, Raster(xs, ys, status, labels={1: "in", 0: "out", -1: "undetermined"}))
    return out


def cmd_wold_check(cfg: RunConfig) -> dict:
    psi = _symbol(cfg.params.get("symbol"), "symbol")
    cutoff = int(cfg.params.get("cutoff") or 40)
    wd = wold_data(psi, cfg.N, cutoff, cfg.tolerances)
    w = wd.Wbasis[:, 0]
    lams = [_complex(t) for t in (cfg.params.get("lam") or ["0", "0.3", "0.6j"])]
    rows = []
    for lam in lams:
        for order in range(5):
            r = wd.residual(order, lam, w)
            rows.append({"lambda": lam, "order": order, "residual": r.residual, "estimate": r.estimate,
                         "within": r.within_estimate})
    coeff_ok = all(c_coeff(n_, k) - c_coeff(n_, k - 1) == n_ * c_coeff(n_ - 1, k)
                   for n_ in range(1, 21) for k in range(1, 21))
    out = {"symbol": psi.to_json(), "kernel_dimension": int(wd.Wbasis.shape[1]), "rows": rows,
           "coefficient_identity": coeff_ok}
    if not all(r["within"] for r in rows) or not coeff_ok:
        raise MathFailure("Wold residual exceeds its truncation estimate", out)
    return out


def _matrix(text: str) -> np.ndarray:
    path = Path(text)
    if path.exists():
        text = path.read_text()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"matrices are JSON arrays of rows: {exc}") from exc

    def cell(v):
        return complex(v[0], v[1]) if isinstance(v, list) else complex(v)

    return np.array([[cell(v) for v in row] for row in raw])


def cmd_finite_dim(cfg: RunConfig) -> dict:
    if cfg.params.get("a") is None or cfg.params.get("b") is None:
        raise UsageError("finite-dim needs --a and --b (JSON arrays of rows)")
    A, B = _matrix(cfg.params["a"]), _matrix(cfg.params["b"])
    lam = _complex(cfg.params.get("lam") or "0")
    res = finite_dim_partner(A, B, lam, cfg.tolerances)
    return {"Y": res.Y, "residual": res.residual, "eigen_residual": res.eigen_residual, "scale": res.scale}


HANDLERS = {
    "series": cmd_series,
    "build-operator": cmd_build_operator,
    "check-intertwine": cmd_check_intertwine,
    "deddens": cmd_deddens,
    "recover": cmd_recover,
    "vandermonde": cmd_vandermonde,
    "image-test": cmd_image_test,
    "ee-scan": cmd_ee_scan,
    "wold-check": cmd_wold_check,
    "finite-dim": cmd_finite_dim,
}


def run(cfg: RunConfig) -> tuple[int, dict]:
    """Execute a validated config; returns the exit status and the report."""
    cfg.validate()
    configure_threads()
    report: dict = {"command": cfg.command, "N": cfg.N, "M": cfg.M, "version": __version__,
                    "tolerances": cfg.tolerances.as_dict()}
    try:
        body = HANDLERS[cfg.command](cfg)
        report.update(body)
        report["status"] = "ok"
        code = 0
    except MathFailure as exc:
        report.update(exc.report)
        report["status"] = "failure"
        report["error"] = str(exc)
        code = 2
    except TYPED_FAILURES as exc:
        report["status"] = "failure"
        report["error"] = f"{type(exc).__name__}: {exc}"
        code = 2
    return code, report


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hardylab", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--N", type=int, default=None, help="truncation (16..8192, default 256)")
    common.add_argument("--M", type=int, default=None, help="boundary mesh (64..2^20, default 4096)")
    common.add_argument("--tol", action="append", metavar="NAME=VALUE", help="override a tolerance")
    common.add_argument("--out", help="write the JSON report here instead of stdout")
    common.add_argument("--svg", help="SVG plot path")
    common.add_argument("--csv", help="CSV output path")
    common.add_argument("--config", help="JSON file with any of the flags above plus command parameters")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, *args):
        sp = sub.add_parser(name, parents=[common])
        for a in args:
            if a in ("omega*", "h*", "lam*"):
                sp.add_argument(f"--{a[:-1]}", action="append")
            else:
                sp.add_argument(f"--{a}")
        return sp

    add("series", "symbol")
    add("build-operator", "kind", "phi", "omega", "h")
    add("check-intertwine", "phi", "psi", "x")
    add("deddens", "symbol", "cutoff")
    add("recover", "x", "grid")
    add("vandermonde", "phi", "psi", "omega*", "h*", "grid")
    add("image-test", "psi", "phi")
    add("ee-scan", "symbol", "grid", "plan")
    add("wold-check", "symbol", "cutoff", "lam*")
    add("finite-dim", "a", "b", "lam")
    return p


def config_from_args(ns: argparse.Namespace) -> RunConfig:
    conf: dict = {}
    if ns.config:
        try:
            conf = json.loads(Path(ns.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {ns.config}: {exc}") from exc
    reserved = {"command", "N", "M", "tol", "out", "svg", "csv", "config"}
    params = {k: v for k, v in conf.items() if k not in reserved}
    params.update({k: v for k, v in vars(ns).items() if k not in reserved and v is not None})
    tol_items = list(conf.get("tol", [])) + list(ns.tol or [])
    return RunConfig(
        command=ns.command,
        N=ns.N if ns.N is not None else int(conf.get("N", 256)),
        M=ns.M if ns.M is not None else int(conf.get("M", 4096)),
        tolerances=_tolerances(tol_items),
        out=ns.out or conf.get("out"),
        svg=ns.svg or conf.get("svg"),
        csv=ns.csv or conf.get("csv"),
        params=params,
    )


def dumps(report: dict) -> str:
    return json.dumps(_jsonable(report), sort_keys=True, indent=2) + "\n"


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return 0 if exc.code == 0 else 1
    try:
        cfg = config_from_args(ns)
        code, report = run(cfg)
    except UsageError as exc:
        print(f"hardylab: usage error: {exc}", file=sys.stderr)
        return 1
    text = dumps(report)
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
