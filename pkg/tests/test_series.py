import json
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hardylab.series import (
    NAMED_SYMBOLS,
    CriticalPointError,
    DomainError,
    FractionalLinear,
    Moebius,
    NotSelfMapError,
    Polynomial,
    PowerSeries,
    QuadraticBranch,
    Raw,
    Scale,
    Shift,
    SpecError,
    TruncationMismatch,
    UnitSingular,
    Z2Z,
    Compose,
    compose,
    divide,
    evaluate,
    evaluate_with_tail,
    multiply,
    parse_symbol,
    power,
    preimages,
    reversion,
    series_exp,
    series_sqrt,
    spec_from_json,
    sup_norm_estimate,
    to_series,
)

small = st.floats(-1, 1, allow_nan=False, allow_infinity=False)
cplx = st.builds(complex, small, small)


def poly_coeffs(max_deg):
    return st.lists(cplx, min_size=1, max_size=max_deg + 1)


def test_unit_singular_matches_laguerre_expansion():
    # exp((z+1)/(z-1)) = e^{-1} sum_n L_n^{(-1)}(2) z^n, and for n >= 1
    # L_n^{(-1)}(x) = sum_{k=1}^n (-1)^k C(n-1, k-1) x^k / k!
    N = 200
    got = to_series(UnitSingular(), N).coeffs
    mpmath.mp.dps = 80

    def lag(n):
        if n == 0:
            return mpmath.mpf(1)
        return mpmath.fsum((-1) ** k * math.comb(n - 1, k - 1) * mpmath.mpf(2) ** k / mpmath.factorial(k)
                           for k in range(1, n + 1))

    want = np.array([complex(mpmath.exp(-1) * lag(n)) for n in range(N)])
    assert np.max(np.abs(got - want)) < 1e-14


def test_unit_singular_matches_mpmath_taylor():
    mpmath.mp.dps = 30
    want = mpmath.taylor(lambda z: mpmath.exp((z + 1) / (z - 1)), 0, 30)
    got = to_series(UnitSingular(), 31).coeffs
    assert np.allclose(got, [complex(w) for w in want], atol=1e-15)


def test_reversion_gives_catalan_numbers():
    # inverse of w - w^2 is sum C_{n-1} z^n
    s = PowerSeries.polynomial([0, 1, -1], 20)
    r = reversion(s).coeffs
    catalan = [math.comb(2 * n, n) // (n + 1) for n in range(19)]
    assert np.allclose(r[1:], catalan, rtol=1e-12, atol=0)
    assert r[0] == 0


def test_reversion_rejects_critical_point():
    with pytest.raises(CriticalPointError):
        reversion(PowerSeries.polynomial([0, 0, 1], 8))
    with pytest.raises(ValueError):
        reversion(PowerSeries.polynomial([1, 1], 8))


def test_arithmetic_checks_truncation():
    with pytest.raises(TruncationMismatch):
        PowerSeries.identity(4) + PowerSeries.identity(5)


def test_exact_degree_is_validated():
    with pytest.raises(ValueError):
        PowerSeries([1, 2, 3], exact_degree=1)


def test_evaluate_refuses_outside_disc():
    with pytest.raises(DomainError):
        evaluate(PowerSeries.identity(4), 1.0)
    val, tail = evaluate_with_tail(to_series(UnitSingular(), 64), 0.5)
    assert abs(val - UnitSingular()(0.5)) <= tail + 1e-15


def test_compose_requires_self_map_for_recentring():
    outer = to_series(UnitSingular(), 16)
    with pytest.raises(NotSelfMapError):
        compose(outer, PowerSeries.polynomial([0.5, 0.9], 16))


@given(poly_coeffs(5), poly_coeffs(5))
def test_multiply_matches_convolution(a, b):
    N = 12
    s, t = PowerSeries.polynomial(a, N), PowerSeries.polynomial(b, N)
    want = np.convolve(a, b)[:N]
    got = multiply(s, t).coeffs[: len(want)]
    assert np.allclose(got, want, atol=1e-13)


@given(poly_coeffs(4), poly_coeffs(3), cplx)
def test_compose_agrees_with_pointwise_evaluation(p, q, z):
    z = 0.5 * z / max(1.0, abs(z))
    q = [0.0] + q  # centred inner keeps the composition exact
    N = 4 * 4 + 1
    c = compose(PowerSeries.polynomial(p, N), PowerSeries.polynomial(q, N))
    want = np.polyval(p[::-1], np.polyval(q[::-1], z))
    assert abs(c(z) - want) < 1e-12 * (1 + abs(want))
    assert c.is_exact


@given(st.lists(cplx, min_size=2, max_size=4))
def test_reversion_is_compositional_inverse(tail):
    coeffs = [0.0, 1.0 + 0.5 * abs(tail[0])] + [0.2 * t for t in tail[1:]]
    N = 24
    s = PowerSeries.polynomial(coeffs, N)
    r = reversion(s)
    ident = compose(s, r).coeffs
    want = np.zeros(N, complex)
    want[1] = 1
    assert np.allclose(ident, want, atol=1e-9)


@given(poly_coeffs(3), poly_coeffs(3))
def test_exp_is_a_homomorphism(a, b):
    N = 16
    s, t = PowerSeries.polynomial(a, N), PowerSeries.polynomial(b, N)
    lhs = series_exp(s + t)
    rhs = multiply(series_exp(s), series_exp(t))
    assert np.allclose(lhs.coeffs, rhs.coeffs, atol=1e-9 * (1 + np.abs(lhs.coeffs).max()))


@given(poly_coeffs(3))
def test_sqrt_squares_back(a):
    a = [1.0 + 0.5 * abs(a[0])] + [0.3 * x for x in a[1:]]
    s = PowerSeries.polynomial(a, 16)
    r = series_sqrt(s)
    assert np.allclose(power(r, 2).coeffs, s.coeffs, atol=1e-10)
    assert np.allclose(divide(s, r).coeffs, r.coeffs, atol=1e-10)


def test_sup_norm_of_polynomials():
    assert abs(sup_norm_estimate(Z2Z).value - 2) < 1e-5
    assert abs(sup_norm_estimate(UnitSingular()).value - 1) < 1e-6
    assert sup_norm_estimate(Polynomial((0, 0.5))).certifies_self_map()
    assert not sup_norm_estimate(Polynomial((0, 2))).certifies_self_map()


def test_fractional_linear_and_moebius_series():
    f = FractionalLinear(2, 1, 3, 4)  # (2z + 1)/(3z + 4)
    z = 0.3 - 0.2j
    assert abs(to_series(f, 120)(z) - (1 + 2 * z) / (4 + 3 * z)) < 1e-14
    m = Moebius(0.4j)
    assert abs(to_series(m, 200)(z) - m(z)) < 1e-13
    assert abs(abs(m(np.exp(0.7j))) - 1) < 1e-14


def test_quadratic_branch_solves_z2z():
    psi = Shift(-0.2, Polynomial((0, 0.01)))
    z = np.array([0.0, 0.5, -0.3 + 0.4j])
    for sign in (1, -1):
        w = QuadraticBranch(psi, sign)(z)
        assert np.allclose(w * w + w, psi(z), atol=1e-14)
        # quadratic formula
        want = (-1 + sign * np.sqrt(1 + 4 * psi(z))) / 2
        assert np.allclose(w, want, atol=1e-14)


ALL_SPECS = list(NAMED_SYMBOLS.values()) + [
    Moebius(0.3 - 0.1j),
    FractionalLinear(0.5j, 1, 0.25, 2),
    QuadraticBranch(Polynomial((-0.2, 0.01)), -1),
    Scale(0.5j, UnitSingular()),
    Shift(1 + 1j, Z2Z),
    Compose(Z2Z, Polynomial((0, 0.5))),
    Raw(PowerSeries([1, 2, 3], exact_degree=2)),
]


@pytest.mark.parametrize("spec", ALL_SPECS, ids=lambda s: s.tag)
def test_json_round_trip(spec):
    text = spec.dumps()
    back = spec_from_json(text)
    assert back.dumps() == text
    assert json.loads(text)["tag"] == spec.tag
    z = np.array([0.1, -0.2 + 0.3j])
    assert np.allclose(back(z), spec(z))


@pytest.mark.parametrize("bad", ['{"coeffs": []}', '{"tag": "nope"}', '{"tag": "moebius"}', "{oops", "zz"])
def test_bad_symbols_raise_spec_error(bad):
    with pytest.raises(SpecError):
        parse_symbol(bad)


@given(cplx)
def test_preimages_of_z2z_match_quadratic_formula(w):
    w = 1.5 * w
    roots = np.array([(-1 + s * np.sqrt(1 + 4 * w + 0j)) / 2 for s in (1, -1)])
    want = sorted(roots[np.abs(roots) < 1 - 1e-9], key=abs)
    got = preimages(Z2Z, w)
    got = got[np.abs(got) < 1 - 1e-9]
    assert len(got) == len(want)
    assert np.all(np.diff(np.abs(got)) >= -1e-12)
    for r in want:
        assert np.min(np.abs(got - r)) < 1e-10


def test_newton_preimages_for_unit_singular():
    f = UnitSingular()
    for value in (0.3, -0.5j, 0.01):
        pts = preimages(f, value)
        assert pts.size > 0
        assert np.all(np.abs(f(pts) - value) < 1e-9)
