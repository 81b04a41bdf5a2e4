import cmath

import numpy as np
import pytest
from scipy.special import binom

from hardylab.intertwine import intertwine_residual
from hardylab.operators import composition_matrix
from hardylab.series import Polynomial, Scale, Shift, UnitSingular, Z, Z2Z
from hardylab.spectra import (
    BRANCH_CUT_HIT,
    CRITICAL_POINT,
    NOT_SELF_MAP,
    ee_membership,
    ee_power_check,
    ee_predicate_z2z,
    eigenvector_for_value,
    point_spectrum_hits,
    ray_meets_image,
    subordination_solve,
)

TEST_SET = [1, 1.01, 0.99, 2, 10, 1j, -1, cmath.exp(1j * cmath.pi / 4)]


def test_branch_for_quarter_matches_binomial_series():
    # omega = (-1 + sqrt(1 + z)) / 2 solves omega^2 + omega = z / 4
    res = subordination_solve(Z2Z, Polynomial((0, 0.25)), N=64)
    assert res.ok and res.method == "explicit-branch"
    want = np.array([binom(0.5, n) / 2 for n in range(1, 20)])
    assert np.allclose(res.omega.coeffs[1:20], want, atol=1e-13)
    assert res.composition_residual < 1e-12


def test_reversion_method_on_polynomial():
    phi = Polynomial((0, 1, 0.3))
    psi = Polynomial((0, 0.4, 0.048))  # phi(0.4 z)
    res = subordination_solve(phi, psi, N=64)
    assert res.ok and res.method == "reversion"
    assert np.allclose(res.omega.coeffs[:3], [0, 0.4, 0], atol=1e-12)


def test_log_lift_pointwise():
    f = UnitSingular()
    res = subordination_solve(f, Scale(0.5, f), N=128)
    assert res.ok and res.method == "log-lift"
    z = 0.9 * np.exp(2j * np.pi * np.arange(64) / 64) * np.linspace(0.1, 1, 64)
    assert np.abs(f(res.omega_spec(z)) - 0.5 * f(z)).max() < 1e-12
    bad = subordination_solve(f, Scale(2.0, f))
    assert bad.failure == NOT_SELF_MAP


def test_critical_point_and_branch_cut_failures():
    res = subordination_solve(Z2Z, Polynomial((0, 0.5)))
    assert res.failure == CRITICAL_POINT
    # image is the disc |w + 0.3| < 0.04: misses -1/4 but lies on the cut
    psi = Shift(-0.3, Polynomial((0, 0.04)))
    res = subordination_solve(Z2Z, psi)
    assert res.failure == BRANCH_CUT_HIT
    assert ray_meets_image(psi, -0.25)
    assert not ray_meets_image(Polynomial((0, 0.2)), -0.25)


@pytest.mark.parametrize("phi, members", [
    (Z, lambda lam: abs(lam) >= 1),
    (Polynomial((1, 1)), lambda lam: lam.imag == 0 and lam.real >= 1),
    (Polynomial((2, 1)), lambda lam: lam == 1),
], ids=["z", "z+1", "z+2"])
def test_extended_eigenvalue_catalogs(phi, members):
    for lam in TEST_SET:
        v = ee_membership(phi, lam)
        if v.status == "undetermined":
            continue
        assert (v.status == "in") == members(complex(lam)), lam


@pytest.mark.parametrize("c", [0, 1, 2])
def test_catalogs_on_rational_points_resolve(c):
    phi = Polynomial((c, 1))
    truth = {0: lambda l: abs(l) >= 1, 1: lambda l: l.imag == 0 and l.real >= 1, 2: lambda l: l == 1}[c]
    for lam in (1, 2, 1j, -1, 1 + 1e-3):
        v = ee_membership(phi, lam)
        assert v.status == ("in" if truth(complex(lam)) else "out"), lam


def test_shift_catalog_resolves_near_unit_circle():
    assert ee_membership(Z, 1.01).status == "in"
    assert ee_membership(Z, 0.99).status == "out"


def test_ee_membership_rejects_zero():
    with pytest.raises(ValueError):
        ee_membership(Z, 0)


def test_z2z_predicate_anchors():
    assert ee_predicate_z2z(1)
    assert not ee_predicate_z2z(-1)
    assert ee_predicate_z2z(10)
    assert not ee_predicate_z2z(2)  # -1/2 lies inside the cardioid
    assert ee_membership(Z2Z, 10).status == "in"
    assert ee_membership(Z2Z, -1).status == "out"


def test_power_check_for_shift():
    chk = ee_power_check(Z, 2.0, 2)
    assert chk.certified
    assert chk.lam_power == 4


def test_eigenvectors_from_preimages():
    ev = eigenvector_for_value(Z2Z, 0.0)
    assert ev.verified and abs(ev.a) < 1e-12
    assert not eigenvector_for_value(Polynomial((2, 1)), 0.0).found
    assert point_spectrum_hits(Z2Z, Polynomial((0, 0.25)), [0.1, 0.5j]) == 1.0


@pytest.mark.parametrize("phi, lam", [(Z, 2.0), (Z, -3j), (Z2Z, 10.0), (Z2Z, 8 + 6j)])
def test_successful_lift_intertwines(phi, lam):
    psi = Scale(1 / lam, phi)
    res = subordination_solve(phi, psi, N=128)
    assert res.ok
    rep = intertwine_residual(composition_matrix(res.omega, 128), phi, psi, norms=False)
    assert rep.valid_block > 0
    assert rep.residual <= 1e-8
