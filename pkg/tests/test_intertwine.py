import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hardylab.intertwine import (
    EmptyValidBlock,
    NotCommonEigenvalue,
    ZeroFieldError,
    deddens_inner_X,
    eigen_field,
    finite_dim_partner,
    intertwine_residual,
    recover_weighted_comp,
    vandermonde_system_check,
)
from hardylab.operators import (
    NotInnerError,
    OperatorMatrix,
    composition_matrix,
    identity_matrix,
    weighted_composition_matrix,
)
from hardylab.series import (
    Compose,
    Polynomial,
    QuadraticBranch,
    Shift,
    UnitSingular,
    Z,
    Z2Z,
)

GRID = 0.6 * np.exp(2j * np.pi * np.arange(24) / 24) * np.linspace(0.2, 1, 24)


def test_composition_by_half_intertwines_2z_and_z():
    X = composition_matrix(Polynomial((0, 0.5)), 64)
    rep = intertwine_residual(X, Polynomial((0, 2)), Z)
    assert rep.residual == 0.0
    assert rep.exact and rep.valid_block == 64
    assert rep.as_dict()["residual"] == 0.0


def test_identity_does_not_intertwine_distinct_symbols():
    rep = intertwine_residual(identity_matrix(32), Z2Z, Z)
    assert rep.residual == pytest.approx(1.0)


def test_leaky_operator_needs_allow_tail():
    omega = Polynomial((0.2, 0.3))
    X = composition_matrix(omega, 64)
    assert X.leak > 0
    # a non-polynomial phi leaves no leak-free block
    with pytest.raises(EmptyValidBlock):
        intertwine_residual(X, UnitSingular(), UnitSingular())
    rep = intertwine_residual(X, UnitSingular(), Compose(UnitSingular(), omega), allow_tail=True, norms=False)
    assert rep.tail > 0
    assert rep.residual <= rep.tail + 1e-6


def test_uncentred_composition_exact_on_shortened_block():
    omega = Polynomial((0.2, 0.3))
    phi = Polynomial((1, 0, 2))
    X = composition_matrix(omega, 48)
    rep = intertwine_residual(X, phi, Compose(phi, omega))
    assert rep.valid_block == 46
    assert rep.residual < 1e-12 * rep.scale


def test_subspace_restriction():
    X = composition_matrix(Polynomial((0, 0.5)), 32)
    Q = np.eye(32)[:, :4]
    rep = intertwine_residual(X, Polynomial((0, 2)), Z, subspace=Q)
    assert rep.restricted and rep.residual == 0.0


def test_eigen_field_for_composition():
    X = composition_matrix(Polynomial((0, 0.5)), 128)
    rep = eigen_field(X, Polynomial((0, 2)), Z, [0.1, 0.5j, -0.7])
    assert rep.within_tail
    assert rep.max_relative_residual < 1e-12
    assert rep.zero_set == []


def test_eigen_field_refuses_zero_operator():
    X = OperatorMatrix(np.zeros((16, 16)), 16)
    with pytest.raises(ZeroFieldError):
        eigen_field(X, Z, Z, [0.2, 0.3])


def test_recovery_of_weighted_composition():
    omega = Polynomial((0, 0.5, 0.25))
    h = Polynomial((1, 0.5))
    rep = recover_weighted_comp(weighted_composition_matrix(omega, h, 64), GRID)
    assert rep.consistent
    assert np.allclose(rep.omega, omega(GRID), atol=1e-12)
    assert np.allclose(rep.h, h(GRID), atol=1e-12)


def test_recovery_rejects_sum_of_compositions():
    Y = composition_matrix(Polynomial((0, 0.5)), 64) + composition_matrix(Polynomial((0, -0.5)), 64)
    assert not recover_weighted_comp(Y, GRID).consistent


def test_deddens_for_z_squared_is_exact():
    X, basis = deddens_inner_X(Polynomial((0, 0, 1)), 256, 8)
    assert basis.gram_defect == 0.0
    rep = intertwine_residual(X, Polynomial((0, 0, 1)), Z, subspace=basis.span_basis(8), norms=False)
    assert rep.residual == 0.0


def test_deddens_field_estimate_for_unit_singular():
    X, basis = deddens_inner_X(UnitSingular(), 1024, 16)
    rep = eigen_field(X, UnitSingular(), Z, [0.2, 0.5j])
    assert rep.within_tail
    assert 0 < basis.max_tail_energy < 0.1


def test_deddens_argument_checks():
    with pytest.raises(NotInnerError):
        deddens_inner_X(Z2Z, 256, 8)
    with pytest.raises(ValueError):
        deddens_inner_X(Z, 64, 9)


@given(st.integers(2, 8), st.integers(0, 2**31 - 1))
def test_finite_dim_partner_with_planted_eigenvalue(n, seed):
    rng = np.random.default_rng(seed)
    lam = complex(rng.standard_normal(), rng.standard_normal())
    def planted():
        D = np.diag(np.r_[lam, rng.standard_normal(n - 1) + 3])
        P = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + n * np.eye(n)
        return P @ D @ np.linalg.inv(P)
    A, B = planted(), planted()
    res = finite_dim_partner(A, B, lam)
    assert np.linalg.norm(res.Y) > 0.5
    assert res.residual <= 1e-8 * res.scale
    assert np.linalg.norm(A @ res.Y - lam * res.Y) <= 1e-8 * res.scale


def test_finite_dim_partner_rejects_non_common_eigenvalue():
    with pytest.raises(NotCommonEigenvalue):
        finite_dim_partner(np.diag([1, 2]), np.diag([3, 4]), 1)


def test_vandermonde_two_branches():
    psi = Shift(-0.2, Polynomial((0, 0.01)))
    omegas = [QuadraticBranch(psi, 1), QuadraticBranch(psi, -1)]
    ones = [Polynomial((1,))] * 2
    rep = vandermonde_system_check(omegas, ones, Z2Z, psi, GRID)
    assert rep.max_system_residual < 1e-12
    assert rep.max_u < 1e-12
    assert rep.collisions == []


def test_vandermonde_detects_nonzero_u():
    psi = Polynomial((0, 0.5))
    rep = vandermonde_system_check([Polynomial((0, 0.5))], [Polynomial((1,))], Z, Polynomial((0, 0.25)), GRID)
    assert rep.max_u > 0.01
    with pytest.raises(ValueError):
        vandermonde_system_check([Polynomial((0, 2))], [Polynomial((1,))], Z, psi, GRID)


@given(st.lists(st.integers(-3, 3), min_size=2, max_size=4), st.lists(st.integers(-3, 3), min_size=1, max_size=3),
       st.lists(st.integers(-3, 3), min_size=1, max_size=3))
def test_failed_composition_leaves_a_floor(phi_c, psi_c, h_c):
    # column 0 of X T_phi - T_psi X is h (phi o omega - psi), so any of its
    # coefficients inside the block bounds the residual from below (power
    # iteration approaches the norm from below, hence the slack)
    N = 32
    omega = Polynomial((0, 0.5))
    phi, psi, h = Polynomial(tuple(phi_c)), Polynomial(tuple(psi_c)), Polynomial(tuple(h_c))
    if not any(h_c):
        return
    X = weighted_composition_matrix(omega, h, N)
    rep = intertwine_residual(X, phi, psi, norms=False)
    diff = np.convolve(h_c, np.asarray(Compose(phi, omega).series(N).coeffs) - np.pad(psi_c, (0, N - len(psi_c))))[:N]
    nonzero = np.abs(diff[np.abs(diff) > 1e-12])
    if nonzero.size:
        assert rep.residual >= nonzero.min() * (1 - 1e-6)
    else:
        assert rep.residual <= 1e-12 * rep.scale
