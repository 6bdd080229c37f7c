from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
import pytest
import scipy.linalg as sla

from heatlab import ineq as I
from heatlab import kernel as K
from heatlab import space as S


def poincare_oracle(space, h, x, r):
    """Brute force: both forms assembled by explicit loops, constants quotiented out."""
    ball = [y for y in range(space.n) if space.dist(x, y) <= r + 1e-12]
    n = len(ball)
    mu = space.mass[ball]
    V = np.array([sum(space.mass[z] for z in range(space.n) if space.dist(y, z) <= h + 1e-12)
                  for y in ball])
    L = np.zeros((n, n))
    for i, y in enumerate(ball):
        for j, z in enumerate(ball):
            if i != j and space.dist(y, z) <= h + 1e-12:
                w = mu[i] * mu[j] / V[i]
                L[i, i] += w
                L[j, j] += w
                L[i, j] -= w
                L[j, i] -= w
    A = np.diag(mu) - np.outer(mu, mu) / mu.sum()
    U = sla.null_space(np.ones((1, n)))
    lam = sla.eigh(U.T @ A @ U, U.T @ L @ U, eigvals_only=True)
    return lam[-1] / r ** 2


@pytest.mark.parametrize("space,x,r,h", [
    (S.lattice(1, 21), 10, 4, 1),
    (S.lattice(2, 11), 60, 3, 1.5),
    (S.euclidean_radial(1, 1.0, 3, 0.1), 15, 1.0, 0.3),
])
def test_poincare_matches_brute_force(space, x, r, h):
    res = I.poincare_constant(space, h, x, r)
    assert not res.degenerate
    assert res.value == pytest.approx(poincare_oracle(space, h, x, r), rel=1e-9)


def test_poincare_path_ball_is_scale_invariant_in_order():
    vals = [I.poincare_constant(S.lattice(1, 201), 1, 100, r).value for r in (5, 10, 20, 40)]
    assert max(vals) / min(vals) < 2.0


def test_poincare_disconnected_ball_is_infinite_with_signed_witness():
    bl = S.broken_line(3.25, 0.05)
    res = I.poincare_constant(bl, 0.4, bl.nearest(0.0), 1.0)
    assert res.value == math.inf and res.degenerate
    w = res.witness[res.ball]
    assert w.min() == -1 and w.max() == 1


def test_poincare_single_point_is_zero():
    res = I.poincare_constant(S.lattice(1, 9), 1, 4, 0.5)
    assert res.value == 0.0


def test_poincare_rejects_bad_arguments():
    with pytest.raises(ValueError):
        I.poincare_constant(S.lattice(1, 9), 1, 4, 2, kappa=0.5)
    with pytest.raises(ValueError):
        I.poincare_constant(S.lattice(1, 9), 1, 1, 3)


def test_trial_family_layout():
    k = K.ball_walk(S.lattice(2, 21), 1)
    ball, _ = k.space.ball(220, 3)
    fam = I.trial_family(k, ball, 220, 3, seed=2, n_random=7)
    assert len(fam.labels) == len(ball) + 3 + 5 + 7
    outside = np.setdiff1d(np.arange(k.n), ball)
    assert np.all(fam.vectors[:, outside] == 0)
    again = I.trial_family(k, ball, 220, 3, seed=2, n_random=7)
    assert np.array_equal(fam.vectors, again.vectors)


def test_average_operator_is_markov_and_fixes_constants():
    k = K.ball_walk(S.lattice(2, 15), 1)
    A = I.average_operator(k, 2.0)
    assert np.allclose(A @ np.ones(k.n), 1.0, atol=1e-14)
    assert A.min() >= 0


def test_pseudo_poincare_finite_on_lattice():
    k = K.ball_walk(S.lattice(2, 41), 1)
    probe = I.pseudo_poincare_check(k, 3.0, center=840, radius=8, n_random=40)
    assert 0 < probe.observed < 10
    assert probe.witness is not None and np.any(probe.witness)
    assert probe.observed == pytest.approx(np.nanmax(probe.ratios))


def test_nash_and_sobolev_bounded_on_lattice():
    k = K.ball_walk(S.lattice(2, 41), 1)
    nash = I.nash_probe(k, 840, 6, delta=3, n_random=40)
    assert 0 < nash.observed < 100
    dk = K.restrict(k, 840, 6)
    sob = I.sobolev_probe(dk, delta=3, n_random=40)
    assert 0 < sob.observed < 100
    with pytest.raises(ValueError):
        I.nash_probe(k, 840, 6, delta=2)
    with pytest.raises(ValueError):
        I.sobolev_probe(dk, delta=1.5)


def test_dirichlet_energy_against_dense():
    rng = np.random.default_rng(4)
    k = K.ball_walk(S.lattice(2, 15), 1)
    dk = K.restrict(k, 112, 3)
    f = rng.standard_normal(dk.size)
    PB = dk.K.toarray() * dk.m[None, :]
    oracle = float(f @ ((np.eye(dk.size) - PB) @ f * dk.m))
    assert I.dirichlet_energy(dk, f) == pytest.approx(oracle, rel=1e-12)


def test_ultracontractivity_profile_decays():
    k = K.lazy(K.ball_walk(S.lattice(1, 101), 1))
    dk = K.restrict(k, 50, 20)
    prof = I.ultracontractivity_profile(dk, 60, delta=1.0, fit_range=(4, 30))
    assert prof.diag_identity_gap < 1e-12
    assert np.all(np.diff(prof.sup[1:]) <= 1e-15)
    assert 0.3 < prof.decay_exponent < 0.7
    assert np.isfinite(prof.C_u) and prof.C_u > 0
    with pytest.raises(ValueError):
        I.ultracontractivity_profile(dk, 1)


def test_spectral_gap_matches_dense_eigenvalues():
    k = K.ball_walk(S.lattice(2, 21), 1)
    dk = K.restrict(k, 220, 4)
    gap = I.spectral_gap(dk)
    PB = dk.K.toarray() * dk.m[None, :]
    ev = np.linalg.eigvals(PB).real
    assert gap.norm == pytest.approx(np.max(np.abs(ev)), abs=1e-12)
    assert gap.gap > 0
    assert gap.a_hat == pytest.approx(16 * gap.gap)


def test_spectral_gap_scales_like_inverse_square_radius():
    k = K.ball_walk(S.lattice(1, 401), 1)
    a = [I.spectral_gap(K.restrict(k, 200, r)).a_hat for r in (10, 20, 40, 80)]
    assert max(a) / min(a) < 1.2


def test_spectral_gap_requires_proper_ball():
    k = K.ball_walk(S.lattice(1, 9, periodic=True), 1)
    dk = K.restrict(k, 0, 100)
    assert not I.is_proper(dk)
    with pytest.raises(ValueError):
        I.spectral_gap(dk)
    assert I.spectral_gap(dk, require_proper=False).gap == pytest.approx(0.0, abs=1e-12)


def test_evolve_preserves_mass():
    k = K.ball_walk(S.lattice(1, 31, periodic=True), 1)
    v0 = np.zeros(k.n)
    v0[3] = 1.0
    traj = I.evolve(k, v0, 20)
    masses = traj @ k.m
    assert np.allclose(masses, masses[0], rtol=1e-14)


def test_caccioppoli_lazy_holds():
    k = K.ball_walk(S.lattice(2, 21), 1)
    rng = np.random.default_rng(0)
    d = k.space.distances_from(220)
    psi = np.maximum(0.0, 1 - d / 6)
    res = I.caccioppoli_check(k, rng.standard_normal(k.n), psi, 15, center=220, r=6)
    assert res.passed and res.walk == "lazy"


def test_caccioppoli_plain_walk_on_two_points_fails():
    k = K.srw(S.bipartite())
    res = I.caccioppoli_check(k, np.array([1.0, 0.0]), np.array([1.0, 1.0]), 4, lazy_walk=False)
    assert not res.passed
    assert res.lhs[0] == pytest.approx(1 / 8)
    assert res.rhs[0] == 0.0


def test_caccioppoli_rejects_bad_psi():
    k = K.srw(S.lattice(1, 9))
    with pytest.raises(ValueError):
        I.caccioppoli_check(k, np.ones(9), -np.ones(9), 2)
    with pytest.raises(ValueError):
        I.caccioppoli_check(k, np.ones(9), np.ones(9), 2, center=4, r=1)


def test_sigma_radial_is_admissible():
    k = K.ball_walk(S.lattice(2, 21), 1)
    sigma = I.sigma_radial(k, 220, 5)
    I.check_sigma(k, sigma)
    assert sigma.min() == pytest.approx(k.hp)
    with pytest.raises(ValueError):
        I.check_sigma(k, 3 * sigma)
    with pytest.raises(ValueError):
        I.check_sigma(k, np.full(k.n, 0.5 * k.hp))


def test_imp_weights_shape_and_range():
    f = I.imp_weights(np.array([1.0, 2.0]), 4.0, 3)
    assert f.shape == (4, 2)
    assert f[0, 0] == pytest.approx(math.exp(-1 / 16))
    assert np.all((f > 0) & (f <= 1))


def test_find_min_D_passes_and_is_monotone():
    k = K.ball_walk(S.lattice(1, 81), 1)
    sigma = I.sigma_radial(k, 40, 10)
    u0 = np.zeros(k.n)
    u0[35:46] = 1.0
    res = I.find_min_D(k, u0, sigma, 20)
    assert res.label == "PASS" and res.monotone and res.condition_ok
    assert res.D >= k.hp ** 2 / 8
    if res.D > k.hp ** 2 / 8:
        assert I.imp_check(k, u0, sigma, res.D / 2, 20).label != "PASS"


@pytest.mark.parametrize("D", [1e-3, 0.1, 1.0, 1e3])
def test_imp_constant_sigma_passes_for_any_D(D):
    k = K.ball_walk(S.lattice(1, 41), 1)
    u0 = np.zeros(k.n)
    u0[20] = 1.0
    res = I.imp_check(k, u0, np.full(k.n, k.hp), D, 10)
    assert res.label == "PASS" and res.condition_ok


@pytest.mark.parametrize("D", [1e-2, 1e-4, 1e-8])
def test_imp_tiny_D_violates_condition(D):
    k = K.ball_walk(S.lattice(1, 41), 1)
    u0 = np.zeros(k.n)
    u0[20] = 1.0
    res = I.imp_check(k, u0, I.sigma_radial(k, 20, 5), D, 10)
    assert res.label == "condition-violated"
    assert not res.condition_ok


def test_imp_rejects_data_outside_ball():
    k = K.ball_walk(S.lattice(1, 41), 1)
    u0 = np.ones(k.n)
    with pytest.raises(ValueError):
        I.imp_check(k, u0, I.sigma_radial(k, 20, 3), 1.0, 3, w=20, R=3)


def test_s_coefficients_small_cases():
    assert I.s_coefficient(2, 1, 0.5) == 1
    # n=4, k=1: sum_i C(4,i) C(i-1,1) beta^(i-2) = 6 + 8 beta + 3 beta^2
    b = Fraction(1, 3)
    assert I.s_coefficient(4, 1, b) == (6 + 8 * b + 3 * b * b) / (1 + b) ** 2


@pytest.mark.parametrize("n", range(1, 9))
def test_poly_identities_exact_in_rationals(n):
    for beta, z in ((Fraction(1, 2), Fraction(-3, 7)), (Fraction(5, 3), Fraction(2, 1))):
        lhs1, t1, lhs2, t2 = I.poly_terms(n, beta, z)
        assert lhs1 == sum(t1)
        assert lhs2 == sum(t2)


def test_poly_sweep_floating_residuals_small():
    checks = I.poly_identity_sweep(12, 20, seed=3)
    assert max(c.residual for c in checks) <= 1e-12
    assert all(c.s_ok for c in checks)


def test_poly_rejects_out_of_range():
    with pytest.raises(OverflowError):
        I.verify_poly_identities(I.MAX_POLY_DEGREE + 1, 0.5, 0.5)
    with pytest.raises(ValueError):
        I.verify_poly_identities(0, 0.5, 0.5)
    with pytest.raises(ValueError):
        I.verify_poly_identities(3, 0.0, 0.5)


def test_one_vertex_ball_on_two_points_has_zero_norm():
    dk = K.restrict(K.srw(S.bipartite()), 0, 0.5)
    assert dk.size == 1
    gap = I.spectral_gap(dk)
    assert gap.norm == 0.0 and gap.gap == 1.0


def test_caccioppoli_zero_data_gives_zero_sides():
    k = K.ball_walk(S.lattice(1, 21), 1)
    res = I.caccioppoli_check(k, np.zeros(21), np.ones(21), 5)
    assert np.all(res.lhs == 0) and np.all(res.rhs == 0) and res.passed


def test_first_identity_collapses_at_z_equal_beta():
    beta = Fraction(3, 4)
    for n in range(1, 10):
        lhs1, t1, _, _ = I.poly_terms(n, beta, beta)
        assert sum(t1) == beta ** n == lhs1
    assert I.verify_poly_identities(1, 0.7, -1.3).residual1 == 0.0
