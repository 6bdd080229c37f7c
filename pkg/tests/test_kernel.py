from __future__ import annotations

import math

import numpy as np
import pytest
from _graphs import dense_P, random_graph

from heatlab import kernel as K
from heatlab import space as S


def k2_srw():
    return K.srw(S.bipartite())


def test_ball_walk_on_path_is_uniform():
    k = K.ball_walk(S.lattice(1, 11), 1)
    assert k.K[5, 4] == pytest.approx(1 / 9, abs=1e-15)
    assert k.K[5, 5] == pytest.approx(1 / 9, abs=1e-15)
    assert k.m[5] == 3
    assert k.row_sums()[5] == pytest.approx(1.0, abs=1e-15)


def test_stochastic_and_supported_within_hp():
    for k in (K.ball_walk(S.lattice(2, 9), 1.5), K.ball_walk(S.broken_line(3.25, 0.05), 0.4),
              K.annulus_walk(S.lattice(1, 31), 1, 1, 2), k2_srw()):
        assert np.allclose(k.row_sums()[~k.boundary], 1.0, atol=1e-12)
        coo = k.K.tocoo()
        d = k.space.dist_pairs(coo.row, coo.col)
        assert np.all(d <= k.hp + 1e-9)
        assert (k.K != k.K.T).nnz == 0


def test_broken_line_walk_never_crosses_gaps():
    bl = S.broken_line(3.25, 0.05)
    k = K.ball_walk(bl, 0.4)
    comp = S.component_of(bl)
    coo = k.K.tocoo()
    assert np.all(comp[coo.row] == comp[coo.col])
    x = bl.nearest(0.0)
    row = K.iterate(k, 40, x).values
    assert np.all(row[comp != 0] == 0)


def test_radial_measure_comparable_to_doubled_exponent():
    h, alpha, rho = 0.1, 1.5, 0.01
    rs = S.euclidean_radial(1, alpha, 20, rho)
    k = K.ball_walk(rs, h)
    x = rs.coords[:, 0]
    far = (np.abs(x) >= 5) & (rs.margin >= h)
    ratio = k.m[far] / (2 * h * (1 + x[far] ** 2) ** alpha * rho)
    assert np.all(np.abs(ratio - 1) < 0.1)


def test_lazy_properties():
    k = K.ball_walk(S.lattice(1, 15), 1)
    kl = K.lazy(K.lazy(k))
    assert np.all(kl.K.diagonal() >= 0.75 / kl.m - 1e-15)
    assert np.allclose(K.lazy(k).row_sums(), k.row_sums(), atol=1e-15)


def test_k2_spectra_plain_and_lazy():
    k = k2_srw()
    assert np.array_equal(k.dense(), [[0, 1], [1, 0]])
    assert np.array_equal(k.m, [1, 1])
    assert np.allclose(np.linalg.eigvalsh(dense_P(k)), [-1, 1])
    assert np.allclose(np.linalg.eigvalsh(dense_P(K.lazy(k))), [0, 1])


def test_k2_parity_of_returns():
    k = k2_srw()
    for n in range(1, 9):
        assert K.iterate(k, n, 0).values[0] == (1.0 if n % 2 == 0 else 0.0)
    kl = K.lazy(k)
    vals = [K.iterate(kl, n, 0).values[0] for n in range(1, 9)]
    assert all(v == pytest.approx(0.5) for v in vals)


def test_annulus_walk_returns_only_after_two_steps():
    k = K.annulus_walk(S.lattice(1, 41), 1, 1, 2)
    x = 20
    assert K.iterate(k, 1, x).values[x] == 0
    assert K.iterate(k, 2, x).values[x] > 0
    audit = K.audit_compat(k, 1, 2)
    assert audit.c1_hat == 0
    assert not audit.passed


def test_annulus_square_is_weakly_compatible():
    # two jumps of length in (1, 2] reach every offset below 1
    grid = S.euclidean_radial(1, 0.0, 12, 0.1)
    k2 = K.kernel_power(K.annulus_walk(grid, 1, 1, 2), 2)
    audit = K.audit_compat(k2, 0.5, 4)
    assert audit.c1_hat > 0 and audit.support_ok


def test_iterate_first_step_is_stored_row():
    k = K.ball_walk(S.lattice(2, 7), 1)
    assert np.array_equal(K.iterate(k, 1, 10).values, k.row(10))


def test_iterate_matches_dense_power():
    rng = np.random.default_rng(3)
    sp_ = random_graph(rng, 30)
    k = K.ball_walk(sp_, 1)
    P = dense_P(k)
    for n in (1, 2, 5, 11):
        oracle = np.linalg.matrix_power(P, n - 1) @ k.K.toarray()
        for x in (0, 7, 29):
            assert np.allclose(K.iterate(k, n, x).values, oracle[x], rtol=0, atol=1e-12)


def test_restrict_to_whole_graph_is_unchanged():
    k = K.ball_walk(S.lattice(2, 6, periodic=True), 1)
    dk = K.restrict(k, 0, 100)
    assert dk.size == k.n
    for n in (1, 3, 6):
        assert np.allclose(K.iterate_dirichlet(dk, n, 4).values, K.iterate(k, n, 4).values, atol=1e-15)


def test_killing_lowers_returns_at_the_edge_of_the_ball():
    k = K.srw(S.lattice(1, 11))
    dk = K.restrict(k, 5, 2)
    assert list(dk.idx) == [3, 4, 5, 6, 7]
    assert K.iterate_dirichlet(dk, 2, 3).values[3] < K.iterate(k, 2, 3).values[3]
    # from the centre no two-step loop leaves the ball
    assert K.iterate_dirichlet(dk, 2, 5).values[5] == K.iterate(k, 2, 5).values[5]


def test_dirichlet_mass_is_non_increasing():
    k = K.ball_walk(S.lattice(2, 21), 1)
    dk = K.restrict(k, 220, 5)
    masses = [float(K.iterate_dirichlet(dk, n, 220).values @ k.m) for n in range(1, 30)]
    assert all(b <= a + 1e-15 for a, b in zip(masses, masses[1:]))


def test_hk_binomial_form():
    rng = np.random.default_rng(5)
    k = K.ball_walk(random_graph(rng, 20), 1)
    x = 3
    assert np.allclose(K.hk(k, 0, x).values, K.iterate(k, 2, x).values, atol=1e-15)
    for n in (1, 4, 9):
        oracle = sum(math.comb(n, j) * 0.5 ** n * K.iterate(k, j + 2, x).values for j in range(n + 1))
        assert np.allclose(K.hk(k, n, x).values, oracle, rtol=0, atol=1e-10)


def test_hk_dominates_shifted_heat_kernel():
    k = K.ball_walk(S.lattice(1, 25), 1)
    worst = math.inf
    for n in range(1, 31):
        for x in (0, 12):
            h = K.hk(k, 2 * n, x).values
            p = K.iterate(k, n + 1, x).values
            pos = p > 0
            worst = min(worst, float(np.min(h[pos] / p[pos])))
    assert worst > 0.05


def test_dirichlet_green_matches_linear_solve():
    k = K.srw(S.lattice(1, 11))
    dk = K.restrict(k, 5, 1)
    res = K.green(dk, 5)
    assert res.converged and res.tail_bound is not None
    A = dk.K.toarray() * dk.m[None, :]
    G = np.linalg.inv(np.eye(dk.size) - A) - np.eye(dk.size)
    oracle = G[dk.local(5)] / dk.m
    assert np.allclose(res.values[dk.idx], oracle, rtol=0, atol=1e-9)


def test_green_sum_does_not_settle_on_recurrent_path():
    k = K.srw(S.lattice(1, 401))
    with pytest.raises(K.NoConvergence):
        K.green(k, 200, kmax=2000)
    partial = K.green(k, 200, kmax=2000, strict=False)
    assert not partial.converged


def test_compat_audit_on_path():
    k = K.ball_walk(S.lattice(1, 41), 1)
    a = K.audit_compat(k, 1, 1)
    assert a.c1_hat == pytest.approx(1.0) and a.C1_hat == pytest.approx(1.0)
    assert a.alpha_hat > 0 and a.passed
    lazy_a = K.audit_compat(K.lazy(k), 1, 1)
    assert lazy_a.alpha_hat >= 0.5 * a.alpha_hat


def test_forms_constant_and_bipartite():
    k = K.ball_walk(S.lattice(1, 11, periodic=True), 1)
    assert K.dirichlet_forms(k, np.ones(k.n)) == pytest.approx((0.0, 0.0), abs=1e-14)
    E, Es = K.dirichlet_forms(k2_srw(), np.array([1.0, -1.0]))
    assert (E, Es) == (4.0, 0.0)


def test_form_identities_against_dense():
    rng = np.random.default_rng(9)
    k = K.ball_walk(random_graph(rng, 30), 1)
    P = dense_P(k)
    f = rng.standard_normal(k.n)
    E, Es = K.dirichlet_forms(k, f, check_support=False)
    Pf = P @ f
    assert Es == pytest.approx(np.sum(f * f * k.m) - np.sum(Pf * Pf * k.m), abs=1e-11)
    W = k.K.toarray() * np.outer(k.m, k.m)
    assert E == pytest.approx(0.5 * np.sum(W * (f[:, None] - f[None, :]) ** 2), abs=1e-11)
    g = rng.standard_normal(k.n)
    assert K.integration_by_parts_check(k, f, g) < 1e-11
    grad = np.sqrt(np.sum(P * (f[None, :] - f[:, None]) ** 2, axis=1))
    assert np.allclose(K.grad_P(k, f), grad, atol=1e-12)


def test_lemma_suite_clean_on_compatible_kernel():
    rep = K.lemma_suite(K.ball_walk(S.lattice(2, 9), 1), 800, seed=1)
    assert rep.total_violations == 0
    assert rep.total_checks == 800


def test_dump_and_load_round_trip():
    k = K.ball_walk(S.lattice(1, 6), 1)
    back = K.load_kernel(K.dump_kernel(k), h=1, hp=1)
    assert np.array_equal(back.K.toarray(), k.K.toarray())
    assert np.array_equal(back.m, k.m)
    assert back.space.dist(0, 5) == 5


def test_load_kernel_rejects_garbage():
    with pytest.raises(S.GraphParseError, match="line 2"):
        K.load_kernel("kernel 1 1\nq 0 0 1\n")


def test_tree_level_walk_matches_explicit_tree():
    tree = K.srw(S.regular_tree(3, 9))
    lev = K.tree_level_walk(3, 9)
    for n in (2, 6, 10, 17, 30):
        assert K.iterate(lev, n, 0).values[0] == pytest.approx(K.iterate(tree, n, 0).values[0],
                                                               rel=1e-12, abs=1e-300)
    for r in (1, 2, 5):
        assert lev.volume_m(0, r) == pytest.approx(tree.volume_m(0, r), rel=1e-14)
