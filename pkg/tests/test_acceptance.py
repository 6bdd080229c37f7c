from __future__ import annotations

import math
import time
from fractions import Fraction

import numpy as np
import pytest
import sympy
from _graphs import dense_P, random_graph

from heatlab import harnack as H
from heatlab import ineq as I
from heatlab import kernel as K
from heatlab import net as N
from heatlab import space as S


def test_criterion_01_exact_oracles():
    """Sparse iteration, killed iteration, h-kernel and Green sums agree with dense oracles."""
    t0 = time.perf_counter()
    worst_iter = worst_green = 0.0
    for seed in range(25):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(5, 51))
        k = K.ball_walk(random_graph(rng, n), float(rng.choice([1.0, 2.0])))
        P, Kd = dense_P(k), k.K.toarray()
        L = 0.5 * (np.eye(n) + P)
        x = int(rng.integers(n))
        # a proper ball, so the killed walk loses mass and the Green sum converges
        r = 2 if np.sum(k.space.distances_from(x) <= 2) < n else 1
        dk = K.restrict(k, x, r)
        assert dk.size < n
        B = dk.idx
        KB = Kd[np.ix_(B, B)]
        PB = KB * k.m[B][None, :]
        for steps in (1, 2, 3, 7, 12):
            oracle = np.linalg.matrix_power(P, steps - 1) @ Kd
            worst_iter = max(worst_iter, np.max(np.abs(K.iterate(k, steps, x).values - oracle[x])))
            killed = (np.linalg.matrix_power(PB, steps - 1) @ KB)[dk.local(x)]
            got = K.iterate_dirichlet(dk, steps, x).values[B]
            worst_iter = max(worst_iter, np.max(np.abs(got - killed)))
            h = (np.linalg.matrix_power(L, steps) @ P @ Kd)[x]
            worst_iter = max(worst_iter, np.max(np.abs(K.hk(k, steps, x).values - h)))
        G = np.linalg.solve(np.eye(len(B)) - PB, KB)
        res = K.green(dk, x)
        assert res.converged
        worst_green = max(worst_green, np.max(np.abs(res.values[B] - G[dk.local(x)])))
    elapsed = time.perf_counter() - t0
    print(f"iterate max error {worst_iter:.2e}, green max error {worst_green:.2e}, {elapsed:.1f}s")
    assert worst_iter <= 1e-12
    assert worst_green <= 1e-10
    assert elapsed < 30


@pytest.mark.parametrize("make", [
    lambda: K.ball_walk(S.lattice(2, 15), 1),
    lambda: K.lazy(K.ball_walk(S.lattice(1, 41), 2)),
], ids=["square", "lazy-path"])
def test_criterion_02_lemma_suite(make):
    """Kernel lemma suite: zero violations over 10 000 seeded checks."""
    k = make()
    assert K.audit_compat(k, k.h, k.hp).passed
    rep = K.lemma_suite(k, 10000, seed=7)
    assert rep.total_checks == 10000
    assert rep.checks["positivity"] > 0
    assert rep.total_violations == 0, rep.violations


def test_criterion_03_bipartite_forms():
    """Two-point graph: E(f, f) = 4 and E*(f, f) = 0 for f = (1, -1)."""
    k = K.srw(S.bipartite())
    assert np.array_equal(k.m, [1.0, 1.0])
    assert K.dirichlet_forms(k, np.array([1.0, -1.0])) == (4.0, 0.0)


def test_criterion_04_broken_line_poincare():
    """Broken line: Poincare constant infinite below the gap, finite above it."""
    t0 = time.perf_counter()
    bl = S.broken_line(5.25, 0.05)
    assert len(set(S.component_of(bl))) >= 11
    x = bl.nearest(0.0)
    values = {h: I.poincare_constant(bl, h, x, 5.0) for h in (0.3, 0.4, 0.5, 0.6, 0.75, 1.0)}
    for h in (0.3, 0.4, 0.5):
        assert values[h].value == math.inf and values[h].degenerate
    for h in (0.6, 0.75, 1.0):
        assert math.isfinite(values[h].value) and not values[h].degenerate
    print({h: v.value for h, v in values.items()})
    assert time.perf_counter() - t0 < 60


def test_criterion_05_radial_recurrence():
    """Weighted line: transient at alpha = 0.8, recurrent at alpha = 0 and -0.8."""
    t0 = time.perf_counter()
    for alpha, verdict in ((0.8, "transient"), (0.0, "recurrent"), (-0.8, "recurrent")):
        rs = S.euclidean_radial(1, alpha, 3, 0.3)
        rep = H.classify_recurrence(K.ball_walk(rs, 1.0), rs.nearest(0.0), 1000)
        assert rep.analytic
        assert rep.verdict == verdict, (alpha, rep.beta_hat)
    assert time.perf_counter() - t0 < 10


def _sympy_identities(n):
    z, b = sympy.symbols("z beta")
    rhs1 = sum(sympy.binomial(n, k) * b ** (n - k) * (z - b) ** (k - 1) * z for k in range(1, n + 1, 2))
    rhs1 += sum(sympy.binomial(n - 1, k) * b ** (n - 1 - k) * (z - b) ** (k - 1) * (z ** 2 - 2 * b * z)
                for k in range(1, n, 2))

    def s(k):
        tot = sum(sympy.binomial(n, i) * sympy.binomial(i - 1, k) * b ** (i - 1 - k) for i in range(k + 1, n + 1))
        return tot / (1 + b) ** (n - 1 - k)

    half = sympy.Rational(1, 2)
    rhs2 = half ** n
    rhs2 += sum(sympy.binomial(n, k) * ((1 + b) / 2) ** (n - k) * half ** k * (z - b) ** (k - 1) * z
                for k in range(1, n + 1, 2))
    rhs2 += sum(s(k) * ((1 + b) / 2) ** (n - 1 - k) * half ** (k + 1) * (z - b) ** (k - 1)
                * (z ** 2 - 2 * b * z) for k in range(1, n, 2))
    return sympy.cancel(z ** n - rhs1), sympy.cancel(((1 + z) / 2) ** n - rhs2)


def test_criterion_06_polynomial_identities():
    """Polynomial identities: float residual at most 1e-8 for n <= 20, exact for n <= 8."""
    checks = I.poly_identity_sweep(20, 500, seed=11)
    assert len(checks) == 20 * 500
    assert max(c.residual for c in checks) <= 1e-8
    assert all(c.s_ok for c in checks)
    rng = np.random.default_rng(12)
    for n in range(1, 9):
        for _ in range(5):
            beta = Fraction(int(rng.integers(1, 40)), int(rng.integers(1, 20)))
            z = Fraction(int(rng.integers(-40, 41)), int(rng.integers(1, 20)))
            lhs1, t1, lhs2, t2 = I.poly_terms(n, beta, z)
            assert lhs1 == sum(t1) and lhs2 == sum(t2)
        d1, d2 = _sympy_identities(n)
        assert d1 == 0 and d2 == 0


def _dense_reconstruction(k, x, r, bal, u):
    dk = K.restrict(k, x, r, check_window=False)
    B = dk.idx
    PB = dk.K.toarray() * dk.m[None, :]
    worst = 0.0
    Z = u[bal.a, B].copy()
    charges = np.zeros((bal.b + 2, len(B)))
    for i in range(bal.a, bal.b + 1):
        charges[i] = bal.v[i, B]
    for i in range(bal.a, bal.b + 2):
        # Z_i = P_B^(i-a) u_a + sum_{l<i} P_B^(i-l) v_l
        Zi = np.linalg.matrix_power(PB, i - bal.a) @ Z
        for j in range(bal.a, i):
            Zi = Zi + np.linalg.matrix_power(PB, i - j) @ charges[j]
        inner = np.abs(k.space.distances_from(x)[B]) <= 10
        worst = max(worst, float(np.max(np.abs(Zi[inner] - u[i, B][inner]))))
    return worst


def test_criterion_07_balayage():
    """Balayage: reconstruction residual at most 1e-10 and v >= -1e-14 over 20 trials."""
    k = K.ball_walk(S.lattice(1, 201), 1)
    x, r, r1, b = 100, 30, 10, 80
    ball, _ = k.space.ball(x, r)
    rng = np.random.default_rng(70)
    worst_res, worst_v = 0.0, math.inf
    for t in range(20):
        u0 = np.zeros(k.n)
        if t == 0:
            u0[x] = 1.0
        else:
            pts = rng.choice(ball, size=int(rng.integers(1, 8)), replace=False)
            u0[pts] = rng.uniform(0.1, 1.0, size=len(pts))
        u = H.evolve_caloric(k, u0, b + 1)
        bal = H.balayage(k, x, r, r1, u, 0, b)
        worst_res = max(worst_res, bal.residual)
        worst_v = min(worst_v, bal.min_v)
        if t < 3:
            scale = float(np.max(np.abs(u)))
            assert _dense_reconstruction(k, x, r, bal, u) <= 1e-10 * scale
    print(f"residual {worst_res:.2e}, min v {worst_v:.2e}")
    assert worst_res <= 1e-10
    assert worst_v >= -1e-14


def _caccioppoli_dense(k, u, psi):
    """Both sides from dense matrices, independent of the sparse evaluation."""
    W = k.K.toarray() * np.outer(k.m, k.m)
    steps = u.shape[0] - 1
    res = np.empty(steps)
    for i in range(steps):
        w = u[i] * psi
        energy = 0.5 * np.sum(W * (w[:, None] - w[None, :]) ** 2)
        lhs = np.sum((u[i + 1] ** 2 - u[i] ** 2) * psi ** 2 * k.m) + energy / 8
        rhs = 17 / 8 * np.sum(W * (psi[:, None] - psi[None, :]) ** 2 * (u[i] ** 2)[:, None])
        res[i] = rhs - lhs
    return res


def test_criterion_08_caccioppoli_and_imp():
    """Caccioppoli and integral maximum principle hold for lazy evolutions; plain K2 violates."""
    k = K.ball_walk(S.lattice(2, 31), 1)
    x, r = 15 * 31 + 15, 6.0
    d = k.space.distances_from(x)
    psi = np.maximum(0.0, 1.0 - d / r)
    rng = np.random.default_rng(80)
    for t in range(20):
        v0 = np.where(d <= 2 * r, rng.standard_normal(k.n), 0.0)
        res = I.caccioppoli_check(k, v0, psi, 50, center=x, r=r)
        assert res.passed, (t, res.residual.min())
        if t < 2:
            u = np.abs(I.evolve(k, v0, 50))
            dense = _caccioppoli_dense(k, u, psi)
            assert np.all(dense >= -1e-10 * max(1.0, np.abs(res.rhs).max()))
            assert np.allclose(dense, res.residual, rtol=1e-9, atol=1e-10)
    sigma = I.sigma_radial(k, x, 8)
    u0 = np.zeros(k.n)
    u0[x] = 1.0
    imp = I.find_min_D(k, u0, sigma, 30)
    assert imp.label == "PASS" and imp.monotone
    assert np.all(np.diff(imp.J) <= 1e-12 * imp.J[0])
    print(f"IMP passes at D = {imp.D}")
    plain = I.caccioppoli_check(K.srw(S.bipartite()), np.array([1.0, 0.0]), np.array([1.0, 1.0]), 6,
                                lazy_walk=False)
    assert not plain.passed
    assert np.sum(plain.residual < -1e-10) >= 1


def test_criterion_09_gaussian_bounds():
    """Lazy ball walk on a 101 x 101 window: on-diagonal ratio in [0.05, 20], spread <= 2."""
    t0 = time.perf_counter()
    k = K.lazy(K.ball_walk(S.lattice(2, 101, metric="euclidean"), 1))
    x = 50 * 101 + 50
    fit = H.gaussian_fit(k, (64, 256), [x], A=4.0)
    print(f"rho range {fit.rho_range}, spread {fit.spread:.3f}, samples {len(fit.samples)}")
    assert len(fit.rho) > 0 and len(fit.samples) > 100
    assert np.all((fit.rho[:, 2] >= 0.05) & (fit.rho[:, 2] <= 20))
    assert fit.verdict == "PASS"
    assert fit.spread <= 2.0
    # admitted samples are unaffected by the window edge
    big = K.lazy(K.ball_walk(S.lattice(2, 161, metric="euclidean"), 1))
    xb = 80 * 161 + 80
    rows = H.heat_rows(big, xb, np.unique(fit.samples[:, 0]).astype(int))
    c, cb = k.space.coords, big.space.coords
    shift = cb[xb] - c[x]
    lookup = {tuple(p): i for i, p in enumerate(cb)}
    for n, _, y, _, p, *_ in fit.samples:
        q = rows[int(n)][lookup[tuple(c[int(y)] + shift)]]
        assert abs(p - q) <= 1e-12 * p
    assert time.perf_counter() - t0 < 300


def test_criterion_10_harnack_batteries():
    """Harnack constants finite and stable under doubling; plain path walk gives a parabolic failure."""
    k = K.lazy(K.ball_walk(S.lattice(2, 101), 1))
    x = 50 * 101 + 50
    ce = {r: H.elliptic_harnack(k, x, r, c=0.25, trials=50, seed=1).C_hat for r in (16, 32)}
    ch = {r: H.parabolic_harnack(k, x, r, eta=0.25, trials=50, seed=1).C_hat for r in (16, 32)}
    print(f"C_E {ce}, C_H {ch}")
    assert H.doubling_stable(ce[16], ce[32])
    assert H.doubling_stable(ch[16], ch[32])
    plain = H.parabolic_harnack(K.srw(S.lattice(1, 201)), 100, 16, trials=5)
    assert plain.failed and plain.witness is not None
    w = plain.witness
    rows = H.evolve_caloric(K.srw(S.lattice(1, 201)), np.eye(201)[100], w["step"])
    assert rows[w["step"], w["point"]] == 0.0


def test_criterion_11_tree_negative_controls():
    """Regular tree fails volume doubling and the on-diagonal sandwich."""
    tree = S.regular_tree(3, 10)
    prof = S.doubling_profile(tree, [0], [1, 2, 3, 4, 5])
    assert prof.verdict == "FAIL" and S.vd_infinity_verdict(prof) == "FAIL"
    lev = K.tree_level_walk(3, 300)
    steps = [4, 16, 36, 64, 100, 144, 196]
    rho = H.on_diagonal_profile(lev, [0], steps)[0]
    print(f"doubling ratios {prof.ratios}, rho {rho}")
    assert rho[0] / rho[-1] >= 10
    assert np.all(np.diff(rho) < 0)
    fit = H.gaussian_fit(lev, (4, 196), [0])
    assert fit.verdict == "FAIL"
    # the lumped walk reproduces the explicit tree where both are exact
    explicit = K.srw(S.regular_tree(3, 12))
    small = [4, 9]
    assert np.allclose(H.on_diagonal_profile(explicit, [0], small),
                       H.on_diagonal_profile(lev, [0], small), rtol=1e-12, atol=0)


def test_criterion_12_net_certification():
    """Nets pass every structural check; on a 500-vertex net d <= 3 eps d_G on all pairs."""
    spaces = [(S.lattice(2, 30), 2.0), (S.lattice(2, 25, metric="euclidean"), 1.5),
              (S.broken_line(5.25, 0.05), 0.6), (S.regular_tree(3, 6), 1.0),
              (S.euclidean_radial(1, 1.0, 5, 0.05), 0.5)]
    for sp_, eps in spaces:
        nt = N.build_net(sp_, eps)
        assert N.audit_net(nt).structural_ok, sp_.kind
        theta = N.partition_of_unity(nt)
        assert np.allclose(np.asarray(theta.sum(axis=1)).ravel(), 1.0, rtol=0, atol=1e-15)
    big = N.build_net(S.lattice(2, 54), 2.0)
    assert big.size == 500
    a = N.audit_net(big, probe_pairs=500 * 499 // 2)
    assert a.pairs == 500 * 499 // 2
    assert a.structural_ok
    assert a.lower_constant >= 1.0
