"""Functional-inequality probes: Poincare, pseudo-Poincare, Nash, Sobolev,
ultracontractivity, spectral gap on balls, Caccioppoli, the integral maximum
principle and the polynomial identities used to compare lazy and plain walks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, lobpcg

from .kernel import DirichletKernel, Kernel, energy_pairs, inner, lazy, restrict
from .space import Space, slack

DENSE_LIMIT = 2000


# ------------------------------------------------------------ Poincare


@dataclass
class PoincareResult:
    center: int
    r: float
    h: float
    kappa: float
    value: float
    witness: np.ndarray
    degenerate: bool
    components: int
    ball: np.ndarray
    region: np.ndarray


def poincare_constant(space: Space, h: float, x: int, r: float, kappa: float = 1.0) -> PoincareResult:
    """Best constant of the scale-``h`` Poincare inequality on ``B(x, r)``.

    The sup of ``sum_B |f - f_B|^2 mu / (r^2 sum_{kB} |grad f|_h^2 mu)`` is the top
    generalized eigenvalue of the centred variance form against the gradient
    form.  The gradient at a point of ``kB`` only sees neighbours inside ``kB``.
    When at least two ``h``-components of ``kB`` meet ``B`` the value is
    ``inf`` and the witness is a signed component indicator.
    """
    if kappa < 1:
        raise ValueError("kappa must be >= 1")
    if space.margin[x] < kappa * r - slack(r):
        raise ValueError("enlarged ball leaves the window")
    ball, _ = space.ball(x, r)
    region, _ = space.ball(x, kappa * r)
    if ball.size == 0:
        raise ValueError("empty ball")
    mu = space.mass[region]
    Vh = space.ball_volumes(h)[region]
    W = space.pairs_within(h)[region][:, region].tocoo()
    off = W.row != W.col
    rows, cols = W.row[off], W.col[off]
    w = mu[rows] * mu[cols] / Vh[rows]
    S = sp.csr_matrix((w, (rows, cols)), shape=(len(region), len(region)))
    S = S + S.T
    in_ball = np.isin(region, ball)
    ncomp, label = connected_components(S, directed=False)
    meeting = np.unique(label[in_ball])
    if len(meeting) >= 2:
        sign = np.zeros(len(region))
        for i, c in enumerate(np.unique(label)):
            sign[label == c] = 1.0 if i % 2 == 0 else -1.0
        witness = np.zeros(space.n)
        witness[region] = sign
        return PoincareResult(x, r, h, kappa, math.inf, witness, True, ncomp, ball, region)
    comp = label == meeting[0]
    loc = np.flatnonzero(comp)
    Sc = S[loc][:, loc]
    L = sp.diags(np.asarray(Sc.sum(axis=1)).ravel()) - Sc
    muc = mu[loc]
    b = in_ball[loc].astype(float) * muc
    VB = b.sum()
    witness = np.zeros(space.n)
    if len(loc) == 1 or VB == 0:
        return PoincareResult(x, r, h, kappa, 0.0, witness, False, ncomp, ball, region)
    scale = max(float(L.diagonal().max()), 1e-300) / max(float(muc @ muc), 1e-300)
    if len(loc) <= DENSE_LIMIT:
        A = np.diag(b) - np.outer(b, b) / VB
        G = L.toarray() + scale * np.outer(muc, muc)
        vals, vecs = sla.eigh(A, G, subset_by_index=[len(loc) - 1, len(loc) - 1])
        lam, v = float(vals[0]), vecs[:, 0]
    else:
        Aop = LinearOperator((len(loc), len(loc)), dtype=float,
                             matvec=lambda f: b * f - b * (b @ f) / VB)
        Gop = LinearOperator((len(loc), len(loc)), dtype=float,
                             matvec=lambda f: L @ f + scale * muc * (muc @ f))
        rng = np.random.default_rng(0)
        X = rng.standard_normal((len(loc), 1))
        vals, vecs = lobpcg(Aop, X, B=Gop, largest=True, tol=1e-9, maxiter=10000)
        lam, v = float(vals[0]), vecs[:, 0]
    witness[region[loc]] = v
    return PoincareResult(x, r, h, kappa, max(lam, 0.0) / r ** 2, witness, False, ncomp, ball, region)


# ----------------------------------------------------------- trial family


@dataclass
class TrialFamily:
    labels: list
    vectors: np.ndarray  # rows are full-length trial functions


def trial_family(k: Kernel, support: np.ndarray, center: int, r: float, seed: int = 0,
                 n_random: int = 200, n_points: int = 64, n_eig: int = 5) -> TrialFamily:
    """Point indicators, tents at three widths, top eigenfunctions of ``P`` killed
    outside ``support``, and seeded Gaussian vectors, all supported in ``support``."""
    support = np.asarray(sorted(support), dtype=np.int64)
    n = k.n
    labels, vecs = [], []
    pts = support if len(support) <= n_points else support[
        np.unique(np.linspace(0, len(support) - 1, n_points).round().astype(int))]
    if center in support and center not in pts:
        pts = np.append(pts, center)
    for p in pts:
        f = np.zeros(n)
        f[p] = 1.0
        labels.append(f"point:{int(p)}")
        vecs.append(f)
    d = k.space.distances_from(center)
    for frac in (0.25, 0.5, 1.0):
        width = max(frac * r, 1e-12)
        f = np.zeros(n)
        f[support] = np.maximum(0.0, 1.0 - d[support] / width)
        if np.any(f):
            labels.append(f"tent:{frac}")
            vecs.append(f)
    KB = k.K[support][:, support]
    s = np.sqrt(k.m[support])
    S = sp.diags(s) @ KB @ sp.diags(s)
    ne = min(n_eig, len(support))
    if len(support) <= DENSE_LIMIT:
        w, V = np.linalg.eigh(S.toarray())
        V = V[:, ::-1][:, :ne]
    else:
        w, V = eigsh(S, k=ne, which="LA", tol=1e-10, maxiter=10000)
    for i in range(V.shape[1]):
        f = np.zeros(n)
        f[support] = V[:, i] / s
        labels.append(f"eig:{i}")
        vecs.append(f)
    rng = np.random.default_rng(seed)
    for i in range(n_random):
        f = np.zeros(n)
        f[support] = rng.standard_normal(len(support))
        labels.append(f"gauss:{i}")
        vecs.append(f)
    return TrialFamily(labels, np.array(vecs))


@dataclass
class ConstantProbe:
    name: str
    params: dict
    observed: float
    witness_id: str
    ratios: np.ndarray = field(repr=False)
    labels: list = field(repr=False)
    witness: np.ndarray | None = field(default=None, repr=False)


def _best(name, params, ratios, fam) -> ConstantProbe:
    ratios = np.asarray(ratios, dtype=float)
    finite = ~np.isnan(ratios)
    if not np.any(finite):
        return ConstantProbe(name, params, 0.0, "", ratios, fam.labels)
    i = int(np.nanargmax(ratios))
    return ConstantProbe(name, params, float(ratios[i]), fam.labels[i], ratios, fam.labels,
                         fam.vectors[i])


def _safe_ratio(num: float, den: float, tiny: float = 1e-14) -> float:
    if den <= tiny:
        return math.nan if num <= tiny else math.inf
    return num / den


# ------------------------------------------------------ pseudo-Poincare


def average_operator(k: Kernel, s: float) -> sp.csr_matrix:
    """``f -> f_s`` with ``f_s(x)`` the ``m``-average of ``f`` on ``B(x, s)``."""
    W = k.space.pairs_within(s)
    W.data[:] = 1.0
    W = sp.csr_matrix(W @ sp.diags(k.m))
    rs = np.asarray(W.sum(axis=1)).ravel()
    return sp.csr_matrix(sp.diags(1.0 / rs) @ W)


def pseudo_poincare_check(k: Kernel, s: float, center: int | None = None,
                          radius: float | None = None, seed: int = 0,
                          n_random: int = 200) -> ConstantProbe:
    """Worst ``||f - f_s||^2 / (s^2 E(f, f))`` over the trial family.

    Trials live on points at least ``s + h'`` inside the window (intersected with
    ``B(center, radius)`` when given).  Trials with both sides below ``1e-14`` are
    dropped; a positive numerator over a null energy gives ``inf``.
    """
    space = k.space
    inside = np.flatnonzero(space.margin >= s + k.hp - slack(s))
    if center is None:
        center = int(np.argmax(space.margin))
    if radius is not None:
        ball, _ = space.ball(center, radius)
        inside = np.intersect1d(inside, ball)
    if radius is None:
        radius = float(np.max(space.distances_from(center)[inside])) if inside.size else s
    fam = trial_family(k, inside, center, radius, seed=seed, n_random=n_random)
    A = average_operator(k, s)
    ratios = []
    for f in fam.vectors:
        g = f - A @ f
        num = inner(k, g, g)
        ratios.append(_safe_ratio(num, s * s * energy_pairs(k, f)))
    return _best("pseudo-poincare", {"s": s}, ratios, fam)


# ------------------------------------------------------- Nash / Sobolev


def _lp(k_m: np.ndarray, f: np.ndarray, p: float) -> float:
    return math.fsum(np.abs(f) ** p * k_m) ** (1.0 / p)


def nash_probe(k: Kernel, center: int, r: float, delta: float, seed: int = 0,
               n_random: int = 200) -> ConstantProbe:
    """Worst ratio of ``||Pf||_2^(2+4/delta)`` to
    ``r^2 V^(-2/delta) (E(f,f) + r^-2 ||f||^2) ||f||_1^(4/delta)`` for ``f`` on ``B(center, r)``."""
    if delta <= 2:
        raise ValueError("delta must exceed 2")
    ball, _ = k.space.ball(center, r)
    V = math.fsum(k.m[ball])
    fam = trial_family(k, ball, center, r, seed=seed, n_random=n_random)
    ratios = []
    for f in fam.vectors:
        Pf = k.apply(f)
        lhs = inner(k, Pf, Pf) ** (1 + 2 / delta)
        rhs = (r * r / V ** (2 / delta)) * (energy_pairs(k, f) + inner(k, f, f) / (r * r)) \
            * _lp(k.m, f, 1) ** (4 / delta)
        ratios.append(_safe_ratio(lhs, rhs, 0.0))
    return _best("nash", {"center": center, "r": r, "delta": delta}, ratios, fam)


def dirichlet_energy(dk: DirichletKernel, fB: np.ndarray) -> float:
    """``E^B(f, f) = <f, (I - P_B) f>`` for ``f`` on the ball."""
    return math.fsum(fB * (fB - dk.apply(fB)) * dk.m)


def sobolev_probe(dk: DirichletKernel, delta: float, seed: int = 0,
                  n_random: int = 200) -> ConstantProbe:
    """Worst ratio of ``||P_B f||_q^2`` (``q = 2 delta/(delta-2)``) to
    ``r^2 V(x,r)^(-2/delta) (E^B(f,f) + r^-2 ||f||^2)``."""
    if delta <= 2:
        raise ValueError("delta must exceed 2")
    k = dk.base
    r = dk.r
    q = 2 * delta / (delta - 2)
    V = math.fsum(dk.m)
    fam = trial_family(k, dk.idx, dk.center, r, seed=seed, n_random=n_random)
    ratios = []
    for f in fam.vectors:
        fB = f[dk.idx]
        g = dk.apply(fB)
        lhs = _lp(dk.m, g, q) ** 2
        rhs = (r * r / V ** (2 / delta)) * (dirichlet_energy(dk, fB) + math.fsum(fB * fB * dk.m) / (r * r))
        ratios.append(_safe_ratio(lhs, rhs, 0.0))
    return _best("sobolev", {"center": dk.center, "r": r, "delta": delta}, ratios, fam)


# --------------------------------------------------- ultracontractivity


@dataclass
class UltraProfile:
    steps: np.ndarray
    sup: np.ndarray
    envelope: np.ndarray
    C_u: float
    decay_exponent: float
    diag_identity_gap: float


def ultracontractivity_profile(dk: DirichletKernel, kmax: int, delta: float = 2.0,
                               fit_range: tuple[int, int] | None = None) -> UltraProfile:
    """``max_{y,z} p_k^B(y,z)`` for ``k <= kmax`` against the envelope shape
    ``(1+r^2)^(delta/2) V^-1 (1+r^-2)^(k-1) k^(-delta/2)``.

    The decay exponent is the negated log-log slope over ``fit_range``
    (default: the top half of the steps).  ``diag_identity_gap`` measures
    ``max_y p_{2j}(y,y) = max_y ||p_j(y,.)||^2`` over the computed steps.
    """
    if kmax < 2:
        raise ValueError("kmax must be >= 2")
    r = dk.r
    V = math.fsum(dk.m)
    Pk = dk.K.toarray()
    sups = [float(Pk.max())]
    norms = {1: float(np.max((Pk * Pk) @ dk.m))}
    diag = {}
    for j in range(2, kmax + 1):
        Pk = dk.apply(Pk)
        sups.append(float(Pk.max()))
        if j % 2 == 0:
            diag[j] = float(np.max(np.diag(Pk)))
        if 2 * j <= kmax:
            norms[j] = float(np.max((Pk * Pk) @ dk.m))
    steps = np.arange(1, kmax + 1)
    sup = np.array(sups)
    env = (1 + r * r) ** (delta / 2) / V * (1 + r ** -2) ** (steps - 1) / steps ** (delta / 2)
    C_u = float(np.max(sup / env))
    lo, hi = fit_range if fit_range else (max(2, kmax // 2), kmax)
    sel = (steps >= lo) & (steps <= hi)
    slope = float(np.polyfit(np.log(steps[sel]), np.log(sup[sel]), 1)[0]) if sel.sum() >= 2 else math.nan
    gaps = [abs(diag[2 * j] - norms[j]) / max(norms[j], 1e-300) for j in norms if 2 * j in diag]
    return UltraProfile(steps, sup, env, C_u, -slope, max(gaps) if gaps else 0.0)


# ----------------------------------------------------------- spectral


@dataclass
class SpectralGap:
    norm: float
    lam_max: float
    lam_min: float
    gap: float
    a_hat: float


def is_proper(dk: DirichletKernel) -> bool:
    """True when the ball misses part of its centre's connected component."""
    ncomp, label = connected_components(dk.base.K, directed=False)
    comp = label == label[dk.center]
    return int(comp.sum()) > dk.size or not np.all(np.isin(np.flatnonzero(comp), dk.idx))


def spectral_gap(dk: DirichletKernel, require_proper: bool = True) -> SpectralGap:
    """Extreme eigenvalues of ``P_B`` via the ``m``-symmetrized matrix."""
    if require_proper and not is_proper(dk):
        raise ValueError("ball must be proper: it covers its whole component")
    S = dk.symmetrized()
    n = dk.size
    if n <= DENSE_LIMIT:
        w = np.linalg.eigvalsh(S.toarray())
        lmax, lmin = float(w[-1]), float(w[0])
    else:
        try:
            lmax = float(eigsh(S, k=1, which="LA", tol=1e-10, maxiter=10000,
                               return_eigenvectors=False)[0])
            lmin = float(eigsh(S, k=1, which="SA", tol=1e-10, maxiter=10000,
                               return_eigenvectors=False)[0])
        except ArpackNoConvergence as exc:
            raise RuntimeError("eigen-solver did not converge") from exc
    norm = max(abs(lmax), abs(lmin))
    gap = 1.0 - norm
    return SpectralGap(norm, lmax, lmin, gap, dk.r ** 2 * gap)


# --------------------------------------------------------- Caccioppoli


@dataclass
class CaccioppoliResult:
    lhs: np.ndarray
    rhs: np.ndarray
    residual: np.ndarray
    passed: bool
    walk: str


def evolve(k: Kernel, v0: np.ndarray, steps: int, lazy_walk: bool = True) -> np.ndarray:
    """Trajectory ``v_0..v_steps`` under ``P_L`` (or ``P``), shape ``(steps+1, n)``."""
    out = np.empty((steps + 1, k.n))
    out[0] = v0
    for i in range(steps):
        Pv = k.apply(out[i])
        out[i + 1] = 0.5 * (out[i] + Pv) if lazy_walk else Pv
    return out


def caccioppoli_check(k: Kernel, v0: np.ndarray, psi: np.ndarray, steps: int,
                      lazy_walk: bool = True, center: int | None = None,
                      r: float | None = None, tol: float = 1e-10) -> CaccioppoliResult:
    """Residual ``RHS - LHS`` of the Caccioppoli inequality at each step.

    ``u_k = |v_k|`` where ``v`` evolves by ``P_L`` from signed data ``v0``; this is
    the sanctioned subcaloric constructor.  The forms use ``P`` itself.  With
    ``lazy_walk=False`` the data evolve by ``P`` and violations are expected.
    """
    psi = np.asarray(psi, dtype=float)
    if np.any(psi < 0):
        raise ValueError("psi must be non-negative")
    if center is not None and r is not None:
        d = k.space.distances_from(center)
        if np.any((psi != 0) & (d > r + slack(r))):
            raise ValueError("psi must be supported in the ball")
    u = np.abs(evolve(k, np.asarray(v0, float), steps, lazy_walk))
    coo = k.K.tocoo()
    wpair = coo.data * k.m[coo.row] * k.m[coo.col]
    dpsi2 = (psi[coo.col] - psi[coo.row]) ** 2
    lhs, rhs = np.empty(steps), np.empty(steps)
    for i in range(steps):
        a = math.fsum((u[i + 1] ** 2 - u[i] ** 2) * psi ** 2 * k.m)
        lhs[i] = a + energy_pairs(k, u[i] * psi) / 8.0
        rhs[i] = 17.0 / 8.0 * math.fsum(dpsi2 * u[i][coo.row] ** 2 * wpair)
    res = rhs - lhs
    scale = max(1.0, float(np.max(np.abs(rhs))), float(np.max(np.abs(lhs))))
    return CaccioppoliResult(lhs, rhs, res, bool(np.all(res >= -tol * scale)),
                             "lazy" if lazy_walk else "plain")


# ------------------------------------------- integral maximum principle


@dataclass
class ImpResult:
    J: np.ndarray
    monotone: bool
    condition_ok: bool
    worst_condition: float
    D: float
    label: str


def sigma_radial(k: Kernel, x: int, R: float) -> np.ndarray:
    """``sigma_R(z) = max(R - d(x,z), 0) + h'``: 1-Lipschitz with infimum ``h'``."""
    d = k.space.distances_from(x)
    return np.maximum(R - d, 0.0) + k.hp


def check_sigma(k: Kernel, sigma: np.ndarray):
    if np.min(sigma) < k.hp - slack(k.hp):
        raise ValueError("sigma must be at least h' everywhere")
    W = k.space.pairs_within(k.hp).tocoo()
    d = W.data - 1.0
    if np.any(np.abs(sigma[W.row] - sigma[W.col]) > d + 1e-9 * (1 + d)):
        raise ValueError("sigma is not 1-Lipschitz on the h'-proximity graph")


def imp_weights(sigma: np.ndarray, D: float, n: int) -> np.ndarray:
    """``f_k = exp(-sigma^2 / (D (n + 1 - k)))`` for ``k = 0..n``."""
    ks = np.arange(n + 1)[:, None]
    return np.exp(-(sigma[None, :] ** 2) / (D * (n + 1 - ks)))


def imp_check(k: Kernel, u0: np.ndarray, sigma: np.ndarray, D: float, n: int,
              w: int | None = None, R: float | None = None) -> ImpResult:
    """``J_k = sum u_k^2 f_k m`` along the lazy evolution, and the pointwise
    condition ``f_{k+1} - f_k + |grad_P f_{k+1}|^2 / (4 f_{k+1}) <= 0``.

    Label: ``PASS`` (condition holds and ``J`` is non-increasing), ``FAIL``
    (condition holds but ``J`` increases) or ``condition-violated``.
    """
    u0 = np.asarray(u0, dtype=float)
    check_sigma(k, sigma)
    if w is not None and R is not None:
        d = k.space.distances_from(w)
        if np.any((u0 != 0) & (d > R + slack(R))):
            raise ValueError("u0 is not supported in B(w, R)")
    ks = np.arange(n + 1)[:, None]
    logf = -(sigma[None, :] ** 2) / (D * (n + 1 - ks))
    f = np.exp(logf)
    u = evolve(k, u0, n, lazy_walk=True)
    J = np.array([math.fsum(u[i] ** 2 * f[i] * k.m) for i in range(n + 1)])
    coo = k.K.tocoo()
    worst = -math.inf
    for i in range(n):
        # condition divided by f_{k+1}, evaluated in log space to survive underflow
        lg = logf[i + 1]
        # clipping at e^300 keeps squares finite; any clipped point is already violated
        ratio = np.exp(np.minimum(lg[coo.col] - lg[coo.row], 300.0))
        grad2 = np.zeros(k.n)
        np.add.at(grad2, coo.row, (ratio - 1.0) ** 2 * coo.data * k.m[coo.col])
        cond = (1.0 - np.exp(np.minimum(logf[i] - lg, 300.0))) + grad2 / 4.0
        top = float(np.max(cond))
        worst = max(worst, math.inf if math.isnan(top) else top)
    cond_ok = worst <= 1e-12
    mono = bool(np.all(np.diff(J) <= 1e-12 * J[0]))
    label = "condition-violated" if not cond_ok else ("PASS" if mono else "FAIL")
    return ImpResult(J, mono, cond_ok, worst, D, label)


def find_min_D(k: Kernel, u0: np.ndarray, sigma: np.ndarray, n: int, D0: float | None = None,
               Dmax: float = 1e8) -> ImpResult:
    """Doubling search for the first ``D`` whose run is labelled ``PASS``."""
    D = D0 if D0 is not None else k.hp ** 2 / 8
    while D <= Dmax:
        res = imp_check(k, u0, sigma, D, n)
        if res.label == "PASS":
            return res
        D *= 2
    raise RuntimeError("no passing D below Dmax")


# --------------------------------------------------- polynomial identities


MAX_POLY_DEGREE = 25


def s_coefficient(n: int, k: int, beta):
    """``s_{n,k} = (1+beta)^-(n-1-k) sum_{i=k+1}^n C(n,i) C(i-1,k) beta^(i-1-k)``."""
    tot = sum(math.comb(n, i) * math.comb(i - 1, k) * beta ** (i - 1 - k) for i in range(k + 1, n + 1))
    return tot / (1 + beta) ** (n - 1 - k)


def poly_terms(n: int, beta, z):
    """Left sides and right-hand term lists of both identities (generic numbers)."""
    one = beta / beta if isinstance(beta, Fraction) else 1.0
    half = one / 2
    lhs1 = z ** n
    t1 = [math.comb(n, k) * beta ** (n - k) * (z - beta) ** (k - 1) * z for k in range(1, n + 1, 2)]
    t1 += [math.comb(n - 1, k) * beta ** (n - 1 - k) * (z - beta) ** (k - 1) * (z * z - 2 * beta * z)
           for k in range(1, n, 2)]
    lhs2 = ((one + z) / 2) ** n
    a = (one + beta) / 2
    t2 = [half ** n]
    t2 += [math.comb(n, k) * a ** (n - k) * half ** k * (z - beta) ** (k - 1) * z for k in range(1, n + 1, 2)]
    t2 += [s_coefficient(n, k, beta) * a ** (n - 1 - k) * half ** (k + 1) * (z - beta) ** (k - 1)
           * (z * z - 2 * beta * z) for k in range(1, n, 2)]
    return lhs1, t1, lhs2, t2


@dataclass
class PolyCheck:
    n: int
    residual1: float
    residual2: float
    s_ok: bool

    @property
    def residual(self) -> float:
        return max(self.residual1, self.residual2)


def verify_poly_identities(n: int, beta: float, z: float) -> PolyCheck:
    """Relative residuals of both identities with compensated summation.

    The residual is scaled by the larger of ``|LHS|`` and the sum of the term
    magnitudes, which is the accuracy floating point can promise.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > MAX_POLY_DEGREE:
        raise OverflowError(f"n > {MAX_POLY_DEGREE} is outside the supported range")
    if beta <= 0:
        raise ValueError("beta must be positive")
    lhs1, t1, lhs2, t2 = poly_terms(n, float(beta), float(z))

    def rel(lhs, terms):
        scale = max(abs(lhs), math.fsum(abs(t) for t in terms), 1e-300)
        return abs(lhs - math.fsum(terms)) / scale

    s_ok = all(s_coefficient(n, k, float(beta)) >= math.comb(n - 1, k) * (1 - 1e-12)
               for k in range(1, n, 2))
    return PolyCheck(n, rel(lhs1, t1), rel(lhs2, t2), s_ok)


def poly_identity_sweep(nmax: int, trials: int, seed: int = 0, z_range=(-2.0, 2.0),
                        beta_range=(0.05, 2.0)) -> list[PolyCheck]:
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(trials):
        z = float(rng.uniform(*z_range))
        beta = float(rng.uniform(*beta_range))
        for n in range(1, nmax + 1):
            out.append(verify_poly_identities(n, beta, z))
    return out
