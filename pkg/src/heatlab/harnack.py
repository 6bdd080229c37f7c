"""Harmonic and caloric functions, Harnack constants, balayage, Gaussian fits
and recurrence classification."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.sparse.linalg import cg

from .kernel import Kernel, NoConvergence, grad_P, hk, restrict
from .space import radial_antiderivative, slack

DENSE_LIMIT = 2000


# ------------------------------------------------------------ harmonic


@dataclass
class HarmonicSolution:
    center: int
    r: float
    interior: np.ndarray
    layer: np.ndarray
    g: np.ndarray
    u: np.ndarray  # full length: solution on the ball, data on the layer, zero elsewhere
    residual: float
    iterations: int


class _HarmonicSystem:
    """``(I - M^1/2 K_B M^1/2) w = M^1/2 b`` for one ball, reusable across data."""

    def __init__(self, k: Kernel, x: int, r: float):
        space = k.space
        if space.margin[x] < r + k.hp - slack(r + k.hp):
            raise ValueError("ball and boundary layer must lie inside the window")
        self.k = k
        self.x = int(x)
        self.r = float(r)
        self.interior, _ = space.ball(x, r)
        outer, _ = space.ball(x, r + k.hp)
        self.layer = np.setdiff1d(outer, self.interior)
        self.KB = sp.csr_matrix(k.K[self.interior][:, self.interior])
        self.KL = sp.csr_matrix(k.K[self.interior][:, self.layer])
        self.s = np.sqrt(k.m[self.interior])
        # layer points the walk can actually reach from the ball
        self.active = self.layer[np.asarray(abs(self.KL).sum(axis=0)).ravel() > 0]
        n = len(self.interior)
        self.A = sp.csr_matrix(sp.identity(n) - sp.diags(self.s) @ self.KB @ sp.diags(self.s))
        self._chol = None
        if n <= DENSE_LIMIT:
            self._chol = sla.cho_factor(self.A.toarray())

    def solve(self, g: np.ndarray) -> HarmonicSolution:
        k = self.k
        g = np.asarray(g, dtype=float)
        gL = g[self.layer]
        b = self.KL @ (k.m[self.layer] * gL)
        rhs = self.s * b
        iters = 0
        if self._chol is not None:
            w = sla.cho_solve(self._chol, rhs)
        else:
            count = [0]

            def tick(_):
                count[0] += 1

            w, info = cg(self.A, rhs, rtol=1e-12, atol=0.0, maxiter=20000, callback=tick)
            iters = count[0]
            if info != 0:
                raise NoConvergence(f"CG did not converge after {iters} iterations")
        u = np.zeros(k.n)
        u[self.interior] = w / self.s
        u[self.layer] = gL
        res = np.abs(u[self.interior] - k.apply(u)[self.interior])
        residual = float(res.max()) if res.size else 0.0
        scale = float(np.max(np.abs(gL))) if gL.size else 0.0
        if residual > 1e-10 * max(scale, 1e-300) and scale > 0:
            raise NoConvergence(f"harmonic residual {residual:.3e} above tolerance")
        return HarmonicSolution(self.x, self.r, self.interior, self.layer, g, u, residual, iters)


def solve_harmonic(k: Kernel, x: int, r: float, g: np.ndarray) -> HarmonicSolution:
    """Solve ``u = Pu`` on ``B(x, r)`` with ``u = g`` on ``B(x, r + h') \\ B(x, r)``.

    ``g`` is a full-length vector; only its layer values matter.
    """
    g = np.asarray(g, dtype=float)
    if np.any(g < 0):
        raise ValueError("boundary data must be non-negative")
    return _HarmonicSystem(k, x, r).solve(g)


# ------------------------------------------------------------ Harnack


@dataclass
class HarnackReport:
    kind: str
    geometry: dict
    trials: int
    C_hat: float
    witness_trial: int
    ratios: np.ndarray = field(repr=False)
    failed: bool = False
    witness: dict | None = None
    rows: list = field(default_factory=list, repr=False)


def _spike_data(rng: np.random.Generator, support: np.ndarray, n: int) -> np.ndarray:
    g = np.zeros(n)
    count = int(rng.integers(1, 4))
    pts = rng.choice(support, size=min(count, len(support)), replace=False)
    g[pts] = rng.uniform(0.1, 1.0, size=len(pts))
    return g


def elliptic_harnack(k: Kernel, x: int, r: float, c: float = 0.25, trials: int = 50,
                     seed: int = 0, r0: float = 0.0) -> HarnackReport:
    """Max over trials of ``sup / inf`` of harmonic ``u`` on ``B(x, c r)``.

    Spikes sit on layer points reachable in one step from the ball.  Trial 0 is
    a unit spike on the first such point; the rest use one to three seeded
    spikes with uniform weights in ``[0.1, 1]``.
    """
    if not 0 < c < 1:
        raise ValueError("c must lie in (0, 1)")
    if r < r0:
        raise ValueError("r below the configured r0")
    system = _HarmonicSystem(k, x, r)
    inner_idx, _ = k.space.ball(x, c * r)
    rng = np.random.default_rng(seed)
    ratios, rows = [], []
    for t in range(trials):
        if t == 0:
            g = np.zeros(k.n)
            g[system.active[0]] = 1.0
        else:
            g = _spike_data(rng, system.active, k.n)
        u = system.solve(g).u[inner_idx]
        hi, lo = float(u.max()), float(u.min())
        ratio = hi / lo if lo > 0 else math.inf
        ratios.append(ratio)
        rows.append((t, hi, lo, ratio))
    ratios = np.array(ratios)
    w = int(np.argmax(ratios))
    return HarnackReport("elliptic", {"x": int(x), "r": r, "c": c}, trials, float(ratios[w]), w,
                         ratios, not np.isfinite(ratios[w]), None, rows)


def evolve_caloric(k: Kernel, u0: np.ndarray, steps: int) -> np.ndarray:
    """``u_0..u_steps`` with ``u_{k+1} = P u_k``; shape ``(steps + 1, n)``."""
    out = np.empty((steps + 1, k.n))
    out[0] = u0
    for i in range(steps):
        out[i + 1] = k.apply(out[i])
    return out


def phi_cylinders(r: float, eta: float) -> tuple[tuple[int, int], tuple[int, int], float]:
    """Time windows of the lower and upper cylinders and their common radius."""
    lower = (math.ceil(eta ** 2 * r ** 2 / 2), math.floor(eta ** 2 * r ** 2))
    upper = (math.ceil(2 * eta ** 2 * r ** 2), math.floor(4 * eta ** 2 * r ** 2))
    return lower, upper, eta * r / 2


def parabolic_harnack(k: Kernel, x: int, r: float, eta: float = 0.25, trials: int = 50,
                      seed: int = 0) -> HarnackReport:
    """Max over trials of ``sup_{Q-} u / inf_{Q+} u`` for forward-evolved data.

    Trial 0 is the unit point mass at ``x``; the rest are one to three seeded
    spikes in ``B(x, r + h')``.  A vanishing infimum is reported as a failure
    with the offending trial, time and point.
    """
    lower, upper, rho = phi_cylinders(r, eta)
    if upper[1] < 4:
        raise ValueError("cylinders too short: need floor(4 eta^2 r^2) >= 4")
    if lower[0] > lower[1] or upper[0] > upper[1]:
        raise ValueError("empty time window")
    space = k.space
    if space.margin[x] < r + k.hp - slack(r):
        raise ValueError("data ball leaves the window")
    support, _ = space.ball(x, r + k.hp)
    Q, _ = space.ball(x, rho)
    rng = np.random.default_rng(seed)
    ratios, rows = [], []
    witness = None
    for t in range(trials):
        if t == 0:
            u0 = np.zeros(k.n)
            u0[x] = 1.0
        else:
            u0 = _spike_data(rng, support, k.n)
        u = evolve_caloric(k, u0, upper[1])
        sup_m = float(u[lower[0]:lower[1] + 1][:, Q].max())
        block = u[upper[0]:upper[1] + 1][:, Q]
        inf_p = float(block.min())
        if inf_p > 0:
            ratio = sup_m / inf_p
        else:
            ratio = math.inf
            if witness is None:
                i, j = np.unravel_index(int(np.argmin(block)), block.shape)
                witness = {"trial": t, "step": int(upper[0] + i), "point": int(Q[j])}
        ratios.append(ratio)
        rows.append((t, sup_m, inf_p, ratio))
    ratios = np.array(ratios)
    w = int(np.argmax(ratios))
    return HarnackReport("parabolic", {"x": int(x), "r": r, "eta": eta}, trials, float(ratios[w]),
                         w, ratios, witness is not None, witness, rows)


def doubling_stable(c_r: float, c_2r: float, factor: float = 2.0) -> bool:
    """Both constants finite and within ``factor`` of each other."""
    if not (np.isfinite(c_r) and np.isfinite(c_2r)):
        return False
    return max(c_r, c_2r) <= factor * min(c_r, c_2r)


# ---------------------------------------------------- Holder / reverse Poincare


def harmonic_residual(k: Kernel, u: np.ndarray, x: int, r: float) -> float:
    idx, _ = k.space.ball(x, r)
    return float(np.max(np.abs(u[idx] - k.apply(u)[idx])))


@dataclass
class OscillationReport:
    radii: np.ndarray
    osc: np.ndarray
    rho_hat: float
    bound: float | None
    passed: bool | None


def holder_oscillation(k: Kernel, u: np.ndarray, x: int, radii, C_E: float | None = None,
                       tol: float = 1e-8) -> OscillationReport:
    """Oscillation of ``u`` over nested balls and its geometric decay rate.

    ``rho_hat`` is ``exp`` of the least-squares slope of ``log osc`` against the
    position in the chain, ordered from the largest ball inward.
    """
    radii = np.sort(np.asarray(radii, dtype=float))[::-1]
    u = np.asarray(u, dtype=float)
    scale = max(1.0, float(np.max(np.abs(u))))
    if harmonic_residual(k, u, x, float(radii[0])) > tol * scale:
        raise ValueError("u is not harmonic on the largest ball")
    osc = []
    for r in radii:
        idx, _ = k.space.ball(x, r)
        osc.append(float(u[idx].max() - u[idx].min()))
    osc = np.array(osc)
    pos = osc > 1e-300
    if pos.sum() >= 2:
        slope = np.polyfit(np.flatnonzero(pos), np.log(osc[pos]), 1)[0]
        rho = float(np.exp(slope))
    else:
        rho = 0.0
    bound = None if C_E is None else (C_E - 1) / (C_E + 1) + 0.1
    return OscillationReport(radii, osc, rho, bound, None if bound is None else rho <= bound)


def reverse_poincare_check(k: Kernel, u: np.ndarray, x: int, r: float, Omega: float,
                           tol: float = 1e-8) -> float:
    """``sum_{B(x,r)} |grad_P u|^2 m / (r^-2 sum_{B(x, Omega r)} u^2 m)``."""
    if Omega <= 1 or r <= 3 * k.hp / (Omega - 1):
        raise ValueError("need Omega > 1 and r > 3 h' / (Omega - 1)")
    u = np.asarray(u, dtype=float)
    scale = max(1.0, float(np.max(np.abs(u))))
    if harmonic_residual(k, u, x, Omega * r) > tol * scale:
        raise ValueError("u is not harmonic on the enlarged ball")
    inner_idx, _ = k.space.ball(x, r)
    outer_idx, _ = k.space.ball(x, Omega * r)
    g2 = grad_P(k, u) ** 2
    num = math.fsum(g2[inner_idx] * k.m[inner_idx])
    den = math.fsum(u[outer_idx] ** 2 * k.m[outer_idx]) / r ** 2
    if den == 0:
        return 0.0 if num == 0 else math.inf
    return num / den


def reverse_poincare_battery(k: Kernel, x: int, r: float, Omega: float = 2.0, trials: int = 50,
                             seed: int = 0) -> HarnackReport:
    """Max reverse-Poincare ratio over harmonic functions on ``B(x, Omega r)`` with spike data."""
    system = _HarmonicSystem(k, x, Omega * r)
    rng = np.random.default_rng(seed)
    ratios = []
    for t in range(trials):
        g = _spike_data(rng, system.active, k.n)
        ratios.append(reverse_poincare_check(k, system.solve(g).u, x, r, Omega))
    ratios = np.array(ratios)
    w = int(np.argmax(ratios))
    return HarnackReport("reverse-poincare", {"x": int(x), "r": r, "Omega": Omega}, trials,
                         float(ratios[w]), w, ratios)


# ------------------------------------------------------------ balayage


@dataclass
class Balayage:
    v: np.ndarray  # (b + 1, n); rows before a are zero
    Z: np.ndarray  # (b + 2, n); Dirichlet part, rows before a are zero
    residual: float
    min_v: float
    a: int
    b: int


def balayage(k: Kernel, x: int, r: float, r1: float, u: np.ndarray, a: int, b: int,
             tol: float = 1e-12) -> Balayage:
    """Split caloric ``u`` into a killed evolution from time ``a`` plus a
    non-negative charge ``v`` laid on the annulus ``B(x, r1 + h') \\ B(x, r1)``.

    ``Z_a = u_a`` on ``B(x, r)``, ``v_k = u_k - Z_k`` on the annulus and
    ``Z_{k+1} = P_B(Z_k + v_k)``.  ``u`` holds the rows ``u_0..u_{b+1}``.
    """
    if not 0 < r1 < r1 + k.hp < r:
        raise ValueError("need 0 < r1 < r1 + h' < r")
    if not 0 <= a <= b or u.shape[0] < b + 2:
        raise ValueError("u must cover the steps a..b+1")
    space = k.space
    B, _ = space.ball(x, r)
    B1, _ = space.ball(x, r1)
    ann = np.setdiff1d(space.ball(x, r1 + k.hp)[0], B1)
    scale = max(float(np.max(np.abs(u[a:b + 2]))), 1e-300)
    for i in range(a, b + 1):
        if np.max(np.abs(k.apply(u[i])[B] - u[i + 1][B])) > tol * scale:
            raise ValueError(f"u is not caloric on the ball at step {i}")
    dk = restrict(k, x, r, check_window=False)
    pos = np.searchsorted(dk.idx, ann)
    n = k.n
    Z = np.zeros((b + 2, n))
    v = np.zeros((b + 1, n))
    Z[a, B] = u[a, B]
    for i in range(a, b + 1):
        v[i, ann] = u[i, ann] - Z[i, ann]
        src = Z[i, B].copy()
        src[pos] += v[i, ann]
        Z[i + 1, B] = dk.apply(src)
    residual = float(np.max(np.abs(u[a:b + 2][:, B1] - Z[a:b + 2][:, B1]))) / scale
    min_v = float(v[a:b + 1][:, ann].min()) if ann.size else 0.0
    return Balayage(v, Z, residual, min_v, a, b)


# ------------------------------------------------------- Gaussian bounds


class InsufficientSamples(ValueError):
    pass


@dataclass
class GaussianFit:
    horizon: tuple[int, int]
    steps: np.ndarray
    samples: np.ndarray = field(repr=False)  # rows: n, x, y, d, p_n, V_sqrt_n, log_ratio
    C1: float
    C2: float
    c1: float
    c2: float
    c3: float
    spread: float
    rho: np.ndarray = field(repr=False)  # rows: n, x, rho_n(x)
    rho_range: tuple[float, float]
    verdict: str
    admitted_max_d: float


def heat_rows(k: Kernel, x: int, steps) -> dict[int, np.ndarray]:
    """``p_n(x, .)`` for each requested ``n``, from a single forward sweep."""
    steps = sorted(set(int(s) for s in steps))
    out = {}
    v = k.row(x)
    cur = 1
    for n in steps:
        while cur < n:
            v = k.apply(v)
            cur += 1
        out[n] = v.copy()
    return out


def on_diagonal_profile(k: Kernel, centers, steps) -> np.ndarray:
    """``rho_n(x) = V_m(x, sqrt n) p_n(x, x)``; shape ``(len(centers), len(steps))``."""
    out = np.empty((len(centers), len(steps)))
    for i, x in enumerate(centers):
        rows = heat_rows(k, x, steps)
        for j, n in enumerate(steps):
            out[i, j] = k.volume_m(x, math.sqrt(n)) * rows[int(n)][x]
    return out


def gaussian_fit(k: Kernel, horizon: tuple[int, int], centers=None, A: float = 6.0,
                 n_steps: int = 9, pair_budget: int = 200000, seed: int = 0,
                 rho_bounds: tuple[float, float] = (0.05, 20.0)) -> GaussianFit:
    """Fit two-sided Gaussian envelopes to ``p_n(x, y)`` over ``n`` in ``horizon``.

    A sample ``(x, y, n)`` is admitted when ``margin(x) >= d(x, y) + A sqrt(n)``
    and ``p_n(x, y) > 0``.  The upper fit regresses ``-log(V_m(x, sqrt n) p_n)`` on
    ``d^2 / n`` over ``d >= sqrt n``; the lower fit uses ``d <= c3 n`` with
    ``c3 = h' / 2``.  ``spread`` is the range of the upper-fit residuals.
    """
    nmin, nmax = horizon
    steps = np.unique(np.geomspace(nmin, nmax, n_steps).round().astype(int))
    space = k.space
    if centers is None:
        centers = [int(np.argmax(space.margin))]
    rng = np.random.default_rng(seed)
    c3 = k.hp / 2
    samples, rho = [], []
    per_row = max(1, pair_budget // max(1, len(centers) * len(steps)))
    for x in centers:
        d_all = space.distances_from(x)
        rows = heat_rows(k, x, steps)
        for n in steps:
            sq = math.sqrt(n)
            if space.margin[x] < A * sq - slack(A * sq):
                continue
            V = k.volume_m(x, sq)
            p = rows[int(n)]
            rho.append((n, x, V * p[x]))
            ok = np.flatnonzero((space.margin[x] >= d_all + A * sq - slack(A * sq)) & (p > 0))
            if ok.size > per_row:
                ok = np.sort(rng.choice(ok, size=per_row, replace=False))
            for y in ok:
                samples.append((n, x, y, d_all[y], p[y], V, -math.log(V * p[y])))
    if not rho:
        raise InsufficientSamples("no admissible (x, n): window too small for the horizon")
    S = np.array(samples, dtype=float).reshape(-1, 7)
    R = np.array(rho, dtype=float)
    t = S[:, 3] ** 2 / S[:, 0]
    up = S[:, 3] >= np.sqrt(S[:, 0])
    if up.sum() < 2:
        raise InsufficientSamples("fewer than two admissible off-diagonal samples")
    slope, icpt = np.polyfit(t[up], S[up, 6], 1)
    resid = S[up, 6] - (icpt + slope * t[up])
    spread = float(resid.max() - resid.min())
    C2 = 1.0 / slope if slope > 0 else math.inf
    C1 = float(np.exp(np.max(-S[up, 6] + t[up] * max(slope, 0.0))))
    lo = S[:, 3] <= c3 * S[:, 0]
    if lo.sum() >= 2 and np.ptp(t[lo]) > 0:
        s_lo = float(np.polyfit(t[lo], S[lo, 6], 1)[0])
    else:
        s_lo = max(slope, 0.0)
    s_lo = max(s_lo, 1e-12)
    c2 = 1.0 / s_lo
    c1 = float(np.exp(np.min(-S[lo, 6] + t[lo] * s_lo))) if lo.any() else 0.0
    rr = (float(R[:, 2].min()), float(R[:, 2].max()))
    verdict = "PASS" if rho_bounds[0] <= rr[0] and rr[1] <= rho_bounds[1] else "FAIL"
    return GaussianFit((nmin, nmax), steps, S, C1, C2, c1, c2, c3, spread, R, rr, verdict,
                       float(S[:, 3].max()) if len(S) else 0.0)


@dataclass
class EDProfile:
    steps: np.ndarray
    E: np.ndarray
    scaled: np.ndarray
    ratio: float
    passed: bool


def ed_profile(k: Kernel, x: int, D: float, kmax: int, A: float = 6.0,
               bound: float = 50.0) -> EDProfile:
    """``E_D(k, x) = sum_z h_k(x, z)^2 exp(d1^2 / (D k)) m(z)`` with ``d1 = max(d, h')``."""
    if k.space.margin[x] < A * math.sqrt(kmax) - slack(kmax):
        raise ValueError("margin guard violated")
    d1 = np.maximum(k.space.distances_from(x), k.hp)
    steps = np.arange(1, kmax + 1)
    v = hk(k, 0, x).values
    E, scaled = [], []
    for s in steps:
        v = 0.5 * (v + k.apply(v))
        w = np.exp(np.minimum(d1 ** 2 / (D * s), 700.0))
        e = math.fsum(v * v * w * k.m)
        E.append(e)
        scaled.append(e * k.volume_m(x, math.sqrt(s)))
    E, scaled = np.array(E), np.array(scaled)
    ratio = float(scaled.max() / scaled.min())
    return EDProfile(steps, E, scaled, ratio, ratio <= bound)


# ------------------------------------------------------------ recurrence


@dataclass
class RecurrenceReport:
    verdict: str
    beta_hat: float
    radii: np.ndarray
    volumes: np.ndarray
    partial_sums: np.ndarray
    analytic: bool
    truncated: bool
    green_partial: np.ndarray | None = None


def radial_ball_walk_volumes(alpha: float, h: float, radii) -> np.ndarray:
    """``V_m(0, n)`` on the weighted line for the ball walk at scale ``h``,
    accumulated over consecutive radii."""
    F = lambda t: radial_antiderivative(t, alpha)  # noqa: E731
    w = lambda t: (1 + t * t) ** (alpha / 2)  # noqa: E731
    out, acc, prev = [], 0.0, 0.0
    for n in radii:
        val, _ = quad(lambda t: (F(t + h) - F(t - h)) * w(t), prev, n, limit=200,
                      epsabs=0.0, epsrel=1e-12)
        acc += 2 * val
        prev = n
        out.append(acc)
    return np.array(out)


def classify_recurrence(k: Kernel, x: int, N_max: int, analytic: bool = True, margin: float = 0.1,
                        green_steps: int = 0) -> RecurrenceReport:
    """Transience verdict from the growth exponent of ``V_m(x, n)``.

    The exponent ``beta_hat`` is the log-log slope over ``[N_max / 10, N_max]``;
    ``S_N = sum n / V_m(x, n)`` is attached.  Closed-form volumes are used for the
    ball walk on the weighted line centred at the origin.
    """
    space = k.space
    radii = np.arange(1, N_max + 1, dtype=float)
    use_analytic = (analytic and space.kind == "euclidean_radial" and space.coords.shape[1] == 1
                    and abs(float(space.coords[x, 0])) < space.resolution)
    truncated = False
    if use_analytic:
        alpha = float(space.params["alpha"])
        V = radial_ball_walk_volumes(alpha, k.h, radii)
    else:
        V = np.array([k.volume_m(x, n) for n in radii])
        truncated = bool(N_max > space.margin[x])
    S = np.cumsum(radii / V)
    top = radii >= N_max / 10
    beta = float(np.polyfit(np.log(radii[top]), np.log(V[top]), 1)[0])
    if beta > 2 + margin:
        verdict = "transient"
    elif beta < 2 - margin:
        verdict = "recurrent"
    else:
        verdict = "inconclusive"
    green = None
    if green_steps:
        v = k.row(x)
        acc = [v[x]]
        for _ in range(green_steps - 1):
            v = k.apply(v)
            acc.append(acc[-1] + v[x])
        green = np.array(acc)
    return RecurrenceReport(verdict, beta, radii, V, S, use_analytic, truncated, green)
