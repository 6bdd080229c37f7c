"""Symmetric Markov kernels on finite spaces.

A kernel is stored as a symmetric sparse matrix ``K`` of densities
``p(x, y)`` together with the reference measure ``m``.  The operator is
``P f(x) = sum_y p(x, y) f(y) m(y)`` so one application is ``K @ (m * f)``.
Iterated kernels are rows: ``p_{k+1}(x, .) = P p_k(x, .)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .space import Space, slack

STOCH_TOL = 1e-12


class NoConvergence(RuntimeError):
    pass


class SupportError(ValueError):
    pass


@dataclass(eq=False)
class Kernel:
    space: Space
    K: sp.csr_matrix
    m: np.ndarray
    h: float
    hp: float
    name: str = "kernel"
    info: dict = field(default_factory=dict)
    _support_radius: float | None = field(default=None, repr=False)

    def __post_init__(self):
        K = sp.csr_matrix(self.K, dtype=float)
        K.eliminate_zeros()
        K.sort_indices()
        if (K != K.T).nnz:
            raise ValueError("kernel entries are not exactly symmetric")
        if K.nnz and K.data.min() < 0:
            raise ValueError("kernel entries must be non-negative")
        self.K = K
        self.m = np.asarray(self.m, dtype=float)
        if not np.all(self.m > 0):
            raise ValueError("reference measure must be positive")

    @property
    def n(self) -> int:
        return self.K.shape[0]

    @property
    def nnz(self) -> int:
        return self.K.nnz

    @property
    def boundary(self) -> np.ndarray:
        """Rows within ``h'`` of the window edge."""
        return self.space.margin < self.hp - slack(self.hp)

    @property
    def support_radius(self) -> float:
        if self._support_radius is None:
            coo = self.K.tocoo()
            self._support_radius = float(self.space.dist_pairs(coo.row, coo.col).max()) if coo.nnz else 0.0
        return self._support_radius

    def apply(self, f: np.ndarray) -> np.ndarray:
        """``P f`` for a vector or for the columns of a matrix."""
        if f.ndim == 1:
            return self.K @ (self.m * f)
        return self.K @ (self.m[:, None] * f)

    def row(self, x: int) -> np.ndarray:
        return self.K[x].toarray().ravel()

    def dense(self) -> np.ndarray:
        return self.K.toarray()

    def row_sums(self) -> np.ndarray:
        return self.K @ self.m

    def volume_m(self, x: int, r: float) -> float:
        idx, _ = self.space.ball(x, r)
        return math.fsum(self.m[idx])

    def volumes_m(self, r: float) -> np.ndarray:
        w = self.space.pairs_within(r)
        w.data[:] = 1.0
        return w @ self.m


def _symmetric(space, rows, cols, vals) -> sp.csr_matrix:
    n = space.n
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, n))


def ball_walk(space: Space, h: float) -> Kernel:
    """Ball walk at scale ``h``: ``p(x,y) = 1_{d<=h}/(V(x,h)V(y,h))`` w.r.t. ``m = V(.,h) mu``."""
    if h <= 0:
        raise ValueError("h must be positive")
    if space.resolution and h < 2 * space.resolution - slack(h) and space.kind != "lattice":
        raise ValueError("h must be at least twice the grid resolution")
    w = space.pairs_within(h).tocoo()
    V = np.zeros(space.n)
    np.add.at(V, w.row, space.mass[w.col])
    vals = 1.0 / (V[w.row] * V[w.col])
    K = _symmetric(space, w.row, w.col, vals)
    return Kernel(space, K, V * space.mass, h, h, name="ball_walk", info={"V_h": V})


def lazy(k: Kernel) -> Kernel:
    """``(I + P)/2``: the diagonal gains ``1/(2 m(x))``, everything halves."""
    K = (k.K + sp.diags(1.0 / k.m)) * 0.5
    return Kernel(k.space, K, k.m.copy(), k.h, k.hp, name=k.name + "+lazy",
                  info=dict(k.info, lazy=True))


def srw(space: Space) -> Kernel:
    """Nearest-neighbour walk: ``p(x,y) = 1_{x~y}/(deg x deg y)`` w.r.t. ``m = deg``."""
    if space.metric == "graph":
        adj = space.adjacency.tocoo()
    else:
        w = space.pairs_within(1.0).tocoo()
        keep = np.abs(w.data - 2.0) <= slack(1.0)
        adj = sp.coo_matrix((np.ones(keep.sum()), (w.row[keep], w.col[keep])),
                            shape=(space.n, space.n))
    deg = np.zeros(space.n)
    np.add.at(deg, adj.row, 1.0)
    if np.any(deg == 0):
        raise ValueError("srw needs a graph without isolated vertices")
    vals = 1.0 / (deg[adj.row] * deg[adj.col])
    K = _symmetric(space, adj.row, adj.col, vals)
    return Kernel(space, K, deg, 1.0, 1.0, name="srw")


def annulus_walk(space: Space, h: float, h1: float, h2: float) -> Kernel:
    """Jumps uniform on the annulus ``h1 < d <= h2``, symmetrized like the ball walk."""
    if not 0 < h1 < h2:
        raise ValueError("annulus needs 0 < h1 < h2")
    w = space.pairs_within(h2).tocoo()
    d = w.data - 1.0
    keep = d > h1 + slack(h1)
    rows, cols = w.row[keep], w.col[keep]
    A = np.zeros(space.n)
    np.add.at(A, rows, space.mass[cols])
    interior = space.margin >= h2
    if np.any(A[interior] == 0) or np.any(A == 0):
        raise ValueError("empty annulus at some point")
    vals = 1.0 / (A[rows] * A[cols])
    K = _symmetric(space, rows, cols, vals)
    return Kernel(space, K, A * space.mass, h, h2, name="annulus_walk",
                  info={"h1": h1, "h2": h2})


def kernel_power(k: Kernel, steps: int) -> Kernel:
    """The ``steps``-step kernel ``p_steps`` as a kernel in its own right."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    Mk = sp.diags(k.m)
    A = k.K
    for _ in range(steps - 1):
        A = A @ Mk @ k.K
    A = sp.csr_matrix(A)
    A = (A + A.T) * 0.5
    return Kernel(k.space, A, k.m.copy(), k.h, k.hp * steps, name=f"{k.name}^{steps}",
                  info=dict(k.info))


def tree_level_walk(degree: int, depth: int) -> Kernel:
    """Simple walk on the ``degree``-regular tree of given depth, lumped by level.

    Level ``j`` carries the ``mu``-mass of its vertices; the edge count between
    consecutive levels is the conductance.  Quantities seen from the root
    (``p_n(root, root)``, ``V_m(root, r)``) agree with the explicit tree.
    """
    if degree < 3 or depth < 1:
        raise ValueError("tree needs degree >= 3 and depth >= 1")
    j = np.arange(depth + 1)
    count = np.where(j == 0, 1.0, degree * (degree - 1.0) ** np.maximum(j - 1, 0))
    cond = count[1:]  # edges between level j and j + 1
    m = np.zeros(depth + 1)
    m[:-1] += cond
    m[1:] += cond
    space = Space("tree_levels", count, "graph", (depth - j).astype(float),
                  adjacency=sp.csr_matrix((np.ones(2 * depth), (np.r_[j[:-1], j[1:]], np.r_[j[1:], j[:-1]])),
                                          shape=(depth + 1, depth + 1)),
                  params={"degree": degree, "depth": depth}, _diam=float(depth))
    vals = cond / (m[:-1] * m[1:])
    K = _symmetric(space, np.r_[j[:-1], j[1:]], np.r_[j[1:], j[:-1]], np.r_[vals, vals])
    return Kernel(space, K, m, 1.0, 1.0, name="tree_level_walk")


# ------------------------------------------------------------------ rows


@dataclass
class Row:
    values: np.ndarray
    steps: int
    truncated: bool
    deficit: float


def iterate(k: Kernel, steps: int, x: int) -> Row:
    """``p_steps(x, .)`` by repeated application of ``P`` to the stored row."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    v = k.row(x)
    bnd = k.boundary
    truncated = bool(np.any(v[bnd] != 0))
    for _ in range(steps - 1):
        v = k.apply(v)
        truncated = truncated or bool(np.any(v[bnd] != 0))
    return Row(v, steps, truncated, 1.0 - float(v @ k.m))


def iterate_rows(k: Kernel, steps: int, xs) -> np.ndarray:
    """Rows ``p_steps(x, .)`` for several starting points (columns of the result)."""
    V = k.K[list(xs)].toarray().T
    for _ in range(steps - 1):
        V = k.apply(V)
    return V


def hk(k: Kernel, steps: int, x: int) -> Row:
    """``h_n(x, .) = P_L^n p_2(x, .)`` with ``P_L = (I + P)/2``."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    v = iterate(k, 2, x).values
    bnd = k.boundary
    truncated = bool(np.any(v[bnd] != 0))
    for _ in range(steps):
        v = 0.5 * (v + k.apply(v))
        truncated = truncated or bool(np.any(v[bnd] != 0))
    return Row(v, steps, truncated, 1.0 - float(v @ k.m))


@dataclass(eq=False)
class DirichletKernel:
    """Kernel killed on exiting the ball ``B(center, r)``."""

    base: Kernel
    center: int
    r: float
    idx: np.ndarray
    K: sp.csr_matrix
    m: np.ndarray

    @property
    def size(self) -> int:
        return len(self.idx)

    def apply(self, f: np.ndarray) -> np.ndarray:
        if f.ndim == 1:
            return self.K @ (self.m * f)
        return self.K @ (self.m[:, None] * f)

    def local(self, x: int) -> int:
        pos = int(np.searchsorted(self.idx, x))
        if pos >= len(self.idx) or self.idx[pos] != x:
            raise ValueError(f"point {x} is not in the ball")
        return pos

    def to_full(self, v: np.ndarray) -> np.ndarray:
        out = np.zeros(self.base.n)
        out[self.idx] = v
        return out

    def symmetrized(self) -> sp.csr_matrix:
        s = np.sqrt(self.m)
        return sp.csr_matrix(sp.diags(s) @ self.K @ sp.diags(s))


def restrict(k: Kernel, center: int, r: float, check_window: bool = True) -> DirichletKernel:
    idx, _ = k.space.ball(center, r)
    if idx.size == 0:
        raise ValueError("empty ball")
    if check_window and k.space.margin[center] < r - slack(r):
        raise ValueError("ball is not inside the window")
    KB = k.K[idx][:, idx]
    return DirichletKernel(k, int(center), float(r), idx, sp.csr_matrix(KB), k.m[idx].copy())


def iterate_dirichlet(dk: DirichletKernel, steps: int, x: int) -> Row:
    """``p^B_steps(x, .)`` as a full-length vector (zero off the ball)."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    v = dk.K[dk.local(x)].toarray().ravel()
    for _ in range(steps - 1):
        v = dk.apply(v)
    return Row(dk.to_full(v), steps, False, 1.0 - float(v @ dk.m))


def operator_norm(dk: DirichletKernel) -> float:
    """``||P_B||_{2->2}`` on ``L^2(m)``."""
    from .ineq import spectral_gap

    return spectral_gap(dk, require_proper=False).norm


@dataclass
class GreenResult:
    values: np.ndarray
    terms: int
    converged: bool
    last_increment: float
    tail_bound: float | None = None


def green(k: Kernel | DirichletKernel, x: int, tol: float = 1e-12, kmax: int = 100000,
          strict: bool = True) -> GreenResult:
    """Partial sums ``G_N(x, .) = sum_{i=1}^N p_i(x, .)``.

    Stops once the sup norm of the increment drops below ``tol``.  On a ball the
    result carries a geometric tail bound from ``||P_B||``.  On the full space a
    sum that has not settled by ``kmax`` raises :class:`NoConvergence` unless
    ``strict`` is false.
    """
    dirichlet = isinstance(k, DirichletKernel)
    if dirichlet:
        v = k.K[k.local(x)].toarray().ravel()
    else:
        v = k.row(x)
    total = v.copy()
    terms = 1
    inc = float(np.max(np.abs(v)))
    while inc >= tol and terms < kmax:
        v = k.apply(v)
        total += v
        terms += 1
        inc = float(np.max(np.abs(v)))
    converged = inc < tol
    tail = None
    if dirichlet:
        lam = operator_norm(k)
        if lam < 1:
            l2 = math.sqrt(float(v * v @ k.m))
            tail = lam / (1 - lam) * l2 / math.sqrt(float(k.m.min()))
        total = k.to_full(total)
    elif not converged and strict:
        raise NoConvergence(f"Green sum not settled after {kmax} terms (increment {inc:.3e})")
    return GreenResult(total, terms, converged, inc, tail)


# ------------------------------------------------------------- audits


@dataclass
class CompatAudit:
    c1_hat: float
    C1_hat: float
    support_ok: bool
    alpha_hat: float
    alpha_k: dict
    interior_rows: int

    @property
    def passed(self) -> bool:
        return self.c1_hat > 0 and self.support_ok and self.alpha_hat > 0


def _lookup(K: sp.csr_matrix, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    return np.asarray(K[rows, cols]).ravel()


def _ratio_min(num: sp.csr_matrix, den: sp.csr_matrix) -> float:
    den = den.tocoo()
    if den.nnz == 0:
        return 0.0
    top = _lookup(sp.csr_matrix(num), den.row, den.col)
    return float(np.min(top / den.data))


def audit_compat(k: Kernel, h: float, hp: float) -> CompatAudit:
    """Observed constants of the ``(h, h')`` sandwich and of ``p_2 >= alpha p_1``.

    The sandwich constants use rows at least ``2 h'`` from the window edge (all
    rows when there are none); the ``alpha`` constants use every row.
    """
    if h > hp:
        raise ValueError("need h <= h'")
    space = k.space
    interior = space.margin >= 2 * hp - slack(hp)
    if not np.any(interior):
        interior = np.ones(space.n, dtype=bool)
    Wh = space.pairs_within(h).tocoo()
    sel = interior[Wh.row]
    rows, cols = Wh.row[sel], Wh.col[sel]
    Vh = k.volumes_m(h)
    c1 = float(np.min(_lookup(k.K, rows, cols) * Vh[rows])) if rows.size else 0.0
    Vhp = k.volumes_m(hp)
    coo = k.K.tocoo()
    sel = interior[coo.row]
    C1 = float(np.max(coo.data[sel] * Vhp[coo.row[sel]])) if np.any(sel) else 0.0
    Whp = space.pairs_within(hp)
    Whp.data[:] = 1.0
    outside = k.K - k.K.multiply(Whp)
    outside.eliminate_zeros()
    support_ok = outside.nnz == 0
    M = sp.diags(k.m)
    powers = [k.K]
    for _ in range(4):
        powers.append(sp.csr_matrix(powers[-1] @ M @ k.K))
    alpha = _ratio_min(powers[1], powers[0])
    alpha_k = {j: _ratio_min(powers[j], powers[j - 1]) for j in (2, 3, 4)}
    return CompatAudit(c1, C1, support_ok, alpha, alpha_k, int(interior.sum()))


# ------------------------------------------------------ Dirichlet forms


def _check_support(k: Kernel, f: np.ndarray):
    bad = (f != 0) & (k.space.margin < k.hp - slack(k.hp))
    if np.any(bad):
        raise SupportError("function is not supported at least h' inside the window")


def energy_pairs(k: Kernel, f: np.ndarray, g: np.ndarray | None = None) -> float:
    """``1/2 sum_x sum_y (f(x)-f(y))(g(x)-g(y)) p(x,y) m(x) m(y)``."""
    g = f if g is None else g
    coo = k.K.tocoo()
    df = f[coo.row] - f[coo.col]
    dg = g[coo.row] - g[coo.col]
    return 0.5 * math.fsum(df * dg * coo.data * k.m[coo.row] * k.m[coo.col])


def inner(k: Kernel, f: np.ndarray, g: np.ndarray) -> float:
    return math.fsum(f * g * k.m)


def dirichlet_forms(k: Kernel, f: np.ndarray, check_support: bool = True) -> tuple[float, float]:
    """``(E(f,f), E*(f,f))`` with ``E* = <f,(I - P^2) f> = ||f||^2 - ||Pf||^2``."""
    f = np.asarray(f, dtype=float)
    if check_support:
        _check_support(k, f)
    E = energy_pairs(k, f)
    Pf = k.apply(f)
    Es = inner(k, f, f) - inner(k, Pf, Pf)
    return E, Es


def energy_operator(k: Kernel, f: np.ndarray) -> float:
    """``<f, (I - P) f>``, the inner-product form of ``E(f, f)``."""
    return inner(k, f, f - k.apply(f))


def grad_P(k: Kernel, f: np.ndarray, x: int | None = None):
    """``|grad_P f|(x) = (sum_y (f(y)-f(x))^2 p(x,y) m(y))^(1/2)``; all points if ``x`` is None."""
    coo = k.K.tocoo()
    sq = np.zeros(k.n)
    np.add.at(sq, coo.row, (f[coo.col] - f[coo.row]) ** 2 * coo.data * k.m[coo.col])
    g = np.sqrt(sq)
    return g if x is None else float(g[x])


def integration_by_parts_check(k: Kernel, f: np.ndarray, g: np.ndarray) -> float:
    """``|<(I-P) f, g> - 1/2 sum sum (df)(dg) p m m|``."""
    lhs = inner(k, f - k.apply(f), g)
    return abs(lhs - energy_pairs(k, f, g))


# ------------------------------------------------------- lemma suite


@dataclass
class LemmaReport:
    checks: dict
    violations: dict
    examples: list

    @property
    def total_checks(self) -> int:
        return sum(self.checks.values())

    @property
    def total_violations(self) -> int:
        return sum(self.violations.values())


LEMMAS = ("symmetry", "chapman_kolmogorov", "diagonal_monotone", "cauchy_schwarz",
          "contraction", "form_comparison", "energy_bound", "positivity")


def lemma_suite(k: Kernel, n_checks: int, seed: int = 0, max_step: int = 8,
                alpha: float | None = None, tol: float = 1e-12) -> LemmaReport:
    """Seeded spot checks of the basic kernel lemmas.

    Rows ``p_j`` for ``j <= 2 * max_step`` are precomputed by the sparse
    iteration path.  The positivity check runs only when ``alpha > 0`` (by
    default the audited ``alpha_hat``); otherwise those draws are skipped.
    """
    rng = np.random.default_rng(seed)
    n = k.n
    if alpha is None:
        alpha = audit_compat(k, min(k.h, k.hp), k.hp).alpha_hat
    P = [None, k.dense()]
    for _ in range(2 * max_step - 1):
        P.append(k.apply(P[-1]))
    checks = dict.fromkeys(LEMMAS, 0)
    viol = dict.fromkeys(LEMMAS, 0)
    examples = []

    def record(name, bad, detail):
        checks[name] += 1
        if bad:
            viol[name] += 1
            if len(examples) < 20:
                examples.append((name, detail))

    names = list(LEMMAS)
    done = 0
    while done < n_checks:
        name = names[done % len(names)]
        x, y = rng.integers(n, size=2)
        if name == "symmetry":
            j = int(rng.integers(1, 2 * max_step + 1))
            a, b = P[j][x, y], P[j][y, x]
            record(name, abs(a - b) > tol * max(abs(a), abs(b), P[j].max()), (j, x, y, a, b))
        elif name == "chapman_kolmogorov":
            a = int(rng.integers(1, max_step + 1))
            b = int(rng.integers(1, max_step + 1))
            lhs = P[a + b][x, y]
            rhs = math.fsum(P[a][x] * P[b][:, y] * k.m)
            record(name, abs(lhs - rhs) > tol * max(P[a + b].max(), 1e-300) * 10, (a, b, x, y, lhs, rhs))
        elif name == "diagonal_monotone":
            j = int(rng.integers(1, max_step))
            a, b = P[2 * j][x, x], P[2 * j + 2][x, x]
            record(name, b > a * (1 + tol) + tol * P[2].max(), (j, x, a, b))
        elif name == "cauchy_schwarz":
            j = int(rng.integers(1, max_step + 1))
            q = P[2 * j]
            lhs = q[x, y] ** 2
            rhs = q[x, x] * q[y, y]
            record(name, lhs > rhs * (1 + 1e-10) + tol * q.max() ** 2, (j, x, y, lhs, rhs))
        else:
            f = rng.standard_normal(n)
            if name == "contraction":
                Pf = k.apply(f)
                n1 = (math.fsum(np.abs(Pf) * k.m), math.fsum(np.abs(f) * k.m))
                n2 = (inner(k, Pf, Pf), inner(k, f, f))
                ni = (np.max(np.abs(Pf)), np.max(np.abs(f)))
                bad = any(a > b * (1 + tol) for a, b in (n1, n2, ni))
                record(name, bad, (n1, n2, ni))
            elif name == "form_comparison":
                E, Es = dirichlet_forms(k, f, check_support=False)
                record(name, Es > 2 * E + tol * inner(k, f, f), (E, Es))
            elif name == "energy_bound":
                E = energy_pairs(k, f)
                nf = inner(k, f, f)
                record(name, E > 2 * nf * (1 + tol), (E, nf))
            elif name == "positivity":
                if alpha <= 0:
                    done += 1
                    continue
                g = np.abs(f)
                h1 = k.apply(g) - 0.5 * alpha * g
                h2 = k.apply(h1) - 0.5 * alpha * h1
                record(name, np.min(h2) < -1e-12 * max(1.0, g.max()), float(np.min(h2)))
        done += 1
    return LemmaReport(checks, viol, examples)


# --------------------------------------------------------------- dumps


def dump_kernel(k: Kernel) -> str:
    coo = sp.triu(k.K).tocoo()
    order = np.lexsort((coo.col, coo.row))
    lines = [f"kernel {k.n} {coo.nnz}"]
    lines += [f"m {i} {repr(float(v))}" for i, v in enumerate(k.m)]
    lines += [f"p {coo.row[i]} {coo.col[i]} {repr(float(coo.data[i]))}" for i in order]
    return "\n".join(lines) + "\n"


def load_kernel(text: str, space: Space | None = None, h: float = 1.0, hp: float = 1.0) -> Kernel:
    """Parse a kernel dump.  Without a space the hop metric of the support graph is used."""
    from .space import GraphParseError, graph_space

    n = nnz = None
    m = {}
    rows, cols, vals = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        tok = line.split()
        try:
            if tok[0] == "kernel" and len(tok) == 3 and n is None:
                n, nnz = int(tok[1]), int(tok[2])
            elif tok[0] == "m" and len(tok) == 3 and n is not None:
                m[int(tok[1])] = float(tok[2])
            elif tok[0] == "p" and len(tok) == 4 and n is not None:
                i, j, v = int(tok[1]), int(tok[2]), float(tok[3])
                if i > j or not (0 <= i < n and 0 <= j < n):
                    raise ValueError
                rows.append(i)
                cols.append(j)
                vals.append(v)
            else:
                raise ValueError
        except ValueError:
            raise GraphParseError(f"line {lineno}: malformed: {raw!r}") from None
    if n is None:
        raise GraphParseError("line 1: missing 'kernel <n> <nnz>' header")
    if len(vals) != nnz or len(m) != n:
        raise GraphParseError("entry counts do not match the header")
    rows, cols, vals = np.array(rows), np.array(cols), np.array(vals)
    off = rows != cols
    R = np.concatenate([rows, cols[off]])
    C = np.concatenate([cols, rows[off]])
    D = np.concatenate([vals, vals[off]])
    K = sp.csr_matrix((D, (R, C)), shape=(n, n))
    if space is None:
        edges = [(int(a), int(b)) for a, b in zip(rows[off], cols[off])]
        space = graph_space(np.ones(n), edges)
    return Kernel(space, K, np.array([m[i] for i in range(n)]), h, hp, name="loaded")
