"""Finite windowed models of metric measure spaces.

A :class:`Space` is a finite point set with a metric, a positive mass per point
and a window.  Continuous spaces are replaced by uniform grids whose points are
cell midpoints carrying the cell mass; graph spaces carry vertex weights and the
hop metric.  Every point knows its distance to the truncation boundary
(``margin``) so estimators can refuse or flag balls that feel the window.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import dijkstra, shortest_path
from scipy.spatial import cKDTree
from scipy.special import hyp2f1

KINDS = ("euclidean_radial", "broken_line", "lattice", "tree", "bipartite", "custom_graph")
GRAPH_METRICS = ("graph",)


def slack(r: float) -> float:
    """Absolute tolerance used for closed-ball membership ``d <= r``."""
    return 1e-9 * max(1.0, abs(r))


class GraphParseError(ValueError):
    pass


@dataclass(eq=False)
class Space:
    """Immutable finite metric measure space.

    ``metric`` is one of ``euclidean`` (coords, l2), ``l1`` (coords, l1),
    ``torus`` (coords, periodic l1 with period ``params['side']``) or
    ``graph`` (hop distance on ``adjacency``).
    """

    kind: str
    mass: np.ndarray
    metric: str
    margin: np.ndarray
    coords: np.ndarray | None = None
    adjacency: sp.csr_matrix | None = None
    resolution: float = 0.0
    params: dict = field(default_factory=dict)
    _diam: float | None = None
    _tree: cKDTree | None = field(default=None, repr=False)

    def __post_init__(self):
        self.mass = np.asarray(self.mass, dtype=float)
        self.mass.setflags(write=False)
        self.margin = np.asarray(self.margin, dtype=float)
        self.margin.setflags(write=False)
        if self.coords is not None:
            self.coords = np.asarray(self.coords, dtype=float)
            self.coords.setflags(write=False)
        if self.mass.size == 0:
            raise ValueError("space has no points")
        if not np.all(self.mass > 0):
            raise ValueError("all masses must be strictly positive")

    @property
    def n(self) -> int:
        return int(self.mass.size)

    @property
    def diam(self) -> float:
        if self._diam is None:
            self._diam = _graph_diameter(self.adjacency)
        return self._diam

    @property
    def total_mass(self) -> float:
        return math.fsum(self.mass)

    def _kdtree(self) -> cKDTree:
        if self._tree is None:
            if self.metric == "torus":
                side = float(self.params["side"])
                self._tree = cKDTree(self.coords, boxsize=side)
            else:
                self._tree = cKDTree(self.coords)
        return self._tree

    def _p(self) -> float:
        return 2.0 if self.metric == "euclidean" else 1.0

    def dist(self, x: int, y: int) -> float:
        return float(self.distances_from(x)[y]) if self.metric == "graph" else float(
            self._coord_dist(self.coords[x][None, :], self.coords[y][None, :])[0])

    def _coord_dist(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        diff = np.abs(a - b)
        if self.metric == "torus":
            side = float(self.params["side"])
            diff = np.minimum(diff, side - diff)
        if self.metric == "euclidean":
            return np.sqrt(np.sum(diff * diff, axis=1))
        return np.sum(diff, axis=1)

    def distances_from(self, x: int) -> np.ndarray:
        """Distances from ``x`` to every point (``inf`` across components)."""
        if self.metric == "graph":
            return shortest_path(self.adjacency, unweighted=True, indices=int(x))
        return self._coord_dist(self.coords, self.coords[int(x)][None, :])

    def dist_pairs(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Vectorized distances for coordinate metrics."""
        if self.metric == "graph":
            out = np.empty(len(rows))
            for x in np.unique(rows):
                sel = rows == x
                out[sel] = self.distances_from(x)[cols[sel]]
            return out
        return self._coord_dist(self.coords[rows], self.coords[cols])

    def ball(self, x: int, r: float) -> tuple[np.ndarray, np.ndarray]:
        """Indices (sorted) and distances of the closed ball ``B(x, r)``."""
        if self.metric == "graph":
            hop = self.adjacency.copy()
            hop.data[:] = 1.0
            d = dijkstra(hop, indices=int(x), limit=r + slack(r))
            idx = np.flatnonzero(d <= r + slack(r))
            return idx, d[idx]
        idx = np.array(sorted(self._kdtree().query_ball_point(
            self.coords[int(x)], r + slack(r), p=self._p())), dtype=np.int64)
        d = self._coord_dist(self.coords[idx], self.coords[int(x)][None, :])
        keep = d <= r + slack(r)
        return idx[keep], d[keep]

    def pairs_within(self, r: float) -> sp.csr_matrix:
        """Sparse matrix of all ordered pairs with ``d <= r``.

        Stored values are ``d + 1`` so that the diagonal (distance zero) is kept
        as an explicit entry; subtract one to recover the distance.
        """
        tol = r + slack(r)
        if self.metric == "graph":
            rows, cols, dists = _graph_pairs(self.adjacency, r)
        else:
            pairs = self._kdtree().query_pairs(tol, p=self._p(), output_type="ndarray")
            if len(pairs):
                d = self._coord_dist(self.coords[pairs[:, 0]], self.coords[pairs[:, 1]])
                keep = d <= tol
                pairs, d = pairs[keep], d[keep]
            else:
                d = np.zeros(0)
            diag = np.arange(self.n)
            rows = np.concatenate([pairs[:, 0], pairs[:, 1], diag]) if len(pairs) else diag
            cols = np.concatenate([pairs[:, 1], pairs[:, 0], diag]) if len(pairs) else diag
            dists = np.concatenate([d, d, np.zeros(self.n)])
        mat = sp.csr_matrix((dists + 1.0, (rows, cols)), shape=(self.n, self.n))
        mat.sort_indices()
        return mat

    def nearest(self, point) -> int:
        """Id of the grid point nearest to a coordinate (ties to the lower id)."""
        if self.coords is None:
            raise ValueError("graph spaces have no coordinates")
        p = np.atleast_1d(np.asarray(point, dtype=float))
        d = self._coord_dist(self.coords, p[None, :])
        return int(np.argmin(d))

    def ball_volumes(self, r: float) -> np.ndarray:
        """``V(x, r)`` for every point at once."""
        w = self.pairs_within(r)
        w.data[:] = 1.0
        return w @ self.mass


def _graph_pairs(adj: sp.csr_matrix, r: float):
    """All pairs within hop distance ``r`` by frontier expansion."""
    n = adj.shape[0]
    steps = int(math.floor(r + slack(r)))
    eye = sp.identity(n, format="csr", dtype=np.int32)
    reached = eye.copy()
    rows = [np.arange(n)]
    cols = [np.arange(n)]
    dists = [np.zeros(n)]
    a = (adj != 0).astype(np.int32)
    frontier = eye
    for k in range(1, steps + 1):
        nxt = (frontier @ a)
        nxt.data[:] = 1
        nxt = nxt - nxt.multiply(reached)
        nxt.eliminate_zeros()
        if nxt.nnz == 0:
            break
        coo = nxt.tocoo()
        rows.append(coo.row)
        cols.append(coo.col)
        dists.append(np.full(coo.nnz, float(k)))
        reached = reached + nxt
        reached.data[:] = 1
        frontier = nxt.tocsr()
    return np.concatenate(rows), np.concatenate(cols), np.concatenate(dists)


def _graph_diameter(adj: sp.csr_matrix) -> float:
    d = shortest_path(adj, unweighted=True)
    finite = d[np.isfinite(d)]
    return float(finite.max()) if finite.size else 0.0


def _adjacency(n: int, edges) -> sp.csr_matrix:
    edges = np.asarray(list(edges), dtype=np.int64).reshape(-1, 2)
    rows = np.concatenate([edges[:, 0], edges[:, 1]])
    cols = np.concatenate([edges[:, 1], edges[:, 0]])
    adj = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    adj.data[:] = 1.0
    adj.sort_indices()
    return adj


def _check_grid(W: float, rho: float):
    if rho <= 0:
        raise ValueError("resolution must be positive")
    if W <= 0:
        raise ValueError("window radius must be positive")
    if rho > W / 10 + slack(W):
        raise ValueError("resolution must satisfy rho <= W/10")


def radial_density(x: np.ndarray, alpha: float) -> np.ndarray:
    """Density ``(1 + |x|^2)^(alpha/2)`` at rows of ``x``."""
    x = np.atleast_2d(x)
    return (1.0 + np.sum(x * x, axis=1)) ** (alpha / 2.0)


def euclidean_radial(dim: int, alpha: float, W: float, rho: float) -> Space:
    """Grid ``rho * Z^dim`` inside the cube ``[-W, W]^dim`` with radial weights."""
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    _check_grid(W, rho)
    kmax = int(math.floor(W / rho + 1e-9))
    ticks = np.arange(-kmax, kmax + 1) * rho
    coords = np.array(list(itertools.product(ticks, repeat=dim)), dtype=float)
    mass = radial_density(coords, alpha) * rho ** dim
    margin = W - np.max(np.abs(coords), axis=1)
    return Space("euclidean_radial", mass, "euclidean", margin, coords=coords,
                 resolution=rho, params={"dim": dim, "alpha": alpha, "W": W, "rho": rho},
                 _diam=2.0 * W * math.sqrt(dim))


def broken_line(W: float, rho: float) -> Space:
    """Cell midpoints of the union of ``[n - 1/4, n + 1/4]`` for ``|n| + 1/4 <= W``."""
    _check_grid(W, rho)
    N = int(math.floor(W - 0.25 + 1e-9))
    if N < 0:
        raise ValueError("window too small to contain any point")
    kmax = int(math.ceil(W / rho)) + 1
    centers = (np.arange(-kmax, kmax) + 0.5) * rho
    comp = np.round(centers)
    keep = (np.abs(centers - comp) <= 0.25 + 1e-12) & (np.abs(comp) <= N)
    x = centers[keep]
    if x.size == 0:
        raise ValueError("window too small to contain any point")
    return Space("broken_line", np.full(x.size, rho), "euclidean", W - np.abs(x),
                 coords=x[:, None], resolution=rho,
                 params={"W": W, "rho": rho, "components": 2 * N + 1},
                 _diam=2.0 * W)


def component_of(space: Space) -> np.ndarray:
    """Component index ``n`` of each broken-line point."""
    return np.round(space.coords[:, 0]).astype(np.int64)


def lattice(dim: int, side: int, periodic: bool = False, metric: str = "l1",
            weights=None) -> Space:
    """Box ``{0..side-1}^dim`` of ``Z^dim``.

    The default metric is the graph (l1) metric; ``metric='euclidean'`` gives the
    induced Euclidean metric.  ``periodic`` wraps the box into a torus.
    """
    if dim < 1 or side < 1:
        raise ValueError("lattice needs dim >= 1 and side >= 1")
    coords = np.array(list(itertools.product(range(side), repeat=dim)), dtype=float)
    mass = np.ones(len(coords)) if weights is None else np.asarray(weights, float)
    if periodic:
        if metric != "l1":
            raise ValueError("periodic lattices use the l1 metric")
        margin = np.full(len(coords), np.inf)
        diam = float(dim * (side // 2))
        met = "torus"
    else:
        margin = np.min(np.minimum(coords, side - 1 - coords), axis=1)
        diam = float(dim * (side - 1)) if metric == "l1" else math.sqrt(dim) * (side - 1)
        met = {"l1": "l1", "euclidean": "euclidean"}[metric]
    return Space("lattice", mass, met, margin, coords=coords, resolution=1.0,
                 params={"dim": dim, "side": side, "periodic": periodic, "metric": metric},
                 _diam=diam)


def regular_tree(degree: int, depth: int) -> Space:
    """Ball of radius ``depth`` about the root of the ``degree``-regular tree."""
    if degree < 3 or depth < 1:
        raise ValueError("tree needs degree >= 3 and depth >= 1")
    level = [0]
    edges = []
    frontier = [0]
    nxt_id = 1
    for lev in range(1, depth + 1):
        new = []
        for v in frontier:
            kids = degree if v == 0 else degree - 1
            for _ in range(kids):
                edges.append((v, nxt_id))
                level.append(lev)
                new.append(nxt_id)
                nxt_id += 1
        frontier = new
    level = np.asarray(level, dtype=float)
    return Space("tree", np.ones(nxt_id), "graph", depth - level,
                 adjacency=_adjacency(nxt_id, edges),
                 params={"degree": degree, "depth": depth, "level": level},
                 _diam=2.0 * depth)


def bipartite(a: int = 1, b: int = 1) -> Space:
    """Complete bipartite graph ``K_{a,b}`` (``K_2`` by default)."""
    if a < 1 or b < 1:
        raise ValueError("bipartite sides must be non-empty")
    edges = [(i, a + j) for i in range(a) for j in range(b)]
    n = a + b
    return Space("bipartite", np.ones(n), "graph", np.full(n, np.inf),
                 adjacency=_adjacency(n, edges), params={"a": a, "b": b},
                 _diam=1.0 if n == 2 else 2.0)


def graph_space(weights, edges, kind: str = "custom_graph") -> Space:
    weights = np.asarray(weights, dtype=float)
    n = weights.size
    return Space(kind, weights, "graph", np.full(n, np.inf),
                 adjacency=_adjacency(n, edges), params={})


def parse_graph(text: str) -> tuple[np.ndarray, list[tuple[int, int]], dict]:
    """Parse the line-oriented graph format; ``#`` lines carry metadata."""
    header = None
    weights: dict[int, float] = {}
    edges: list[tuple[int, int]] = []
    meta: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) >= 2:
                meta[parts[0]] = " ".join(parts[1:])
            continue
        tok = line.split()
        try:
            if tok[0] == "graph" and len(tok) == 3 and header is None:
                header = (int(tok[1]), int(tok[2]))
            elif tok[0] == "v" and len(tok) == 3 and header is not None:
                vid, w = int(tok[1]), float(tok[2])
                if not 0 <= vid < header[0] or vid in weights or not w > 0:
                    raise ValueError
                weights[vid] = w
            elif tok[0] == "e" and len(tok) == 3 and header is not None:
                u, v = int(tok[1]), int(tok[2])
                if not (0 <= u < header[0] and 0 <= v < header[0]) or u == v:
                    raise ValueError
                edges.append((u, v))
            else:
                raise ValueError
        except ValueError:
            raise GraphParseError(f"line {lineno}: malformed: {raw!r}") from None
    if header is None:
        raise GraphParseError("line 1: missing 'graph <n> <m>' header")
    n, m = header
    if len(edges) != m:
        raise GraphParseError(f"line {lineno}: expected {m} edges, found {len(edges)}")
    w = np.array([weights.get(i, 1.0) for i in range(n)])
    return w, edges, meta


def format_graph(weights, edges, comments: dict | None = None) -> str:
    lines = []
    for k, v in (comments or {}).items():
        lines.append(f"# {k} {v}")
    lines.append(f"graph {len(weights)} {len(edges)}")
    lines += [f"v {i} {repr(float(w))}" for i, w in enumerate(weights)]
    lines += [f"e {u} {v}" for u, v in edges]
    return "\n".join(lines) + "\n"


def custom_graph(path_or_text: str | Path) -> Space:
    text = str(path_or_text)
    if "\n" not in text and Path(text).exists():
        text = Path(text).read_text()
    w, edges, _ = parse_graph(text)
    return graph_space(w, edges)


def build_space(params: dict) -> Space:
    """Build a space from a flat description such as ``{'kind': 'lattice', 'dim': 2, 'side': 51}``."""
    kind = params.get("kind")
    if kind not in KINDS:
        raise ValueError(f"unsupported kind: {kind!r}")
    if kind == "euclidean_radial":
        return euclidean_radial(int(params.get("dim", 1)), float(params.get("alpha", 0.0)),
                                float(params["W"]), float(params["rho"]))
    if kind == "broken_line":
        return broken_line(float(params["W"]), float(params["rho"]))
    if kind == "lattice":
        return lattice(int(params.get("dim", 1)), int(params["side"]),
                       periodic=_truthy(params.get("periodic", False)),
                       metric=str(params.get("metric", "l1")))
    if kind == "tree":
        return regular_tree(int(params.get("degree", 3)), int(params["depth"]))
    if kind == "bipartite":
        return bipartite(int(params.get("a", 1)), int(params.get("b", 1)))
    return custom_graph(params["path"])


def _truthy(v) -> bool:
    if isinstance(v, str):
        return v.strip().lower() in ("1", "true", "yes", "on")
    return bool(v)


# ---------------------------------------------------------------- volumes


def radial_antiderivative(t, alpha: float):
    """``F(t) = int_0^t (1+s^2)^(alpha/2) ds`` in closed form."""
    t = np.asarray(t, dtype=float)
    return t * hyp2f1(-alpha / 2.0, 0.5, 1.5, -t * t)


def ball_volume(space: Space, x: int, r: float, exact: bool = False) -> float:
    """``V(x, r)``: mass of the closed ball.

    ``exact=True`` on a one-dimensional radial space integrates the density in
    closed form over ``[x - r, x + r]`` (no window truncation).
    """
    if r < 0:
        raise ValueError("radius must be non-negative")
    if exact:
        if space.kind != "euclidean_radial" or space.params["dim"] != 1:
            raise ValueError("exact mode needs a one-dimensional radial space")
        c = float(space.coords[x, 0])
        a = space.params["alpha"]
        return float(radial_antiderivative(c + r, a) - radial_antiderivative(c - r, a))
    idx, _ = space.ball(x, r)
    return math.fsum(space.mass[idx])


@dataclass
class VolumeProfile:
    center: int
    radii: np.ndarray
    volumes: np.ndarray
    truncated: np.ndarray

    @property
    def any_truncated(self) -> bool:
        return bool(np.any(self.truncated))


def volume_profile(space: Space, x: int, radii) -> VolumeProfile:
    radii = np.asarray(sorted(radii), dtype=float)
    d = space.distances_from(x)
    order = np.sort(d)
    csum = np.cumsum(space.mass[np.argsort(d, kind="stable")])
    vols = np.array([csum[np.searchsorted(order, r + slack(r), side="right") - 1]
                     if r + slack(r) >= 0 else 0.0 for r in radii])
    return VolumeProfile(int(x), radii, vols, radii > space.margin[x] + slack(radii.max()))


@dataclass
class DoublingProfile:
    radii: np.ndarray
    ratios: np.ndarray
    truncated: np.ndarray
    delta_hat: float
    vd1_violation: float
    growth: float
    verdict: str


def doubling_profile(space: Space, centers, radii, growth_limit: float = 1.5) -> DoublingProfile:
    """``C_D(r) = max_x V(x,2r)/V(x,r)`` with a fitted exponent and a verdict.

    The verdict is FAIL when the untruncated ratios grow by more than
    ``growth_limit`` from the smallest to the largest radius.
    """
    centers = list(centers)
    if not centers:
        raise ValueError("centers list is empty")
    radii = np.asarray(sorted(radii), dtype=float)
    both = np.concatenate([radii, 2 * radii])
    k = len(radii)
    V = np.empty((len(centers), 2 * k))
    for i, x in enumerate(centers):
        prof = volume_profile(space, x, both)
        lookup = dict(zip(prof.radii.tolist(), prof.volumes.tolist()))
        V[i] = [lookup[r] for r in both.tolist()]
    ratios = np.max(V[:, k:] / V[:, :k], axis=0)
    truncated = np.array([any(2 * r > space.margin[x] + slack(r) for x in centers) for r in radii])
    cd = float(np.max(ratios))
    delta = math.log2(cd) if cd > 0 else 0.0
    # e-vd1 style check: V(x,r)/V(x,s) <= C_D (r/s)^delta on the grid of radii
    worst = 0.0
    allr = np.concatenate([radii, 2 * radii])
    order = np.argsort(allr)
    for row in V:
        vv = row[order]
        rr = allr[order]
        for i in range(len(rr)):
            for j in range(i + 1, len(rr)):
                if rr[i] <= 0:
                    continue
                bound = cd * (rr[j] / rr[i]) ** delta
                worst = max(worst, vv[j] / vv[i] / bound - 1.0)
    ok = ~truncated
    use = ratios[ok] if np.any(ok) else ratios
    growth = float(use[-1] / use[0]) if len(use) > 1 else 1.0
    verdict = "FAIL" if growth > growth_limit else "PASS"
    return DoublingProfile(radii, ratios, truncated, delta, max(worst, 0.0), growth, verdict)


@dataclass
class ReverseDoubling:
    gamma_hat: float
    c_hat: float
    slopes: np.ndarray


def reverse_doubling(space: Space, centers, radii, b: float) -> ReverseDoubling:
    """Least-squares exponent of ``log V`` against ``log r``, minimized over centers."""
    radii = np.asarray(sorted(radii), dtype=float)
    if len(radii) < 3:
        raise ValueError("reverse doubling fit needs at least 3 radii")
    if not (b <= radii[0] and radii[-1] <= space.diam / 5 + slack(space.diam)):
        raise ValueError("radii must satisfy b <= r_min <= r_max <= diam/5")
    slopes = []
    consts = []
    lr = np.log(radii)
    for x in centers:
        V = volume_profile(space, x, radii).volumes
        slope = float(np.polyfit(lr, np.log(V), 1)[0])
        slopes.append(slope)
    gamma = float(min(slopes))
    for x in centers:
        V = volume_profile(space, x, radii).volumes
        for i in range(len(radii)):
            for j in range(i + 1, len(radii)):
                consts.append(V[j] / V[i] / (radii[j] / radii[i]) ** gamma)
    return ReverseDoubling(gamma, float(min(consts)), np.array(slopes))


def vd_infinity_verdict(profile: DoublingProfile, gamma_hat: float | None = None) -> str:
    """FAIL when doubling ratios grow or reverse doubling degenerates."""
    if profile.verdict == "FAIL":
        return "FAIL"
    if gamma_hat is not None and gamma_hat <= 0:
        return "FAIL"
    return "PASS"


def radial_ball_volume_exact(alpha: float, center: float, r: float) -> float:
    return float(radial_antiderivative(center + r, alpha) - radial_antiderivative(center - r, alpha))

