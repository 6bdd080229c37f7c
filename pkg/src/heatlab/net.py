"""Greedy epsilon-nets, their audits, chains and function transfers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components, shortest_path

from .space import Space, ball_volume, format_graph, slack


class NoChain(Exception):
    pass


@dataclass(eq=False)
class Net:
    parent: Space
    eps: float
    vertices: np.ndarray
    edges: np.ndarray
    m: np.ndarray
    _dG: np.ndarray | None = None

    @property
    def size(self) -> int:
        return len(self.vertices)

    def adjacency(self) -> sp.csr_matrix:
        k = self.size
        e = self.edges
        data = np.ones(2 * len(e))
        rows = np.concatenate([e[:, 0], e[:, 1]]) if len(e) else np.zeros(0, int)
        cols = np.concatenate([e[:, 1], e[:, 0]]) if len(e) else np.zeros(0, int)
        return sp.csr_matrix((data, (rows, cols)), shape=(k, k))

    @property
    def graph_distance(self) -> np.ndarray:
        """Hop metric ``d_G`` between net vertices (``inf`` across components)."""
        if self._dG is None:
            self._dG = shortest_path(self.adjacency(), unweighted=True)
        return self._dG

    @property
    def connected(self) -> bool:
        return connected_components(self.adjacency(), directed=False)[0] <= 1

    def export(self) -> str:
        return format_graph(self.m, [tuple(map(int, e)) for e in self.edges],
                            comments={"eps": repr(float(self.eps))})


def build_net(space: Space, eps: float) -> Net:
    """Greedy maximal ``eps``-separated set in index order, with edges at ``d <= 3 eps``."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if space.resolution and space.kind in ("euclidean_radial", "broken_line") \
            and eps < 2 * space.resolution - slack(eps):
        raise ValueError("eps below the grid resolution")
    covered = np.zeros(space.n, dtype=bool)
    verts = []
    for x in range(space.n):
        if covered[x]:
            continue
        verts.append(x)
        idx, _ = space.ball(x, eps)
        covered[idx] = True
    verts = np.asarray(verts, dtype=np.int64)
    edges = _net_edges(space, verts, 3 * eps)
    m = np.array([ball_volume(space, int(v), eps) for v in verts])
    return Net(space, float(eps), verts, edges, m)


def _net_edges(space: Space, verts: np.ndarray, r: float) -> np.ndarray:
    pos = {int(v): i for i, v in enumerate(verts)}
    out = []
    for i, v in enumerate(verts):
        idx, d = space.ball(int(v), r)
        for j, dd in zip(idx, d):
            k = pos.get(int(j))
            if k is not None and k > i and dd > 0:
                out.append((i, k))
    return np.asarray(out, dtype=np.int64).reshape(-1, 2)


@dataclass
class NetAudit:
    separated: bool
    disjoint_half_balls: bool
    covering: bool
    edge_rule: bool
    positive_weights: bool
    max_degree: int
    overlap: int
    delta: float
    lower_constant: float
    A_hat: float
    connected: bool
    pairs: int

    @property
    def structural_ok(self) -> bool:
        return (self.separated and self.disjoint_half_balls and self.covering
                and self.edge_rule and self.positive_weights)


def audit_net(net: Net, probe_pairs: int = 10000, delta: float | None = None,
              seed: int = 0) -> NetAudit:
    """Check the net properties and fit the metric comparison constants.

    The lower constant is ``min 3 eps d_G / d`` over vertex pairs and ``A_hat`` is
    the least ``A`` with ``d_G <= A d + A``.  Both use every vertex pair when there
    are at most ``probe_pairs`` of them, otherwise a seeded sample plus all edges.
    """
    space = net.parent
    eps = net.eps
    delta = 2 * eps if delta is None else delta
    verts = net.vertices
    k = net.size
    # separation and disjointness of the half balls
    half = np.zeros(space.n, dtype=np.int64)
    cover = np.zeros(space.n, dtype=bool)
    near = np.zeros(space.n, dtype=np.int64)
    Dv = np.empty((k, k))
    for i, v in enumerate(verts):
        d = space.distances_from(int(v))
        half += d <= eps / 2 + slack(eps)
        cover |= d <= eps + slack(eps)
        near += d <= delta + slack(delta)
        Dv[i] = d[verts]
    off = ~np.eye(k, dtype=bool)
    separated = bool(np.all(Dv[off] > eps + slack(eps)))
    disjoint = bool(np.all(half <= 1))
    covering = bool(np.all(cover))
    overlap = int(near.max())
    adj = net.adjacency()
    deg = np.asarray(adj.sum(axis=1)).ravel()
    max_degree = int(deg.max()) if k else 0
    total_pairs = k * (k - 1) // 2
    rng = np.random.default_rng(seed)
    if total_pairs <= probe_pairs:
        pi, pj = np.triu_indices(k, 1)
    else:
        pi = rng.integers(k, size=probe_pairs)
        pj = rng.integers(k, size=probe_pairs)
        keep = pi != pj
        pi = np.concatenate([pi[keep], net.edges[:, 0]])
        pj = np.concatenate([pj[keep], net.edges[:, 1]])
    dG = net.graph_distance
    d = Dv[pi, pj]
    g = dG[pi, pj]
    fin = np.isfinite(g)
    lower = float(np.min(3 * eps * g[fin] / d[fin])) if np.any(fin) else math.inf
    A_hat = float(np.max(g[fin] / (d[fin] + 1.0))) if np.any(fin) else 0.0
    # edge rule: {u,v} is an edge iff 0 < d <= 3 eps
    want = np.triu((Dv > 0) & (Dv <= 3 * eps + slack(eps)), 1)
    have = np.zeros((k, k), dtype=bool)
    if len(net.edges):
        have[np.minimum(net.edges[:, 0], net.edges[:, 1]),
             np.maximum(net.edges[:, 0], net.edges[:, 1])] = True
    edge_rule = bool(np.array_equal(want, have))
    return NetAudit(separated, disjoint, covering, edge_rule, bool(np.all(net.m > 0)),
                    max_degree, overlap, float(delta), lower, A_hat, net.connected, len(pi))


@dataclass
class Chain:
    points: list
    length: float
    hops: int
    ratio: float


def find_chain(space: Space, b: float, x: int, y: int) -> Chain:
    """Fewest-hop chain from ``x`` to ``y`` with steps of length at most ``b``."""
    if b <= 0:
        raise ValueError("b must be positive")
    if x == y:
        return Chain([int(x)], 0.0, 0, 0.0)
    W = space.pairs_within(b)
    W.setdiag(0)
    W.eliminate_zeros()
    W.data[:] = 1.0
    dist, pred = shortest_path(W, unweighted=True, indices=int(x), return_predecessors=True)
    if not np.isfinite(dist[y]):
        raise NoChain(f"no {b}-chain between {x} and {y}")
    path = [int(y)]
    while path[-1] != x:
        path.append(int(pred[path[-1]]))
    path.reverse()
    length = math.fsum(space.dist(a, c) for a, c in zip(path, path[1:]))
    hops = len(path) - 1
    return Chain(path, length, hops, hops * b / space.dist(x, y))


def to_net(net: Net, g: np.ndarray) -> np.ndarray:
    """``g~(x) = V(x,eps)^-1 sum_{B(x,eps)} g mu``."""
    space = net.parent
    out = np.empty(net.size)
    for i, v in enumerate(net.vertices):
        idx, _ = space.ball(int(v), net.eps)
        out[i] = math.fsum(g[idx] * space.mass[idx]) / net.m[i]
    return out


def partition_of_unity(net: Net) -> sp.csr_matrix:
    """Matrix ``theta[p, x]`` of the partition of unity subordinate to the eps-balls."""
    space = net.parent
    rows, cols = [], []
    for i, v in enumerate(net.vertices):
        idx, _ = space.ball(int(v), net.eps)
        rows.append(idx)
        cols.append(np.full(idx.size, i))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    cnt = np.bincount(rows, minlength=space.n).astype(float)
    if np.any(cnt == 0):
        raise RuntimeError("parent point not covered by the net")
    return sp.csr_matrix((1.0 / cnt[rows], (rows, cols)), shape=(space.n, net.size))


def from_net(net: Net, f: np.ndarray) -> np.ndarray:
    """``f^ = sum_x f(x) theta_x``."""
    return partition_of_unity(net) @ np.asarray(f, dtype=float)


@dataclass
class QIAudit:
    a_hat: float
    b_hat: float
    surjective: bool
    witness: int | None
    C_hat: float
    pairs: int


def _b_of_a(a: float, d1: np.ndarray, d2: np.ndarray) -> float:
    return max(0.0, float(np.max(d2 - a * d1)), float(np.max(d1 / a - d2)))


def audit_quasi_isometry(phi, s1: Space, s2: Space, epsilon_surj: float,
                         probe_pairs: int = 10000, seed: int = 0) -> QIAudit:
    """Fit ``a^-1 d1 - b <= d2(phi, phi) <= a d1 + b`` on sampled pairs.

    ``a_hat`` is the least ``a >= 1`` whose optimal additive constant ``b(a)``
    does not exceed ``a``; ``b_hat = b(a_hat)``.
    """
    phi = np.asarray(phi, dtype=np.int64)
    n = s1.n
    rng = np.random.default_rng(seed)
    if n * (n - 1) // 2 <= probe_pairs:
        pi, pj = np.triu_indices(n, 1)
    else:
        pi = rng.integers(n, size=probe_pairs)
        pj = rng.integers(n, size=probe_pairs)
    cache1, cache2 = {}, {}
    d1 = np.empty(len(pi))
    d2 = np.empty(len(pi))
    for t, (a, b) in enumerate(zip(pi, pj)):
        if a not in cache1:
            cache1[a] = s1.distances_from(int(a))
        if phi[a] not in cache2:
            cache2[phi[a]] = s2.distances_from(int(phi[a]))
        d1[t] = cache1[a][b]
        d2[t] = cache2[phi[a]][phi[b]]
    if len(pi) == 0:
        a_hat, b_hat = 1.0, 0.0
    elif _b_of_a(1.0, d1, d2) <= 1.0:
        a_hat, b_hat = 1.0, _b_of_a(1.0, d1, d2)
    else:
        lo, hi = 1.0, 2.0
        while _b_of_a(hi, d1, d2) > hi:
            hi *= 2
        for _ in range(100):
            mid = 0.5 * (lo + hi)
            if _b_of_a(mid, d1, d2) <= mid:
                hi = mid
            else:
                lo = mid
        a_hat, b_hat = hi, _b_of_a(hi, d1, d2)
    # epsilon-surjectivity
    image = np.unique(phi)
    best = np.full(s2.n, np.inf)
    for v in image:
        best = np.minimum(best, s2.distances_from(int(v)))
    far = best > epsilon_surj + slack(epsilon_surj)
    witness = int(np.flatnonzero(far)[0]) if np.any(far) else None
    V1 = s1.ball_volumes(1.0)
    V2 = s2.ball_volumes(1.0)[phi]
    C = float(np.max(np.maximum(V1 / V2, V2 / V1)))
    return QIAudit(float(a_hat), float(b_hat), witness is None, witness, C, len(pi))


def net_space(nt: Net) -> Space:
    """The net as a graph space: hop metric, vertex weights ``V(x, eps)``."""
    from .space import graph_space

    return graph_space(nt.m, [tuple(map(int, e)) for e in nt.edges], kind="net")
