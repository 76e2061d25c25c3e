"""Sparse undirected graphs, group labels, and partition bookkeeping.

Everything Ncut-related lives here: per-cluster cut and volume caches,
the O(deg) move delta, and the balance metric.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (
    EmptyCluster,
    GraphError,
    GroupError,
    IsolatedNode,
    NegativeWeight,
    PartitionError,
    SelfLoop,
    WouldEmptyCluster,
    WrongSource,
)


class Graph:
    """Immutable weighted undirected graph stored as symmetric CSR.

    Every node must have positive degree.
    """

    def __init__(self, adjacency: sp.csr_array):
        adjacency = sp.csr_array(adjacency, dtype=np.float64)
        adjacency.sum_duplicates()
        adjacency.sort_indices()
        n = adjacency.shape[0]
        if adjacency.shape != (n, n):
            raise GraphError("adjacency must be square")
        if adjacency.nnz and adjacency.data.min() < 0:
            raise NegativeWeight("edge weights must be positive")
        if abs(adjacency - adjacency.T).sum() > 0:
            raise GraphError("adjacency must be symmetric")
        diag = adjacency.diagonal()
        if np.any(diag != 0):
            raise SelfLoop(int(np.flatnonzero(diag)[0]))
        degrees = np.asarray(adjacency.sum(axis=1)).ravel()
        if np.any(degrees <= 0):
            raise IsolatedNode(int(np.flatnonzero(degrees <= 0)[0]))

        adjacency.data.setflags(write=False)
        degrees.setflags(write=False)
        self.adjacency = adjacency
        self.n = n
        self.degrees = degrees
        self.total_volume = float(degrees.sum())
        self.inv_sqrt_degrees = 1.0 / np.sqrt(degrees)
        self.inv_sqrt_degrees.setflags(write=False)

    @property
    def num_edges(self) -> int:
        """Number of undirected edges with nonzero weight."""
        return self.adjacency.nnz // 2

    def neighbors(self, i: int):
        a = self.adjacency
        lo, hi = a.indptr[i], a.indptr[i + 1]
        return a.indices[lo:hi], a.data[lo:hi]

    def laplacian_matvec(self, X: np.ndarray) -> np.ndarray:
        """L @ X with L = D - W, never materialized."""
        if X.ndim == 1:
            return self.degrees * X - self.adjacency @ X
        return self.degrees[:, None] * X - self.adjacency @ X

    def normalized_laplacian_matvec(self, X: np.ndarray) -> np.ndarray:
        """D^{-1/2} L D^{-1/2} @ X via diagonal and sparse products."""
        s = self.inv_sqrt_degrees if X.ndim == 1 else self.inv_sqrt_degrees[:, None]
        return s * self.laplacian_matvec(s * X)

    def edges(self):
        """Yield (i, j, w) once per undirected edge, i < j."""
        coo = sp.triu(self.adjacency, k=1).tocoo()
        yield from zip(coo.row.tolist(), coo.col.tolist(), coo.data.tolist())

    def __repr__(self):
        return f"Graph(n={self.n}, edges={self.num_edges})"


def build_graph(edges, n: int | None = None) -> Graph:
    """Build a symmetric graph from (i, j) or (i, j, w) tuples.

    Duplicate entries are summed, and an (i, j) entry implies the (j, i)
    weight, so listing both directions doubles the weight.
    """
    rows, cols, weights = [], [], []
    for e in edges:
        i, j = int(e[0]), int(e[1])
        w = float(e[2]) if len(e) > 2 else 1.0
        if i == j:
            raise SelfLoop(i)
        if not w > 0:
            raise NegativeWeight(f"edge ({i}, {j}) has non-positive weight {w}")
        rows.append(i)
        cols.append(j)
        weights.append(w)
    if n is None:
        n = max(max(rows), max(cols)) + 1 if rows else 0
    if n <= 0:
        raise GraphError("graph must have at least one node")
    rows = np.asarray(rows, dtype=np.int64)
    cols = np.asarray(cols, dtype=np.int64)
    if rows.size and (min(rows.min(), cols.min()) < 0 or max(rows.max(), cols.max()) >= n):
        raise GraphError(f"node ids must lie in [0, {n})")
    w = np.asarray(weights, dtype=np.float64)
    upper = sp.coo_array((w, (rows, cols)), shape=(n, n))
    return Graph((upper + upper.T).tocsr())


@dataclass(frozen=True)
class GroupAssignment:
    """Node-to-group map with cached group sizes.

    The one-hot indicator matrix is never stored; ``indicator()`` builds it
    on demand.
    """

    phi: np.ndarray
    m: int

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=np.int64)
        if phi.ndim != 1:
            raise GroupError("phi must be one-dimensional")
        if phi.size and (phi.min() < 0 or phi.max() >= self.m):
            raise GroupError(f"group ids must lie in [0, {self.m})")
        counts = np.bincount(phi, minlength=self.m)
        if np.any(counts == 0):
            raise GroupError(f"group {int(np.flatnonzero(counts == 0)[0])} is empty")
        phi.setflags(write=False)
        counts.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_labels(cls, phi, m: int | None = None) -> "GroupAssignment":
        phi = np.asarray(phi, dtype=np.int64)
        return cls(phi, int(phi.max()) + 1 if m is None else m)

    @property
    def n(self) -> int:
        return self.phi.size

    @property
    def proportions(self) -> np.ndarray:
        return self.counts / self.n

    def indicator(self) -> np.ndarray:
        M = np.zeros((self.n, self.m))
        M[np.arange(self.n), self.phi] = 1.0
        return M


@dataclass
class PartitionState:
    """Cluster labels with cut, volume, size and group-count caches.

    The caches make single-node moves O(deg). ``cut[l]`` counts every edge
    leaving cluster ``l``, so the sum over clusters counts each
    inter-cluster edge twice.
    """

    labels: np.ndarray
    k: int
    cut: np.ndarray
    vol: np.ndarray
    sizes: np.ndarray
    group_counts: np.ndarray | None = None
    phi: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def from_labels(cls, g: Graph, labels, k: int | None = None,
                    ga: GroupAssignment | None = None,
                    allow_empty: bool = False) -> "PartitionState":
        labels = np.array(labels, dtype=np.int64)
        if labels.shape != (g.n,):
            raise PartitionError(f"expected {g.n} labels, got {labels.shape}")
        if k is None:
            k = int(labels.max()) + 1
        if labels.min() < 0 or labels.max() >= k:
            raise PartitionError(f"labels must lie in [0, {k})")
        sizes = np.bincount(labels, minlength=k)
        if not allow_empty and np.any(sizes == 0):
            raise EmptyCluster(int(np.flatnonzero(sizes == 0)[0]))
        cut, vol = _cut_and_volume(g, labels, k)
        counts = phi = None
        if ga is not None:
            if ga.n != g.n:
                raise PartitionError("group assignment size does not match graph")
            phi = ga.phi
            counts = _group_counts(phi, labels, ga.m, k)
        return cls(labels, k, cut, vol, sizes, counts, phi)

    def copy(self) -> "PartitionState":
        return PartitionState(
            self.labels.copy(), self.k, self.cut.copy(), self.vol.copy(),
            self.sizes.copy(),
            None if self.group_counts is None else self.group_counts.copy(),
            self.phi,
        )

    def check(self, g: Graph, atol: float = 1e-9) -> None:
        """Compare caches with a from-scratch recomputation."""
        cut, vol = _cut_and_volume(g, self.labels, self.k)
        if not (np.allclose(cut, self.cut, rtol=0, atol=atol)
                and np.allclose(vol, self.vol, rtol=0, atol=atol)):
            raise PartitionError("cut/volume caches are stale")
        if not np.array_equal(np.bincount(self.labels, minlength=self.k), self.sizes):
            raise PartitionError("size cache is stale")
        if self.group_counts is not None:
            m = self.group_counts.shape[0]
            if not np.array_equal(_group_counts(self.phi, self.labels, m, self.k),
                                  self.group_counts):
                raise PartitionError("group-count cache is stale")

    def members(self, l: int) -> np.ndarray:
        return np.flatnonzero(self.labels == l)


def _cut_and_volume(g: Graph, labels, k):
    a = g.adjacency
    rows = np.repeat(np.arange(g.n), np.diff(a.indptr))
    lr = labels[rows]
    crossing = lr != labels[a.indices]
    cut = np.bincount(lr[crossing], weights=a.data[crossing], minlength=k)
    vol = np.bincount(labels, weights=g.degrees, minlength=k)
    return cut.astype(np.float64), vol.astype(np.float64)


def _group_counts(phi, labels, m, k):
    return np.bincount(phi * k + labels, minlength=m * k).reshape(m, k)


def _ratio(cut, vol):
    # empty clusters only occur transiently during repairs; they contribute 0
    return cut / vol if vol > 0 else 0.0


def ncut(g: Graph, p: PartitionState) -> float:
    """Sum over clusters of cut(C_l) / vol(C_l)."""
    empty = np.flatnonzero(p.vol <= 0)
    if empty.size:
        raise EmptyCluster(int(empty[0]))
    return float(np.sum(p.cut / p.vol))


def cluster_weights(g: Graph, p: PartitionState, i: int) -> np.ndarray:
    """z[l] = total weight from node ``i`` into cluster ``l``."""
    nbrs, w = g.neighbors(i)
    return np.bincount(p.labels[nbrs], weights=w, minlength=p.k)


def _delta(g, p, i, l, l2, z):
    d = g.degrees[i]
    cl, vl = p.cut[l], p.vol[l]
    c2, v2 = p.cut[l2], p.vol[l2]
    return (_ratio(cl - d + 2 * z[l], vl - d) - _ratio(cl, vl)
            + _ratio(c2 + d - 2 * z[l2], v2 + d) - _ratio(c2, v2))


def ncut_delta(g: Graph, p: PartitionState, i: int, l: int, l2: int) -> float:
    """Exact Ncut change from moving node ``i`` from cluster ``l`` to ``l2``."""
    if p.labels[i] != l:
        raise WrongSource(f"node {i} is in cluster {p.labels[i]}, not {l}")
    if l == l2:
        raise PartitionError("source and target clusters coincide")
    if p.sizes[l] == 1:
        raise WouldEmptyCluster(l)
    return float(_delta(g, p, i, l, l2, cluster_weights(g, p, i)))


def ncut_deltas(g: Graph, p: PartitionState, nodes, l: int, l2: int) -> np.ndarray:
    """Vectorized ``ncut_delta`` for many nodes sharing source ``l``.

    Empty source/target clusters are tolerated (their ratio counts as 0),
    which the rounding repairs rely on.
    """
    nodes = np.asarray(nodes, dtype=np.int64)
    rows = g.adjacency[nodes]
    z_l = rows @ (p.labels == l).astype(np.float64)
    z_2 = rows @ (p.labels == l2).astype(np.float64)
    d = g.degrees[nodes]
    cl, vl, c2, v2 = p.cut[l], p.vol[l], p.cut[l2], p.vol[l2]
    with np.errstate(divide="ignore", invalid="ignore"):
        src = np.where(vl - d > 0, (cl - d + 2 * z_l) / (vl - d), 0.0)
    return src - _ratio(cl, vl) + (c2 + d - 2 * z_2) / (v2 + d) - _ratio(c2, v2)


def apply_move(p: PartitionState, g: Graph, i: int, l2: int,
               allow_empty: bool = False) -> None:
    """Move node ``i`` to cluster ``l2`` updating every cache in O(deg)."""
    l = int(p.labels[i])
    if l == l2:
        return
    if p.sizes[l] == 1 and not allow_empty:
        raise WouldEmptyCluster(l)
    z = cluster_weights(g, p, i)
    d = g.degrees[i]
    p.cut[l] += 2 * z[l] - d
    p.cut[l2] += d - 2 * z[l2]
    p.vol[l] -= d
    p.vol[l2] += d
    p.sizes[l] -= 1
    p.sizes[l2] += 1
    if p.sizes[l] == 0:
        # snap accumulated rounding error on an emptied cluster
        p.cut[l] = 0.0
        p.vol[l] = 0.0
    if p.group_counts is not None:
        c = p.phi[i]
        p.group_counts[c, l] -= 1
        p.group_counts[c, l2] += 1
    p.labels[i] = l2


def balance(p: PartitionState, ga: GroupAssignment, exact: bool = False):
    """min over (group, cluster) of min(r_c / r_cl, r_cl / r_c).

    With ``exact=True`` the result is a ``Fraction``.
    """
    N = p.group_counts if p.group_counts is not None else \
        _group_counts(ga.phi, p.labels, ga.m, p.k)
    return count_balance(N, exact)


def count_balance(N, exact: bool = False):
    """Balance of an m x k group-count matrix; group totals are its row sums."""
    N = np.asarray(N)
    sizes = N.sum(axis=0)
    totals = N.sum(axis=1)
    n = int(sizes.sum())
    if np.any(N == 0):
        return Fraction(0) if exact else 0.0
    if exact:
        best = Fraction(1)
        for c in range(N.shape[0]):
            for l in range(N.shape[1]):
                # r_cl / r_c = n_cl * n / (|C_l| * |V_c|)
                q = Fraction(int(N[c, l]) * n, int(sizes[l]) * int(totals[c]))
                best = min(best, q, 1 / q)
        return best
    q = (N * n) / (sizes[None, :] * totals[:, None])
    return float(min(q.min(), (1.0 / q).min()))


def largest_component(g: Graph) -> np.ndarray:
    """Sorted node ids of the largest connected component."""
    _, comp = connected_components(g.adjacency, directed=False)
    biggest = np.argmax(np.bincount(comp))
    return np.flatnonzero(comp == biggest)


def component_count(adjacency) -> int:
    return connected_components(adjacency, directed=False)[0]


# -- text formats -------------------------------------------------------------

def read_edge_list(path, n: int | None = None) -> Graph:
    """Parse ``i j [w]`` lines; ``#`` starts a comment line."""
    return build_graph(parse_edge_lines(Path(path).read_text(encoding="utf-8")), n)


def parse_edge_lines(text):
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) not in (2, 3):
            raise GraphError(f"line {lineno}: expected 'i j [w]', got {line!r}")
        try:
            i, j = int(parts[0]), int(parts[1])
            w = float(parts[2]) if len(parts) == 3 else 1.0
        except ValueError as exc:
            raise GraphError(f"line {lineno}: {exc}") from None
        edges.append((i, j, w))
    return edges


def read_groups(path, n: int | None = None) -> GroupAssignment:
    """Parse ``i c`` lines; every node in [0, n) must appear exactly once."""
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise GroupError(f"line {lineno}: expected 'i c', got {line!r}")
        pairs.append((int(parts[0]), int(parts[1])))
    if n is None:
        n = len(pairs)
    phi = np.full(n, -1, dtype=np.int64)
    for i, c in pairs:
        if not 0 <= i < n:
            raise GroupError(f"node id {i} outside [0, {n})")
        if phi[i] != -1:
            raise GroupError(f"node {i} listed twice")
        if c < 0:
            raise GroupError(f"negative group id for node {i}")
        phi[i] = c
    if np.any(phi < 0):
        raise GroupError(f"node {int(np.flatnonzero(phi < 0)[0])} has no group")
    return GroupAssignment.from_labels(phi)


def write_edge_list(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# n={g.n} edges={g.num_edges}\n")
        for i, j, w in g.edges():
            fh.write(f"{i} {j}\n" if w == 1.0 else f"{i} {j} {w!r}\n")


def write_groups(ga: GroupAssignment, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, c in enumerate(ga.phi.tolist()):
            fh.write(f"{i} {c}\n")
