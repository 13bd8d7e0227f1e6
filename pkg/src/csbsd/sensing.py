"""Sparse-Bernoulli sensing matrices with fixed column weight.

A :class:`SensingGraph` is both the {0, +1, -1} matrix and the bipartite
graph that belief propagation walks.  Edges are stored column-major: the
``L`` edges of column ``i`` occupy ``[i*L, (i+1)*L)`` in the edge arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True, eq=False)
class SensingGraph:
    n: int
    m: int
    col_weight: int
    rows: np.ndarray     # (E,) row index j of each edge
    cols: np.ndarray     # (E,) column index i of each edge
    signs: np.ndarray    # (E,) +1.0 / -1.0
    seed: int | None = None
    col_map: np.ndarray | None = None   # original column ids after subselection

    def __post_init__(self):
        for name in ("rows", "cols", "signs"):
            arr = getattr(self, name)
            arr.setflags(write=False)
        if not (len(self.rows) == len(self.cols) == len(self.signs)):
            raise ValueError("edge arrays differ in length")

    @property
    def n_edges(self):
        return len(self.rows)

    @property
    def entries(self):
        return list(zip(self.rows.tolist(), self.cols.tolist(), self.signs.astype(int).tolist()))

    @cached_property
    def row_order(self):
        """Edge ids sorted by (row, col)."""
        return np.lexsort((self.cols, self.rows))

    @cached_property
    def row_ptr(self):
        counts = np.bincount(self.rows, minlength=self.m)
        return np.concatenate(([0], np.cumsum(counts)))

    @cached_property
    def row_weights(self):
        return np.diff(self.row_ptr)

    @cached_property
    def row_adjacency(self):
        out = [[] for _ in range(self.m)]
        for e in self.row_order:
            out[self.rows[e]].append((int(self.cols[e]), int(self.signs[e])))
        return out

    @cached_property
    def col_adjacency(self):
        out = [[] for _ in range(self.n)]
        for e in range(self.n_edges):
            out[self.cols[e]].append((int(self.rows[e]), int(self.signs[e])))
        return out

    def to_dense(self):
        phi = np.zeros((self.m, self.n))
        phi[self.rows, self.cols] = self.signs
        return phi

    def __eq__(self, other):
        if not isinstance(other, SensingGraph):
            return NotImplemented
        return (self.n, self.m, self.col_weight) == (other.n, other.m, other.col_weight) and \
            sorted(self.entries) == sorted(other.entries)


def _from_edges(n, m, l, rows, cols, signs, seed=None, col_map=None):
    order = np.lexsort((rows, cols))
    return SensingGraph(n, m, l,
                        np.ascontiguousarray(rows[order], dtype=np.int64),
                        np.ascontiguousarray(cols[order], dtype=np.int64),
                        np.ascontiguousarray(signs[order], dtype=np.float64),
                        seed=seed, col_map=col_map)


def generate(n, m, l, seed=None):
    """Random sensing graph: each column gets ``l`` distinct rows, random signs."""
    if not (n >= 1 and m >= 1):
        raise ValueError("n and m must be positive")
    if not 1 <= l <= m:
        raise ValueError(f"column weight l={l} must lie in [1, m={m}]")
    rng = np.random.default_rng(seed)
    # argsort of iid uniforms per column = uniform sample without replacement
    rows = np.sort(np.argsort(rng.random((n, m)), axis=1)[:, :l], axis=1).ravel()
    cols = np.repeat(np.arange(n), l)
    signs = np.where(rng.random(n * l) < 0.5, 1.0, -1.0)
    return _from_edges(n, m, l, rows, cols, signs, seed=seed)


def from_dense(phi):
    """Build a graph from a dense {0, +1, -1} matrix (tests, small cases)."""
    phi = np.asarray(phi)
    m, n = phi.shape
    rows, cols = np.nonzero(phi)
    weights = np.bincount(cols, minlength=n)
    l = int(weights[0]) if n else 0
    if np.any(weights != l):
        l = -1  # irregular column weight
    if not np.all(np.isin(phi[rows, cols], (-1, 1))):
        raise ValueError("entries must be in {0, +1, -1}")
    return _from_edges(n, m, l, rows, cols, phi[rows, cols].astype(np.float64))


def matvec(graph, x):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (graph.n,):
        raise ValueError(f"expected vector of length {graph.n}, got shape {x.shape}")
    return np.bincount(graph.rows, weights=graph.signs * x[graph.cols], minlength=graph.m)


def rmatvec(graph, y):
    y = np.asarray(y, dtype=np.float64)
    if y.shape != (graph.m,):
        raise ValueError(f"expected vector of length {graph.m}, got shape {y.shape}")
    return np.bincount(graph.cols, weights=graph.signs * y[graph.rows], minlength=graph.n)


def submatrix_on_support(graph, states):
    """Keep only the columns flagged in ``states``.

    Columns are renumbered in increasing order; ``col_map[h]`` is the original
    column that became column ``h``.
    """
    states = np.asarray(states)
    if states.shape != (graph.n,):
        raise ValueError(f"states must have length {graph.n}")
    support = np.flatnonzero(states)
    if support.size == 0:
        raise ValueError("empty support")
    h = np.full(graph.n, -1, dtype=np.int64)
    h[support] = np.arange(support.size)
    keep = states[graph.cols] != 0
    return _from_edges(support.size, graph.m, graph.col_weight,
                       graph.rows[keep], h[graph.cols[keep]], graph.signs[keep],
                       col_map=support)


def residual_norm(graph, x_hat, z):
    z = np.asarray(z, dtype=np.float64)
    if z.shape != (graph.m,):
        raise ValueError(f"expected z of length {graph.m}")
    return float(np.linalg.norm(matvec(graph, x_hat) - z))


# -- text serialization -------------------------------------------------------

def dumps(graph):
    seed = -1 if graph.seed is None else graph.seed
    lines = [f"{graph.n} {graph.m} {graph.col_weight} {seed}"]
    for e in graph.row_order:
        lines.append(f"{graph.rows[e]} {graph.cols[e]} {int(graph.signs[e])}")
    return "\n".join(lines) + "\n"


def loads(text):
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty sensing-graph file")
    n, m, l, seed = (int(t) for t in lines[0].split())
    trip = np.array([[int(t) for t in ln.split()] for ln in lines[1:]], dtype=np.int64).reshape(-1, 3)
    rows, cols, signs = trip[:, 0], trip[:, 1], trip[:, 2]
    if np.any((rows < 0) | (rows >= m)) or np.any((cols < 0) | (cols >= n)):
        raise ValueError("edge index out of range")
    if not np.all(np.isin(signs, (-1, 1))):
        raise ValueError("signs must be +1 or -1")
    if len(np.unique(rows * n + cols)) != len(rows):
        raise ValueError("duplicate (row, col) entry")
    return _from_edges(n, m, l, rows, cols, signs.astype(np.float64),
                       seed=None if seed < 0 else seed)


def save(graph, path):
    with open(path, "w", newline="\n") as fh:
        fh.write(dumps(graph))


def load(path):
    with open(path) as fh:
        return loads(fh.read())
