"""Undirected graphs with self-loop normalization and homophily statistics.

The graph is stored twice: a canonical edge list (each undirected edge once,
as ``i < j``) used for homophily counts, and a symmetric CSR adjacency used
by the propagation kernels. Normalization follows the usual self-loop
convention: with ``A_hat = A + I`` and ``d_i`` the raw degree of node ``i``,
the normalized operator has entries ``A_hat_ij / sqrt((d_i+1)(d_j+1))``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .errors import (
    DimensionMismatch,
    DuplicateEdge,
    EmptyEdgeSet,
    IndexOutOfRange,
    SelfLoopInInput,
    SingleGroup,
)


@dataclass(frozen=True)
class Graph:
    """Immutable undirected graph.

    Attributes
    ----------
    n : int
        Node count.
    edges : (m, 2) int ndarray
        Each undirected edge exactly once, canonicalized to ``i < j`` and
        sorted lexicographically.
    adjacency : scipy.sparse.csr_matrix
        Symmetric 0/1 structure holding both directions, no self-loops.
    """

    n: int
    edges: np.ndarray
    adjacency: sparse.csr_matrix = field(repr=False)

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    def degrees(self) -> np.ndarray:
        if self.num_edges == 0:
            return np.zeros(self.n, dtype=np.int64)
        return np.bincount(self.edges.ravel(), minlength=self.n).astype(np.int64)


@dataclass(frozen=True)
class NormalizedAdjacency:
    """Symmetric self-loop-normalized adjacency, kept in CSR form."""

    n: int
    values: sparse.csr_matrix = field(repr=False)


@dataclass(frozen=True)
class SensitiveVector:
    """Binary sensitive attribute in {-1, +1} and its incident vector.

    ``delta`` is the signed, group-size-normalized indicator: positive
    entries are ``1/#{s=+1}``, negative entries ``-1/#{s=-1}``, so that
    ``delta @ M`` is the difference of group means of the columns of ``M``.
    """

    s: np.ndarray
    delta: np.ndarray

    @property
    def n(self) -> int:
        return self.s.shape[0]

    def positive_mask(self) -> np.ndarray:
        return self.s > 0


def build_graph(edge_list, n: int) -> Graph:
    """Validate an edge list and build a :class:`Graph`.

    Parameters
    ----------
    edge_list : sequence of (i, j) pairs or (m, 2) array
        Undirected edges, 0-based. Self-loops, out-of-range indices and
        duplicates (including reversed duplicates) are rejected rather than
        silently fixed, so generator bugs surface early.
    n : int
        Node count; isolated nodes are allowed.
    """
    if n <= 0:
        raise IndexOutOfRange(f"node count must be positive, got {n}")
    edges = np.asarray(edge_list, dtype=np.int64)
    if edges.size == 0:
        edges = edges.reshape(0, 2)
    if edges.ndim != 2 or edges.shape[1] != 2:
        raise DimensionMismatch(f"edge list must be (m, 2), got {edges.shape}")
    if edges.size and (edges.min() < 0 or edges.max() >= n):
        bad = edges[(edges < 0).any(axis=1) | (edges >= n).any(axis=1)][0]
        raise IndexOutOfRange(f"edge {tuple(bad)} out of range for n={n}")
    loops = edges[:, 0] == edges[:, 1]
    if loops.any():
        raise SelfLoopInInput(f"self-loop at node {int(edges[loops][0, 0])}")
    canon = np.sort(edges, axis=1)
    order = np.lexsort((canon[:, 1], canon[:, 0]))
    canon = canon[order]
    if canon.shape[0] > 1:
        dup = (np.diff(canon[:, 0]) == 0) & (np.diff(canon[:, 1]) == 0)
        if dup.any():
            k = int(np.flatnonzero(dup)[0])
            raise DuplicateEdge(f"duplicate edge {tuple(canon[k])}")
    m = canon.shape[0]
    rows = np.concatenate([canon[:, 0], canon[:, 1]])
    cols = np.concatenate([canon[:, 1], canon[:, 0]])
    adj = sparse.csr_matrix(
        (np.ones(2 * m), (rows, cols)), shape=(n, n), dtype=np.float64
    )
    return Graph(n=n, edges=canon, adjacency=adj)


def normalized_adjacency(g: Graph) -> NormalizedAdjacency:
    """Self-loop symmetric normalization of ``g``.

    Entry (i, j) is ``1/sqrt((d_i+1)(d_j+1))`` for edges and the diagonal;
    isolated nodes get a diagonal entry of exactly 1.
    """
    deg = g.degrees().astype(np.float64)
    dinv = 1.0 / np.sqrt(deg + 1.0)
    ar = np.arange(g.n)
    rows = np.concatenate([g.edges[:, 0], g.edges[:, 1], ar])
    cols = np.concatenate([g.edges[:, 1], g.edges[:, 0], ar])
    vals = dinv[rows] * dinv[cols]
    mat = sparse.csr_matrix((vals, (rows, cols)), shape=(g.n, g.n))
    return NormalizedAdjacency(n=g.n, values=mat)


def laplacian(a: NormalizedAdjacency) -> sparse.csr_matrix:
    """Normalized Laplacian ``I - A_norm`` (symmetric, CSR)."""
    return (sparse.identity(a.n, format="csr") - a.values).tocsr()


def spmm(a: NormalizedAdjacency, x: np.ndarray) -> np.ndarray:
    """Sparse-dense product ``A_norm @ x``; cost is O(nnz * d)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] != a.n:
        raise DimensionMismatch(
            f"features must be ({a.n}, d), got {x.shape}"
        )
    return a.values @ x


def _edge_agreement(g: Graph, attr: np.ndarray) -> float:
    if g.num_edges == 0:
        raise EmptyEdgeSet("homophily is undefined on an edgeless graph")
    attr = np.asarray(attr)
    if attr.shape[0] != g.n:
        raise DimensionMismatch(
            f"attribute length {attr.shape[0]} != node count {g.n}"
        )
    same = attr[g.edges[:, 0]] == attr[g.edges[:, 1]]
    return float(np.mean(same))


def label_homophily(g: Graph, y) -> float:
    """Fraction of undirected edges whose endpoints share a label."""
    return _edge_agreement(g, y)


def sensitive_homophily(g: Graph, s) -> float:
    """Fraction of undirected edges whose endpoints share the sensitive attribute."""
    vec = s.s if isinstance(s, SensitiveVector) else s
    return _edge_agreement(g, vec)


def incident_vector(s) -> SensitiveVector:
    """Build the signed group-normalized indicator from a {-1, +1} vector.

    Raises
    ------
    SingleGroup
        If either group is empty.
    """
    s = np.asarray(s)
    if s.ndim != 1:
        raise DimensionMismatch(f"sensitive vector must be 1-D, got shape {s.shape}")
    if not np.isin(s, (-1, 1)).all():
        raise SingleGroup("sensitive attribute must take values in {-1, +1}")
    s = s.astype(np.int64)
    pos = s > 0
    n_pos = int(pos.sum())
    n_neg = s.shape[0] - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleGroup("both sensitive groups must be non-empty")
    delta = np.where(pos, 1.0 / n_pos, -1.0 / n_neg)
    return SensitiveVector(s=s, delta=delta)


def read_edge_list(path) -> list[tuple[int, int]]:
    """Parse the plain-text edge format: one ``i j`` pair per line, 0-based,
    whitespace-separated, ``#`` comments. Validation happens in build_graph."""
    pairs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            parts = body.split()
            if len(parts) != 2:
                raise DimensionMismatch(
                    f"{path}:{lineno}: expected 'i j', got {body!r}"
                )
            pairs.append((int(parts[0]), int(parts[1])))
    return pairs


def write_edge_list(path, g: Graph) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, j in g.edges:
            fh.write(f"{i} {j}\n")
