"""Graph and batch data structures plus normalized adjacency construction.

A :class:`Graph` is a single undirected attributed graph. A
:class:`GraphBatch` is the disjoint union of several graphs sharing one
node index space, with a separate set of inter-graph edges so that
augmentations can wire graphs together without touching the originals.
Everything here is immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, ShapeError

# Edge arrays are (E, 2) int64 with u < v; an empty edge set is (0, 2).
EMPTY_EDGES = np.zeros((0, 2), dtype=np.int64)


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def canonical_edges(edges, num_nodes: int | None = None) -> np.ndarray:
    """Return edges as a (E, 2) int64 array with u < v, lexicographically sorted.

    Raises ShapeError on self-loops, duplicates, or out-of-range endpoints.
    """
    e = np.asarray(edges, dtype=np.int64)
    if e.size == 0:
        return EMPTY_EDGES.copy()
    if e.ndim != 2 or e.shape[1] != 2:
        raise ShapeError(f"edge array must be (E, 2), got {e.shape}")
    lo = np.minimum(e[:, 0], e[:, 1])
    hi = np.maximum(e[:, 0], e[:, 1])
    if np.any(lo == hi):
        raise ShapeError("self-loops are not allowed in stored edge lists")
    if lo.min() < 0:
        raise ShapeError("negative node index in edge list")
    if num_nodes is not None and hi.max() >= num_nodes:
        raise ShapeError(f"edge endpoint {hi.max()} out of range for {num_nodes} nodes")
    order = np.lexsort((hi, lo))
    out = np.stack([lo[order], hi[order]], axis=1)
    if np.any((np.diff(out[:, 0]) == 0) & (np.diff(out[:, 1]) == 0)):
        raise ShapeError("duplicate undirected edge in edge list")
    return out


@dataclass(frozen=True, eq=False)
class Graph:
    """One undirected attributed graph with a class label.

    edges are unordered node pairs stored canonically (u < v, sorted, no
    self-loops, no duplicates); features is a dense (num_nodes, d) float64
    matrix.
    """

    num_nodes: int
    edges: np.ndarray
    features: np.ndarray
    label: int

    def __post_init__(self):
        if self.num_nodes <= 0:
            raise ShapeError("graph must have at least one node")
        if self.label < 0:
            raise ConfigError("label must be a non-negative class id")
        object.__setattr__(self, "edges", _freeze(canonical_edges(self.edges, self.num_nodes)))
        feats = np.asarray(self.features, dtype=np.float64)
        if feats.ndim != 2 or feats.shape[0] != self.num_nodes:
            raise ShapeError(
                f"features must be ({self.num_nodes}, d), got {feats.shape}"
            )
        object.__setattr__(self, "features", _freeze(feats))

    @property
    def num_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def degrees(self) -> np.ndarray:
        """Per-node degree, self-loops excluded."""
        return np.bincount(self.edges.ravel(), minlength=self.num_nodes)


@dataclass(frozen=True, eq=False)
class GraphBatch:
    """Disjoint union of graphs over one concatenated node index space.

    intra_edges are the offset-shifted original edges; inter_edges join
    nodes of different member graphs and start out empty. Augmentations
    produce new batches via :meth:`replace_edges`.
    """

    graphs: tuple[Graph, ...]
    node_offsets: np.ndarray  # (N,) start index of each graph
    membership: np.ndarray    # (total_nodes,) graph index per node
    intra_edges: np.ndarray
    inter_edges: np.ndarray
    features: np.ndarray      # stacked (total_nodes, d)
    labels: np.ndarray        # (N,)

    @property
    def num_graphs(self) -> int:
        return len(self.graphs)

    @property
    def num_nodes(self) -> int:
        return self.membership.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.features.shape[1]

    def graph_sizes(self) -> np.ndarray:
        return np.array([g.num_nodes for g in self.graphs], dtype=np.int64)

    def replace_edges(self, intra_edges=None, inter_edges=None) -> "GraphBatch":
        """New batch with substituted edge sets; nodes/features/labels shared."""
        intra = self.intra_edges if intra_edges is None else _freeze(np.asarray(intra_edges, dtype=np.int64).reshape(-1, 2))
        inter = self.inter_edges if inter_edges is None else _freeze(np.asarray(inter_edges, dtype=np.int64).reshape(-1, 2))
        return GraphBatch(
            graphs=self.graphs,
            node_offsets=self.node_offsets,
            membership=self.membership,
            intra_edges=intra,
            inter_edges=inter,
            features=self.features,
            labels=self.labels,
        )

    def validate(self) -> None:
        """Check batch invariants; raises ShapeError on violation.

        Not run on every construction because augmentations build batches
        in the training hot loop from already-canonical pieces; property
        tests exercise this explicitly.
        """
        if np.any(np.diff(self.node_offsets) <= 0) and self.num_graphs > 1:
            raise ShapeError("node offsets must be strictly increasing")
        expect = np.repeat(np.arange(self.num_graphs), self.graph_sizes())
        if not np.array_equal(self.membership, expect):
            raise ShapeError("membership inconsistent with graph sizes")
        for name, edges in (("intra", self.intra_edges), ("inter", self.inter_edges)):
            if edges.size == 0:
                continue
            if edges.min() < 0 or edges.max() >= self.num_nodes:
                raise ShapeError(f"{name} edge endpoint out of range")
            same = self.membership[edges[:, 0]] == self.membership[edges[:, 1]]
            if name == "intra" and not same.all():
                raise ShapeError("intra edge joins different graphs")
            if name == "inter" and same.any():
                raise ShapeError("inter edge joins nodes of the same graph")
        both = np.concatenate([self.intra_edges, self.inter_edges], axis=0)
        if both.size:
            canonical_edges(both, self.num_nodes)  # raises on duplicates/self-loops


def disjoint_union(graphs: list[Graph]) -> GraphBatch:
    """Stack graphs into one batch with offset-shifted edges and empty inter set."""
    if not graphs:
        raise ConfigError("disjoint_union needs at least one graph")
    dims = {g.feature_dim for g in graphs}
    if len(dims) > 1:
        raise ConfigError(f"graphs mix feature dimensions {sorted(dims)}")
    sizes = np.array([g.num_nodes for g in graphs], dtype=np.int64)
    offsets = np.concatenate([[0], np.cumsum(sizes)[:-1]])
    shifted = [g.edges + off for g, off in zip(graphs, offsets) if g.num_edges]
    intra = np.concatenate(shifted, axis=0) if shifted else EMPTY_EDGES.copy()
    return GraphBatch(
        graphs=tuple(graphs),
        node_offsets=_freeze(offsets),
        membership=_freeze(np.repeat(np.arange(len(graphs)), sizes)),
        intra_edges=_freeze(intra),
        inter_edges=_freeze(EMPTY_EDGES.copy()),
        features=_freeze(np.concatenate([g.features for g in graphs], axis=0)),
        labels=_freeze(np.array([g.label for g in graphs], dtype=np.int64)),
    )


def split_batch(batch: GraphBatch) -> list[Graph]:
    """Recover the member graphs (intra edges only; inter edges are dropped)."""
    out = []
    for i, g in enumerate(batch.graphs):
        off = batch.node_offsets[i]
        mask = batch.membership[batch.intra_edges[:, 0]] == i if batch.intra_edges.size else np.zeros(0, bool)
        edges = batch.intra_edges[mask] - off
        out.append(Graph(g.num_nodes, edges, batch.features[off : off + g.num_nodes], int(batch.labels[i])))
    return out


@dataclass(eq=False)
class SparseAdjacency:
    """Symmetrically normalized adjacency in compressed-row form.

    Values realize D^{-1/2} (A + I) D^{-1/2} with D the degree matrix of
    A + I. CSR and dense materializations are cached lazily; the dense
    form backs a faster propagation route when the matrix is nearly full.
    """

    num_nodes: int
    rows: np.ndarray    # COO rows incl. both edge directions and self-loops
    cols: np.ndarray
    values: np.ndarray
    has_inter: bool = False

    @cached_property
    def csr(self) -> sp.csr_matrix:
        m = sp.coo_matrix(
            (self.values, (self.rows, self.cols)),
            shape=(self.num_nodes, self.num_nodes),
        ).tocsr()
        m.sort_indices()
        return m

    @property
    def indptr(self) -> np.ndarray:
        return self.csr.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.csr.indices

    @property
    def data(self) -> np.ndarray:
        return self.csr.data

    @property
    def nnz(self) -> int:
        return self.rows.shape[0]

    @property
    def density(self) -> float:
        return self.nnz / float(self.num_nodes) ** 2

    @cached_property
    def dense(self) -> np.ndarray:
        out = np.zeros((self.num_nodes, self.num_nodes))
        out[self.rows, self.cols] = self.values
        return out


def normalized_adjacency(batch: GraphBatch, use_inter: bool) -> SparseAdjacency:
    """Build D^{-1/2}(A+I)D^{-1/2} over intra edges, optionally plus inter edges.

    Symmetry is exact: entry (u, v) and (v, u) are the same float product.
    Isolated nodes are covered by the self-loop.
    """
    n = batch.num_nodes
    if use_inter and batch.inter_edges.size:
        edges = np.concatenate([batch.intra_edges, batch.inter_edges], axis=0)
    else:
        edges = batch.intra_edges
    loops = np.arange(n, dtype=np.int64)
    rows = np.concatenate([edges[:, 0], edges[:, 1], loops])
    cols = np.concatenate([edges[:, 1], edges[:, 0], loops])
    deg = np.bincount(rows, minlength=n)  # degree + 1 via the self-loop entries
    inv_sqrt = 1.0 / np.sqrt(deg.astype(np.float64))
    values = inv_sqrt[rows] * inv_sqrt[cols]
    return SparseAdjacency(
        num_nodes=n,
        rows=rows,
        cols=cols,
        values=values,
        has_inter=bool(use_inter and batch.inter_edges.size),
    )
