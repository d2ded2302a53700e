"""Stochastic view generation: inter-graph interplay edges and baselines.

The interplay augmentation wires graphs of a batch together by including
each cross-graph node pair independently with probability p. DropEdge and
AddEdge are the intra-graph baselines (delete existing edges / add absent
ones, each with probability p). All augmentations are pure functions of
(batch, spec, rng) and never mutate their input.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .graphs import EMPTY_EDGES, GraphBatch


class AugKind(enum.Enum):
    GIP = "GIP"
    DROP_EDGE = "DROP_EDGE"
    ADD_EDGE = "ADD_EDGE"
    NONE = "NONE"


@dataclass(frozen=True)
class AugSpec:
    """One augmentation: which mechanism and its edge probability."""

    kind: AugKind
    p: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ConfigError(f"augmentation probability must be in [0, 1], got {self.p}")


@dataclass(frozen=True)
class SeededRng:
    """Deterministic random stream addressed by a 64-bit seed plus a key path.

    ``substream`` derives statistically independent children; the same
    (seed, key) always reproduces a bit-identical stream, so augmentation
    output is a pure function of its inputs.
    """

    seed: int
    key: tuple[int, ...] = ()

    def substream(self, *parts: int) -> "SeededRng":
        return SeededRng(self.seed, self.key + tuple(int(x) for x in parts))

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=self.key)
        return np.random.Generator(np.random.PCG64(ss))


def gip_edges(batch: GraphBatch, p: float, rng: SeededRng) -> GraphBatch:
    """Include each cross-graph node pair independently with probability p.

    Candidate pairs are indexed flat across the Sum_{i<j} |V_i||V_j| space
    and drawn with one vectorized Bernoulli pass; selected flat indices are
    mapped back to global node pairs. Intra edges are untouched.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"probability must be in [0, 1], got {p}")
    sizes = batch.graph_sizes()
    n_graphs = batch.num_graphs
    if n_graphs < 2 or p == 0.0:
        return batch.replace_edges(inter_edges=EMPTY_EDGES.copy())
    i_idx, j_idx = np.triu_indices(n_graphs, k=1)
    block_sizes = sizes[i_idx] * sizes[j_idx]
    starts = np.concatenate([[0], np.cumsum(block_sizes)])
    total = int(starts[-1])
    if p == 1.0:
        chosen = np.arange(total, dtype=np.int64)
    else:
        chosen = np.flatnonzero(rng.generator().random(total) < p)
    if chosen.size == 0:
        return batch.replace_edges(inter_edges=EMPTY_EDGES.copy())
    block = np.searchsorted(starts, chosen, side="right") - 1
    within = chosen - starts[block]
    nj = sizes[j_idx[block]]
    u = batch.node_offsets[i_idx[block]] + within // nj
    v = batch.node_offsets[j_idx[block]] + within % nj
    return batch.replace_edges(inter_edges=np.stack([u, v], axis=1))


def drop_edge(batch: GraphBatch, p: float, rng: SeededRng) -> GraphBatch:
    """Remove each intra-graph edge independently with probability p."""
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"probability must be in [0, 1], got {p}")
    if p == 0.0 or batch.intra_edges.size == 0:
        return batch.replace_edges(inter_edges=EMPTY_EDGES.copy())
    keep = rng.generator().random(batch.intra_edges.shape[0]) >= p
    return batch.replace_edges(intra_edges=batch.intra_edges[keep], inter_edges=EMPTY_EDGES.copy())


def add_edge_intra(batch: GraphBatch, p: float, rng: SeededRng) -> GraphBatch:
    """Add each absent within-graph pair independently with probability p.

    Mirrors the interplay sampling but over the complement of each graph's
    own edge set, so the two mechanisms differ only in candidate pairs.
    """
    if not 0.0 <= p <= 1.0:
        raise ConfigError(f"probability must be in [0, 1], got {p}")
    if p == 0.0:
        return batch.replace_edges(inter_edges=EMPTY_EDGES.copy())
    gen = rng.generator()
    added = []
    for graph, off in zip(batch.graphs, batch.node_offsets):
        n = graph.num_nodes
        if n < 2:
            continue
        iu, iv = np.triu_indices(n, k=1)
        present = np.zeros(iu.shape[0], dtype=bool)
        if graph.num_edges:
            # flat index of pair (u, v), u < v, in triu order
            e = graph.edges
            flat = (e[:, 0] * (2 * n - e[:, 0] - 1)) // 2 + (e[:, 1] - e[:, 0] - 1)
            present[flat] = True
        absent = np.flatnonzero(~present)
        if absent.size == 0:
            continue
        take = absent if p == 1.0 else absent[gen.random(absent.size) < p]
        if take.size:
            added.append(np.stack([iu[take] + off, iv[take] + off], axis=1))
    new_edges = np.concatenate([batch.intra_edges] + added, axis=0) if added else batch.intra_edges
    return batch.replace_edges(intra_edges=new_edges, inter_edges=EMPTY_EDGES.copy())


def apply_augmentation(batch: GraphBatch, spec: AugSpec, rng: SeededRng) -> GraphBatch:
    if spec.kind is AugKind.GIP:
        return gip_edges(batch, spec.p, rng)
    if spec.kind is AugKind.DROP_EDGE:
        return drop_edge(batch, spec.p, rng)
    if spec.kind is AugKind.ADD_EDGE:
        return add_edge_intra(batch, spec.p, rng)
    return batch


def make_views(
    batch: GraphBatch, spec1: AugSpec, spec2: AugSpec, rng: SeededRng
) -> tuple[GraphBatch, GraphBatch]:
    """Two independently augmented copies drawn from per-view substreams."""
    v1 = apply_augmentation(batch, spec1, rng.substream(1))
    v2 = apply_augmentation(batch, spec2, rng.substream(2))
    return v1, v2
